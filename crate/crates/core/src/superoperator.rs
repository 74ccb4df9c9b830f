// SPDX-License-Identifier: Apache-2.0

//! Two-atom superoperators stored as sums of Kronecker products.
//!
//! A term A ⊗ B acts on a coefficient matrix as C ↦ A C Bᵀ, which costs two
//! 16×16 products instead of one dense 256×256 product.

use nalgebra::DMatrix;

use crate::operator_basis::{Mat16, TwoAtomVector, C64, N1, N2, ZERO};

#[derive(Debug, Clone, PartialEq)]
pub struct KronTerm {
    pub a: Mat16,
    /// Stored transposed, ready for right multiplication.
    pub bt: Mat16,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KronSum {
    terms: Vec<KronTerm>,
}

impl KronSum {
    pub fn new() -> Self {
        KronSum { terms: Vec::new() }
    }

    pub fn single(a: Mat16, b: Mat16) -> Self {
        KronSum { terms: vec![KronTerm { a, bt: b.transpose() }] }
    }

    pub fn terms(&self) -> &[KronTerm] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn push(&mut self, coef: C64, a: Mat16, b: Mat16) {
        self.terms.push(KronTerm { a: a * coef, bt: b.transpose() });
    }

    pub fn add_scaled(&mut self, other: &KronSum, coef: C64) {
        for t in &other.terms {
            self.terms.push(KronTerm { a: t.a * coef, bt: t.bt });
        }
    }

    pub fn scaled(&self, coef: C64) -> KronSum {
        let mut out = KronSum::new();
        out.add_scaled(self, coef);
        out
    }

    /// Merges terms that share the same right factor.
    pub fn compress(&self) -> KronSum {
        let mut out: Vec<KronTerm> = Vec::new();
        for t in &self.terms {
            match out.iter_mut().find(|o| o.bt == t.bt) {
                Some(o) => o.a += t.a,
                None => out.push(t.clone()),
            }
        }
        out.retain(|t| t.a.camax() > 0.0);
        KronSum { terms: out }
    }

    pub fn apply_mat(&self, c: &Mat16) -> Mat16 {
        let mut out = Mat16::zeros();
        for t in &self.terms {
            out += t.a * c * t.bt;
        }
        out
    }

    pub fn apply(&self, v: &TwoAtomVector) -> TwoAtomVector {
        TwoAtomVector(self.apply_mat(&v.0))
    }

    /// Hilbert-Schmidt adjoint: (A ⊗ B)† = A† ⊗ B†.
    pub fn adjoint(&self) -> KronSum {
        KronSum {
            terms: self
                .terms
                .iter()
                .map(|t| KronTerm { a: t.a.adjoint(), bt: t.bt.adjoint() })
                .collect(),
        }
    }

    /// Dense 256×256 matrix in the index n = 16i + j.
    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::from_element(N2, N2, ZERO);
        for t in &self.terms {
            let b = t.bt.transpose();
            for i in 0..N1 {
                for j in 0..N1 {
                    let aij = t.a[(i, j)];
                    if aij == ZERO {
                        continue;
                    }
                    for k in 0..N1 {
                        for l in 0..N1 {
                            m[(N1 * i + k, N1 * j + l)] += aij * b[(k, l)];
                        }
                    }
                }
            }
        }
        m
    }
}

/// Applies a dense 256×256 superoperator to a coefficient vector.
pub fn apply_dense(m: &DMatrix<C64>, v: &TwoAtomVector) -> TwoAtomVector {
    let x = nalgebra::DVector::from_vec(v.to_vec());
    let y = m * x;
    TwoAtomVector::from_slice(y.as_slice()).expect("length 256")
}
