// SPDX-License-Identifier: Apache-2.0

//! Orthonormal operator basis for one and two four-level atoms.
//!
//! Levels are ordered |1⟩ (ground), |2⟩, |3⟩, |4⟩ (excited m = −1, 0, +1).
//! The 16 single-atom elements are
//!
//! ```text
//! Id/2, μ1/2, μ2/2, μ3/2, σ14, σ41, σ13, σ31, σ12, σ21, σ34, σ43, σ42, σ24, σ32, σ23
//! ```
//!
//! with σij = |i⟩⟨j| and
//! μ1 = σ22 − σ33 + σ44 − σ11, μ2 = σ22 − σ33 − σ44 + σ11, μ3 = σ22 + σ33 − σ44 − σ11.
//!
//! A two-atom operator O = Σ c(16i+j) Qi ⊗ Qj is stored as the 16×16 coefficient
//! matrix C with C[(i, j)] = c(16i+j). A product superoperator A ⊗ B then acts
//! as C ↦ A C Bᵀ.

use std::sync::OnceLock;

use nalgebra::{DMatrix, SMatrix, SVector};
use num_complex::Complex64;

use crate::error::{MqcError, Result};

pub type C64 = Complex64;
pub type Mat4 = SMatrix<C64, 4, 4>;
/// Single-atom superoperator, or a two-atom coefficient matrix.
pub type Mat16 = SMatrix<C64, 16, 16>;
pub type Vec16 = SVector<C64, 16>;

pub const DIM: usize = 4;
pub const N1: usize = 16;
pub const N2: usize = 256;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);
pub(crate) const I: C64 = C64::new(0.0, 1.0);

/// Matrix unit σij for 1-based level labels.
pub fn sigma(i: usize, j: usize) -> Mat4 {
    let mut m = Mat4::zeros();
    m[(i - 1, j - 1)] = ONE;
    m
}

/// Hilbert-Schmidt inner product Tr(A† B).
pub fn hs_inner<const N: usize>(a: &SMatrix<C64, N, N>, b: &SMatrix<C64, N, N>) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

#[derive(Debug, Clone)]
pub struct SingleAtomBasis {
    elements: [Mat4; 16],
}

/// Builds the 16 single-atom basis operators in the canonical order.
pub fn build_single_atom_basis() -> SingleAtomBasis {
    let s = sigma;
    let id = Mat4::identity();
    let mu1 = s(2, 2) - s(3, 3) + s(4, 4) - s(1, 1);
    let mu2 = s(2, 2) - s(3, 3) - s(4, 4) + s(1, 1);
    let mu3 = s(2, 2) + s(3, 3) - s(4, 4) - s(1, 1);
    let half = C64::new(0.5, 0.0);
    SingleAtomBasis {
        elements: [
            id * half,
            mu1 * half,
            mu2 * half,
            mu3 * half,
            s(1, 4),
            s(4, 1),
            s(1, 3),
            s(3, 1),
            s(1, 2),
            s(2, 1),
            s(3, 4),
            s(4, 3),
            s(4, 2),
            s(2, 4),
            s(3, 2),
            s(2, 3),
        ],
    }
}

/// Shared immutable single-atom basis.
pub fn basis() -> &'static SingleAtomBasis {
    static B: OnceLock<SingleAtomBasis> = OnceLock::new();
    B.get_or_init(build_single_atom_basis)
}

impl SingleAtomBasis {
    pub fn element(&self, n: usize) -> &Mat4 {
        &self.elements[n]
    }

    pub fn elements(&self) -> &[Mat4; 16] {
        &self.elements
    }

    /// Coefficients cn = Tr(Qn† O).
    pub fn expand(&self, o: &Mat4) -> Vec16 {
        Vec16::from_fn(|n, _| hs_inner(&self.elements[n], o))
    }

    pub fn reconstruct(&self, c: &Vec16) -> Mat4 {
        self.elements
            .iter()
            .zip(c.iter())
            .fold(Mat4::zeros(), |acc, (q, ci)| acc + q * *ci)
    }

    pub fn gram(&self) -> Mat16 {
        Mat16::from_fn(|m, n| hs_inner(&self.elements[m], &self.elements[n]))
    }

    /// Matrix of a linear map f on 4×4 operators: M[k, l] = Tr(Qk† f(Ql)).
    pub fn superoperator<F: Fn(&Mat4) -> Mat4>(&self, f: F) -> Mat16 {
        let mut m = Mat16::zeros();
        for l in 0..N1 {
            let col = self.expand(&f(&self.elements[l]));
            m.set_column(l, &col);
        }
        m
    }

    /// Row vector t with Tr(O) = Σ tn cn.
    pub fn trace_functional(&self) -> Vec16 {
        Vec16::from_fn(|n, _| self.elements[n].trace())
    }

    /// Row vector f with Tr(A O) = Σ fn cn.
    pub fn expectation_functional(&self, a: &Mat4) -> Vec16 {
        Vec16::from_fn(|n, _| (a * self.elements[n]).trace())
    }
}

/// Index m with Qm = Qn†. All elements are real, so adjoints are transposes.
pub const fn adjoint_index(n: usize) -> usize {
    if n < 4 {
        n
    } else if n % 2 == 0 {
        n + 1
    } else {
        n - 1
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TwoAtomBasis;

impl TwoAtomBasis {
    pub fn new() -> Self {
        TwoAtomBasis
    }

    pub const fn index(i: usize, j: usize) -> usize {
        N1 * i + j
    }

    pub const fn pair(n: usize) -> (usize, usize) {
        (n / N1, n % N1)
    }

    /// The 16×16 matrix Qi ⊗ Qj.
    pub fn element(&self, n: usize) -> DMatrix<C64> {
        let (i, j) = Self::pair(n);
        let b = basis();
        b.element(i).kronecker(b.element(j)).resize(N1, N1, ZERO)
    }

    pub fn gram(&self) -> DMatrix<C64> {
        let elems: Vec<_> = (0..N2).map(|n| self.element(n)).collect();
        DMatrix::from_fn(N2, N2, |m, n| {
            elems[m]
                .iter()
                .zip(elems[n].iter())
                .map(|(x, y)| x.conj() * y)
                .sum()
        })
    }

    pub fn expand(&self, o: &DMatrix<C64>) -> Result<TwoAtomVector> {
        if o.nrows() != N1 || o.ncols() != N1 {
            return Err(MqcError::Input(format!(
                "two-atom operator must be 16x16, got {}x{}",
                o.nrows(),
                o.ncols()
            )));
        }
        let b = basis();
        let mut c = Mat16::zeros();
        for i in 0..N1 {
            for j in 0..N1 {
                let (qi, qj) = (b.element(i), b.element(j));
                let mut acc = ZERO;
                for (r1, r2) in (0..DIM).flat_map(|r| (0..DIM).map(move |s| (r, s))) {
                    for (c1, c2) in (0..DIM).flat_map(|r| (0..DIM).map(move |s| (r, s))) {
                        let q = qi[(r1, c1)] * qj[(r2, c2)];
                        if q != ZERO {
                            acc += q.conj() * o[(DIM * r1 + r2, DIM * c1 + c2)];
                        }
                    }
                }
                c[(i, j)] = acc;
            }
        }
        Ok(TwoAtomVector(c))
    }

    pub fn reconstruct(&self, v: &TwoAtomVector) -> DMatrix<C64> {
        let b = basis();
        let mut o = DMatrix::zeros(N1, N1);
        for i in 0..N1 {
            for j in 0..N1 {
                let c = v.0[(i, j)];
                if c != ZERO {
                    o += b.element(i).kronecker(b.element(j)).resize(N1, N1, ZERO) * c;
                }
            }
        }
        o
    }
}

/// Coefficient vector of a two-atom operator, stored as C[(i, j)] = c(16i+j).
#[derive(Debug, Clone, PartialEq)]
pub struct TwoAtomVector(pub Mat16);

impl TwoAtomVector {
    pub fn zeros() -> Self {
        TwoAtomVector(Mat16::zeros())
    }

    /// Product operator A ⊗ B from single-atom coefficient vectors.
    pub fn product(a: &Vec16, b: &Vec16) -> Self {
        TwoAtomVector(a * b.transpose())
    }

    pub fn get(&self, n: usize) -> C64 {
        let (i, j) = TwoAtomBasis::pair(n);
        self.0[(i, j)]
    }

    pub fn to_vec(&self) -> Vec<C64> {
        (0..N2).map(|n| self.get(n)).collect()
    }

    pub fn from_slice(c: &[C64]) -> Result<Self> {
        if c.len() != N2 {
            return Err(MqcError::Input(format!(
                "coefficient vector must have 256 entries, got {}",
                c.len()
            )));
        }
        Ok(TwoAtomVector(Mat16::from_fn(|i, j| c[TwoAtomBasis::index(i, j)])))
    }

    /// Coefficients of O† given those of O.
    pub fn adjoint(&self) -> Self {
        TwoAtomVector(Mat16::from_fn(|i, j| {
            self.0[(adjoint_index(i), adjoint_index(j))].conj()
        }))
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, x| m.max(x.norm()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn test_single_basis_orthonormal() {
        let g = basis().gram();
        assert!((g - Mat16::identity()).camax() < 1e-14);
    }

    #[test]
    fn test_mu1_normalized() {
        let q = basis().element(1);
        assert_relative_eq!(hs_inner(q, q).re, 1.0, epsilon = 1e-15);
        assert_relative_eq!(q[(0, 0)].re, -0.5);
        assert_relative_eq!(q[(2, 2)].re, -0.5);
    }

    #[test]
    fn test_single_expand_roundtrip() {
        let o = Mat4::from_fn(|i, j| C64::new(i as f64 - 0.3 * j as f64, (i * j) as f64 + 0.1));
        let b = basis();
        let back = b.reconstruct(&b.expand(&o));
        assert!((back - o).camax() < 1e-14);
    }

    #[test]
    fn test_adjoint_index_involution() {
        for n in 0..N1 {
            assert_eq!(adjoint_index(adjoint_index(n)), n);
            let b = basis();
            assert_eq!(b.element(n).adjoint(), *b.element(adjoint_index(n)));
        }
    }

    #[test]
    fn test_two_atom_unit_vector() {
        let tb = TwoAtomBasis::new();
        let o = tb.element(TwoAtomBasis::index(5, 0));
        let v = tb.expand(&o).unwrap();
        for n in 0..N2 {
            let expect = if n == TwoAtomBasis::index(5, 0) { 1.0 } else { 0.0 };
            assert!((v.get(n) - C64::new(expect, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn test_expand_rejects_wrong_shape() {
        let tb = TwoAtomBasis::new();
        assert!(tb.expand(&DMatrix::zeros(4, 4)).is_err());
    }

    #[test]
    fn test_index_map_bijective() {
        for n in 0..N2 {
            let (i, j) = TwoAtomBasis::pair(n);
            assert_eq!(TwoAtomBasis::index(i, j), n);
        }
    }
}
