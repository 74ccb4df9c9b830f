// SPDX-License-Identifier: Apache-2.0

//! Retarded dipole-dipole coupling tensor and the two-atom interaction
//! superoperator.
//!
//! ```text
//! T(ξ, n) = (3γ/4) e^{−iξ} [ (i/ξ)(I − nn) + (1/ξ² − i/ξ³)(I − 3nn) ],   Γ = Re T,  Ω = Im T
//! ```
//!
//! Acting on two-atom states, the interaction summed over both pair orderings
//! (α, β) ∈ {(1, 2), (2, 1)} reads
//!
//! ```text
//! Lint ρ = Σ Tkl (Dβk ρ Dαl† − ρ Dαl† Dβk) + Σ T*kl (Dαk ρ Dβl† − Dβl† Dαk ρ)
//! ```
//!
//! The sandwich terms form V⁽²⁾ (collective decay, weight 2Γ after summing
//! orderings); the one-sided terms form V⁽¹⁾.

use std::sync::OnceLock;

use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{MqcError, Result};
use crate::operator_basis::{basis, Mat16, C64, I, ONE};
use crate::single_atom_dynamics::dipole_components;
use crate::superoperator::KronSum;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    pub xi: f64,
    pub theta: f64,
    pub phi: f64,
}

impl Configuration {
    pub fn new(xi: f64, theta: f64, phi: f64) -> Result<Self> {
        if !(xi > 0.0 && xi.is_finite()) {
            return Err(MqcError::Singular(xi));
        }
        if !(theta.is_finite() && phi.is_finite()) {
            return Err(MqcError::Input("configuration angles must be finite".into()));
        }
        Ok(Configuration { xi, theta, phi })
    }

    /// Unit vector along the interatomic axis.
    pub fn unit_vector(&self) -> Vector3<f64> {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        Vector3::new(st * cp, st * sp, ct)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum TensorMode {
    #[default]
    Exact,
    FarField,
    NearField,
}

impl std::str::FromStr for TensorMode {
    type Err = MqcError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "exact" => Ok(TensorMode::Exact),
            "far_field" | "far" => Ok(TensorMode::FarField),
            "near_field" | "near" => Ok(TensorMode::NearField),
            other => Err(MqcError::Input(format!("unknown tensor mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingTensor {
    pub t: Matrix3<C64>,
}

impl CouplingTensor {
    pub fn gamma(&self) -> Matrix3<f64> {
        self.t.map(|x| x.re)
    }

    pub fn omega(&self) -> Matrix3<f64> {
        self.t.map(|x| x.im)
    }

    /// T ↦ iΩ, removing collective decay.
    pub fn gamma_zeroed(&self) -> CouplingTensor {
        CouplingTensor { t: self.t.map(|x| C64::new(0.0, x.im)) }
    }
}

pub fn coupling_tensor(config: &Configuration, mode: TensorMode, gamma: f64) -> Result<CouplingTensor> {
    let xi = config.xi;
    if !(xi > 0.0 && xi.is_finite()) {
        return Err(MqcError::Singular(xi));
    }
    let n = config.unit_vector();
    let nn = n * n.transpose();
    let id = Matrix3::<f64>::identity();
    let transverse = (id - nn).map(|x| C64::new(x, 0.0));
    let static_part = (id - nn * 3.0).map(|x| C64::new(x, 0.0));
    let pref = 0.75 * gamma;
    let t = match mode {
        TensorMode::Exact => {
            let phase = C64::from_polar(pref, -xi);
            (transverse * (I / xi) + static_part * C64::new(1.0 / (xi * xi), -1.0 / xi.powi(3))) * phase
        }
        TensorMode::FarField => transverse * (C64::from_polar(pref, -xi) * I / xi),
        TensorMode::NearField => static_part * C64::new(0.0, -pref / xi.powi(3)),
    };
    Ok(CouplingTensor { t })
}

/// Which part of the interaction to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InteractionPart {
    Full,
    V1,
    V2,
}

/// Superoperators multiplying one tensor element, split into V⁽¹⁾ and V⁽²⁾ parts.
#[derive(Debug, Clone, Default)]
pub struct TagTerms {
    pub v1: KronSum,
    pub v2: KronSum,
}

impl TagTerms {
    pub fn part(&self, part: InteractionPart) -> KronSum {
        match part {
            InteractionPart::Full => {
                let mut k = self.v1.clone();
                k.add_scaled(&self.v2, ONE);
                k
            }
            InteractionPart::V1 => self.v1.clone(),
            InteractionPart::V2 => self.v2.clone(),
        }
    }

    fn combine(a: &TagTerms, ca: f64, b: &TagTerms, cb: f64) -> TagTerms {
        let mut v1 = a.v1.scaled(C64::new(ca, 0.0));
        v1.add_scaled(&b.v1, C64::new(cb, 0.0));
        let mut v2 = a.v2.scaled(C64::new(ca, 0.0));
        v2.add_scaled(&b.v2, C64::new(cb, 0.0));
        TagTerms { v1: v1.compress(), v2: v2.compress() }
    }
}

/// Interaction superoperator decomposed as Σ Tkl A_kl + Σ T*kl B_kl.
#[derive(Debug, Clone)]
pub struct InteractionTerms {
    /// A_kl, multiplying Tkl.
    pub t: [[TagTerms; 3]; 3],
    /// B_kl, multiplying T*kl.
    pub s: [[TagTerms; 3]; 3],
}

fn left(a: &nalgebra::SMatrix<C64, 4, 4>) -> Mat16 {
    basis().superoperator(|q| a * q)
}

fn right(b: &nalgebra::SMatrix<C64, 4, 4>) -> Mat16 {
    basis().superoperator(|q| q * b)
}

impl InteractionTerms {
    pub fn build() -> Self {
        let d = dipole_components();
        let l: Vec<Mat16> = d.iter().map(left).collect();
        let r: Vec<Mat16> = d.iter().map(right).collect();
        let ld: Vec<Mat16> = d.iter().map(|x| left(&x.adjoint())).collect();
        let rd: Vec<Mat16> = d.iter().map(|x| right(&x.adjoint())).collect();
        // Factor on atom 0 and atom 1 for ordering (alpha, beta).
        let pair = |alpha: usize, on_alpha: Mat16, on_beta: Mat16| -> (Mat16, Mat16) {
            if alpha == 0 {
                (on_alpha, on_beta)
            } else {
                (on_beta, on_alpha)
            }
        };
        let mut t: [[TagTerms; 3]; 3] = Default::default();
        let mut s: [[TagTerms; 3]; 3] = Default::default();
        let neg = C64::new(-1.0, 0.0);
        for alpha in 0..2 {
            for k in 0..3 {
                for m in 0..3 {
                    let tt = &mut t[k][m];
                    // Dβk ρ Dαm†
                    let (a, b) = pair(alpha, rd[m], l[k]);
                    tt.v2.push(ONE, a, b);
                    // − ρ Dαm† Dβk
                    let (a, b) = pair(alpha, rd[m], r[k]);
                    tt.v1.push(neg, a, b);
                    let ss = &mut s[k][m];
                    // Dαk ρ Dβm†
                    let (a, b) = pair(alpha, l[k], rd[m]);
                    ss.v2.push(ONE, a, b);
                    // − Dβm† Dαk ρ
                    let (a, b) = pair(alpha, l[k], ld[m]);
                    ss.v1.push(neg, a, b);
                }
            }
        }
        InteractionTerms { t, s }
    }

    /// Decomposition after T ↦ iΩ = (T − T*)/2.
    pub fn gamma_zeroed(&self) -> Self {
        let mut t: [[TagTerms; 3]; 3] = Default::default();
        let mut s: [[TagTerms; 3]; 3] = Default::default();
        for k in 0..3 {
            for m in 0..3 {
                t[k][m] = TagTerms::combine(&self.t[k][m], 0.5, &self.s[k][m], -0.5);
                s[k][m] = TagTerms::combine(&self.s[k][m], 0.5, &self.t[k][m], -0.5);
            }
        }
        InteractionTerms { t, s }
    }

    /// Numeric superoperator for a given tensor.
    pub fn numeric(&self, tensor: &CouplingTensor, part: InteractionPart) -> KronSum {
        let mut out = KronSum::new();
        for k in 0..3 {
            for m in 0..3 {
                let tk = tensor.t[(k, m)];
                out.add_scaled(&self.t[k][m].part(part), tk);
                out.add_scaled(&self.s[k][m].part(part), tk.conj());
            }
        }
        out.compress()
    }
}

/// Shared decomposition of the interaction.
pub fn interaction_terms() -> &'static InteractionTerms {
    static T: OnceLock<InteractionTerms> = OnceLock::new();
    T.get_or_init(InteractionTerms::build)
}

/// Shared decomposition with collective decay removed.
pub fn interaction_terms_gamma_zeroed() -> &'static InteractionTerms {
    static T: OnceLock<InteractionTerms> = OnceLock::new();
    T.get_or_init(|| interaction_terms().gamma_zeroed())
}

/// Dense interaction matrices acting on two-atom state coefficient vectors.
#[derive(Debug, Clone)]
pub struct InteractionMatrices {
    pub v: DMatrix<C64>,
    pub v1: DMatrix<C64>,
    pub v2: DMatrix<C64>,
}

impl InteractionMatrices {
    /// The same maps acting on operators (Hilbert-Schmidt adjoints).
    pub fn heisenberg(&self) -> InteractionMatrices {
        InteractionMatrices {
            v: self.v.adjoint(),
            v1: self.v1.adjoint(),
            v2: self.v2.adjoint(),
        }
    }
}

pub fn interaction_matrices(tensor: &CouplingTensor) -> InteractionMatrices {
    let terms = interaction_terms();
    let v1 = terms.numeric(tensor, InteractionPart::V1).to_dense();
    let v2 = terms.numeric(tensor, InteractionPart::V2).to_dense();
    InteractionMatrices { v: &v1 + &v2, v1, v2 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn test_tensor_axis_z_diagonal() {
        let c = Configuration::new(3.0, 0.0, 0.0).unwrap();
        let t = coupling_tensor(&c, TensorMode::Exact, 1.0).unwrap().t;
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert!(t[(i, j)].norm() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn test_near_field_zz() {
        let theta = 0.4;
        let xi = 0.05;
        let c = Configuration::new(xi, theta, 1.0).unwrap();
        let t = coupling_tensor(&c, TensorMode::NearField, 1.0).unwrap().t;
        let expect = -0.75 * (1.0 - 3.0 * theta.cos().powi(2)) / xi.powi(3);
        assert_relative_eq!(t[(2, 2)].im, expect, max_relative = 1e-13);
        assert_eq!(t[(2, 2)].re, 0.0);
    }

    #[test]
    fn test_far_field_split() {
        let c = Configuration::new(80.3, 1.1, 0.3).unwrap();
        let t = coupling_tensor(&c, TensorMode::FarField, 1.0).unwrap();
        let n = c.unit_vector();
        let tr = Matrix3::identity() - n * n.transpose();
        let g = tr * (0.75 * c.xi.sin() / c.xi);
        let o = tr * (0.75 * c.xi.cos() / c.xi);
        assert!((t.gamma() - g).camax() < 1e-15);
        assert!((t.omega() - o).camax() < 1e-15);
    }

    #[test]
    fn test_zero_distance_is_singular() {
        assert!(Configuration::new(0.0, 0.0, 0.0).is_err());
        let c = Configuration { xi: 0.0, theta: 0.0, phi: 0.0 };
        assert!(matches!(coupling_tensor(&c, TensorMode::Exact, 1.0), Err(MqcError::Singular(_))));
    }

    #[test]
    fn test_gamma_zero_kills_v2() {
        let c = Configuration::new(5.0, 0.7, 2.0).unwrap();
        let t = coupling_tensor(&c, TensorMode::Exact, 1.0).unwrap().gamma_zeroed();
        let m = interaction_matrices(&t);
        assert!(m.v2.camax() < 1e-15);
    }

    #[test]
    fn test_symbolic_gamma_zeroed_matches_numeric() {
        let c = Configuration::new(7.0, 0.3, -1.0).unwrap();
        let t = coupling_tensor(&c, TensorMode::Exact, 1.0).unwrap();
        let a = interaction_terms_gamma_zeroed().numeric(&t, InteractionPart::Full).to_dense();
        let b = interaction_terms().numeric(&t.gamma_zeroed(), InteractionPart::Full).to_dense();
        assert!((a - b).camax() < 1e-14);
    }
}
