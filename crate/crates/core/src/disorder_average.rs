// SPDX-License-Identifier: Apache-2.0

//! Configuration average of phase-tagged states.
//!
//! Terms survive only if the position phases cancel on each atom and the
//! tensor tag is a mixed pair T·T*. The isotropic average of a mixed pair,
//! normalized to the full solid angle, is
//!
//! ```text
//! ⟨Tkl T*mn⟩ = C(ξ̄) [ (2/5) δkl δmn + (1/15)(δkm δln + δkn δlm) ],   C(ξ) = (3γ/4ξ)²
//! ```

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dipole_coupling::TensorMode;
use crate::error::{MqcError, Result};
use crate::operator_basis::{TwoAtomVector, C64};
use crate::scattering_expansion::{PhaseTaggedVector, TagFactor, TensorTag};

/// Radial weight C(ξ) = (3γ/4ξ)² of a mixed pair.
pub fn radial_weight(xi: f64, gamma: f64) -> f64 {
    let c = 0.75 * gamma / xi;
    c * c
}

/// Isotropic part of ⟨Tkl T*mn⟩ without the radial weight.
pub fn isotropic_weight(k: usize, l: usize, m: usize, n: usize) -> f64 {
    let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    0.4 * d(k, l) * d(m, n) + (d(k, m) * d(l, n) + d(k, n) * d(l, m)) / 15.0
}

/// Average of a mixed pair (first factor T, second T*) at mean distance ξ̄.
pub fn pair_average(t: (usize, usize), conj: (usize, usize), xibar: f64, gamma: f64) -> f64 {
    radial_weight(xibar, gamma) * isotropic_weight(t.0, t.1, conj.0, conj.1)
}

/// Average of a degree-2 tag. Pairs of equal type average to zero.
pub fn angular_average(tag: &TensorTag, xibar: f64, gamma: f64) -> Result<C64> {
    if !(xibar > 0.0) {
        return Err(MqcError::Input(format!("mean distance must be positive, got {xibar}")));
    }
    match tag.factors() {
        [a, b] => {
            if a.is_conj() == b.is_conj() {
                return Ok(C64::new(0.0, 0.0));
            }
            let (t, s) = if a.is_conj() { (b, a) } else { (a, b) };
            Ok(C64::new(pair_average(t.indices(), s.indices(), xibar, gamma), 0.0))
        }
        _ => Err(MqcError::Input(format!(
            "angular average needs a degree-2 tag, got degree {}",
            tag.degree()
        ))),
    }
}

/// Weight ⟨f1 f2⟩ for an ordered pair of factors.
pub fn factor_pair_average(f1: TagFactor, f2: TagFactor, xibar: f64, gamma: f64) -> f64 {
    if f1.is_conj() == f2.is_conj() {
        return 0.0;
    }
    let (t, s) = if f1.is_conj() { (f2, f1) } else { (f1, f2) };
    pair_average(t.indices(), s.indices(), xibar, gamma)
}

/// Which real parts of T enter a pair average.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RealPair {
    GammaGamma,
    OmegaOmega,
    GammaOmega,
}

/// ⟨Γkl Γmn⟩ = ⟨Ωkl Ωmn⟩ = ⟨Tkl T*mn⟩/2 and ⟨Γkl Ωmn⟩ = 0.
pub fn gamma_omega_averages(kind: RealPair, kl: (usize, usize), mn: (usize, usize), xibar: f64, gamma: f64) -> f64 {
    match kind {
        RealPair::GammaGamma | RealPair::OmegaOmega => 0.5 * pair_average(kl, mn, xibar, gamma),
        RealPair::GammaOmega => 0.0,
    }
}

/// ⟨1/ξ²⟩ over a uniform window equals 1/(ξlo ξhi), so this is the distance whose
/// radial weight matches the window average.
pub fn window_effective_distance(window: (f64, f64)) -> f64 {
    (window.0 * window.1).sqrt()
}

/// Isotropic averages of products of A = I − nn and B = I − 3nn, indexed [AA, AB, BA, BB].
fn projector_moments(k: usize, l: usize, m: usize, n: usize) -> [f64; 4] {
    let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    let dd = d(k, l) * d(m, n);
    let s = (dd + d(k, m) * d(l, n) + d(k, n) * d(l, m)) / 15.0;
    [dd / 3.0 + s, -dd / 3.0 + 3.0 * s, -dd / 3.0 + 3.0 * s, -dd + 9.0 * s]
}

fn window_mean<F: Fn(f64) -> f64>(f: F, window: (f64, f64)) -> f64 {
    if window.1 == window.0 {
        return f(window.0);
    }
    quadrature::double_exponential::integrate(f, window.0, window.1, 1e-15).integral / (window.1 - window.0)
}

/// Exact ⟨f1 f2⟩ for all ordered factor pairs, with n isotropic and ξ uniform in the window.
///
/// Unlike the mixed-pair formula, this keeps same-type products, whose
/// e^{∓2iξ} phase does not average out exactly over a finite window, and
/// the near-field parts of the tensor.
pub fn window_factor_moments(window: (f64, f64), mode: TensorMode, gamma: f64) -> Result<Vec<C64>> {
    if !(window.0 > 0.0 && window.1 >= window.0 && window.1.is_finite()) {
        return Err(MqcError::Input(format!("invalid distance window {window:?}")));
    }
    // T = g(ξ) [a(ξ) A + b(ξ) B]
    let pref = 0.75 * gamma;
    let ab = move |xi: f64| -> (C64, C64, C64) {
        let phase = C64::from_polar(pref, -xi);
        match mode {
            TensorMode::Exact => (phase, C64::new(0.0, 1.0 / xi), C64::new(1.0 / (xi * xi), -1.0 / xi.powi(3))),
            TensorMode::FarField => (phase, C64::new(0.0, 1.0 / xi), C64::new(0.0, 0.0)),
            TensorMode::NearField => (C64::new(pref, 0.0), C64::new(0.0, 0.0), C64::new(0.0, -1.0 / xi.powi(3))),
        }
    };
    // Radial means of the coefficient products for T·T* and T·T.
    let mut mixed = [C64::new(0.0, 0.0); 4];
    let mut same = [C64::new(0.0, 0.0); 4];
    for idx in 0..4 {
        let (i, j) = (idx / 2, idx % 2);
        let pick = move |xi: f64, conj: bool| {
            let (g, a, b) = ab(xi);
            let u = if i == 0 { a } else { b } * g;
            let v = if j == 0 { a } else { b } * g;
            if conj {
                u * v.conj()
            } else {
                u * v
            }
        };
        mixed[idx] = C64::new(
            window_mean(|x| pick(x, true).re, window),
            window_mean(|x| pick(x, true).im, window),
        );
        same[idx] = C64::new(
            window_mean(|x| pick(x, false).re, window),
            window_mean(|x| pick(x, false).im, window),
        );
    }
    let f = TagFactor::all();
    let mut out = vec![C64::new(0.0, 0.0); f.len() * f.len()];
    for (i, fi) in f.iter().enumerate() {
        for (j, fj) in f.iter().enumerate() {
            let ((k, l), (m, n)) = (fi.indices(), fj.indices());
            let w = projector_moments(k, l, m, n);
            let r = match (fi.is_conj(), fj.is_conj()) {
                (false, false) => same,
                (true, true) => same.map(|c| c.conj()),
                (false, true) => mixed,
                // T*kl Tmn = conj(Tkl T*mn)
                (true, false) => mixed.map(|c| c.conj()),
            };
            out[i * f.len() + j] = (0..4).map(|q| r[q] * w[q]).sum();
        }
    }
    Ok(out)
}

/// Drops monomials that vanish under the configuration average.
pub fn survival_filter(state: &PhaseTaggedVector) -> PhaseTaggedVector {
    state.filter(|m| m.phases_survive() && (m.tag.degree() == 0 || m.tag.is_mixed_pair()))
}

/// Averaged coefficient vectors per modulation order l.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AveragedComponents {
    pub components: BTreeMap<i32, TwoAtomVector>,
}

impl AveragedComponents {
    pub fn get(&self, l: i32) -> Option<&TwoAtomVector> {
        self.components.get(&l)
    }
}

pub fn average_state(state: &PhaseTaggedVector, xibar: f64, gamma: f64) -> Result<AveragedComponents> {
    let mut out = AveragedComponents::default();
    for (m, v) in survival_filter(state).iter() {
        let w = match m.tag.degree() {
            0 => C64::new(1.0, 0.0),
            _ => angular_average(&m.tag, xibar, gamma)?,
        };
        let entry = out.components.entry(m.modulation_order()).or_insert_with(TwoAtomVector::zeros);
        entry.0 += v.0 * w;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scattering_expansion::PhaseMonomial;
    use approx::assert_relative_eq;

    #[test]
    fn test_xxxx_average() {
        let c = radial_weight(80.0, 1.0);
        assert_relative_eq!(pair_average((0, 0), (0, 0), 80.0, 1.0), 8.0 / 15.0 * c, max_relative = 1e-15);
        assert_relative_eq!(pair_average((0, 1), (0, 1), 80.0, 1.0), c / 15.0, max_relative = 1e-15);
        assert_eq!(pair_average((0, 1), (2, 0), 80.0, 1.0), 0.0);
    }

    #[test]
    fn test_equal_type_pairs_vanish() {
        let tag = TensorTag::from_factors(vec![TagFactor::T(0, 0), TagFactor::T(0, 0)]);
        assert_eq!(angular_average(&tag, 80.0, 1.0).unwrap(), C64::new(0.0, 0.0));
        assert!(angular_average(&TensorTag::one(), 80.0, 1.0).is_err());
    }

    #[test]
    fn test_survival_filter_rules() {
        let mut s = PhaseTaggedVector::new();
        let v = TwoAtomVector(crate::operator_basis::Mat16::identity());
        s.insert(PhaseMonomial { exps: [1, 0, 0, 0], tag: TensorTag::one() }, v.clone());
        let mixed = TensorTag::from_factors(vec![TagFactor::T(0, 1), TagFactor::Conj(1, 0)]);
        s.insert(PhaseMonomial { exps: [-1, 1, 0, 0], tag: mixed }, v.clone());
        let same = TensorTag::from_factors(vec![TagFactor::T(0, 1), TagFactor::T(1, 0)]);
        s.insert(PhaseMonomial { exps: [0, 0, 0, 0], tag: same }, v.clone());
        let single = TensorTag::from_factors(vec![TagFactor::T(0, 1)]);
        s.insert(PhaseMonomial { exps: [0, 0, 0, 0], tag: single }, v);
        let f = survival_filter(&s);
        assert_eq!(f.len(), 1);
        assert_eq!(f.iter().next().unwrap().0.modulation_order(), 1);
    }

    #[test]
    fn test_gamma_omega_relations() {
        let t = pair_average((1, 0), (0, 1), 80.0, 1.0);
        assert!(t > 0.0);
        assert_relative_eq!(gamma_omega_averages(RealPair::GammaGamma, (1, 0), (0, 1), 80.0, 1.0), t / 2.0);
        assert_eq!(gamma_omega_averages(RealPair::GammaOmega, (1, 0), (0, 1), 80.0, 1.0), 0.0);
    }

    #[test]
    fn test_window_moments_mixed_far_field() {
        let w = (67.2, 92.8);
        let m = window_factor_moments(w, TensorMode::FarField, 1.0).unwrap();
        let f = TagFactor::all();
        let xe = window_effective_distance(w);
        for (i, fi) in f.iter().enumerate() {
            for (j, fj) in f.iter().enumerate() {
                if !fi.is_conj() && fj.is_conj() {
                    let expect = pair_average(fi.indices(), fj.indices(), xe, 1.0);
                    assert!((m[i * 18 + j] - C64::new(expect, 0.0)).norm() < 1e-14, "{fi} {fj}");
                }
            }
        }
        // A single distance removes the window and the same-type phase does not cancel.
        let p = window_factor_moments((80.0, 80.0), TensorMode::FarField, 1.0).unwrap();
        assert!(p[0].norm() > 1e-5);
    }

    #[test]
    fn test_empty_average() {
        let a = average_state(&PhaseTaggedVector::new(), 80.0, 1.0).unwrap();
        assert!(a.components.is_empty());
    }
}
