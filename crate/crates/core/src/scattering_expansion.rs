// SPDX-License-Identifier: Apache-2.0

//! Laplace-domain perturbative solution for the two-atom state, carrying pulse
//! phases and dipole-tensor factors symbolically.
//!
//! The n-th order state is
//!
//! ```text
//! Q(n)(z1, z2) = Σ_{p=0..n} G(z2) [V G(z2)]^{n−p} R2 G(z1) [V G(z1)]^p R1 Q(0)
//! ```
//!
//! with G(z) the pair resolvent of the free dynamics. Phases enter through the
//! kick harmonics, e^{i(a φ11 + b φ21 + c φ12 + d φ22)} with φjα the phase of
//! pulse j at atom α. Tensor factors enter through V = Σ Tkl A_kl + T*kl B_kl.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::dipole_coupling::{
    interaction_terms, interaction_terms_gamma_zeroed, CouplingTensor, InteractionPart,
    InteractionTerms,
};
use crate::error::{MqcError, Result};
use crate::operator_basis::{basis, sigma, TwoAtomVector, C64, ONE};
use crate::single_atom_dynamics::{
    kick_harmonics, sector_projectors, KickDecomposition, PolarizationChannel, POLE_EPS,
};
use crate::superoperator::KronSum;

/// Relative size below which a stationary component counts as absent.
pub const POLE_TOL: f64 = 1e-11;

/// One factor of a tensor monomial: Tkl or its conjugate T*kl.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TagFactor {
    T(u8, u8),
    Conj(u8, u8),
}

impl TagFactor {
    /// The 18 factors in canonical order.
    pub fn all() -> [TagFactor; 18] {
        let mut out = [TagFactor::T(0, 0); 18];
        for k in 0..3u8 {
            for l in 0..3u8 {
                out[(3 * k + l) as usize] = TagFactor::T(k, l);
                out[(9 + 3 * k + l) as usize] = TagFactor::Conj(k, l);
            }
        }
        out
    }

    /// Position in [`TagFactor::all`].
    pub fn slot(self) -> usize {
        match self {
            TagFactor::T(k, l) => (3 * k + l) as usize,
            TagFactor::Conj(k, l) => (9 + 3 * k + l) as usize,
        }
    }

    pub fn indices(self) -> (usize, usize) {
        match self {
            TagFactor::T(k, l) | TagFactor::Conj(k, l) => (k as usize, l as usize),
        }
    }

    pub fn is_conj(self) -> bool {
        matches!(self, TagFactor::Conj(..))
    }

    pub fn value(self, tensor: &CouplingTensor) -> C64 {
        let (k, l) = self.indices();
        let t = tensor.t[(k, l)];
        if self.is_conj() {
            t.conj()
        } else {
            t
        }
    }

    pub fn terms(self, terms: &InteractionTerms) -> &crate::dipole_coupling::TagTerms {
        let (k, l) = self.indices();
        if self.is_conj() {
            &terms.s[k][l]
        } else {
            &terms.t[k][l]
        }
    }
}

impl fmt::Display for TagFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const AX: [char; 3] = ['x', 'y', 'z'];
        let (k, l) = self.indices();
        if self.is_conj() {
            write!(f, "T*{}{}", AX[k], AX[l])
        } else {
            write!(f, "T{}{}", AX[k], AX[l])
        }
    }
}

/// Product of at most two tensor factors, kept sorted.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct TensorTag(Vec<TagFactor>);

impl TensorTag {
    pub fn one() -> Self {
        TensorTag(Vec::new())
    }

    pub fn from_factors(mut f: Vec<TagFactor>) -> Self {
        f.sort();
        TensorTag(f)
    }

    pub fn factors(&self) -> &[TagFactor] {
        &self.0
    }

    pub fn degree(&self) -> usize {
        self.0.len()
    }

    pub fn times(&self, f: TagFactor) -> Self {
        let mut v = self.0.clone();
        v.push(f);
        TensorTag::from_factors(v)
    }

    /// True for T·T* products, whose carrier phases cancel.
    pub fn is_mixed_pair(&self) -> bool {
        self.0.len() == 2 && self.0[0].is_conj() != self.0[1].is_conj()
    }

    pub fn value(&self, tensor: &CouplingTensor) -> C64 {
        self.0.iter().fold(ONE, |acc, f| acc * f.value(tensor))
    }
}

/// Phase exponents (a, b, c, d) of e^{i(a φ11 + b φ21 + c φ12 + d φ22)} and a tensor tag.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PhaseMonomial {
    pub exps: [i32; 4],
    pub tag: TensorTag,
}

impl PhaseMonomial {
    pub fn trivial() -> Self {
        PhaseMonomial { exps: [0; 4], tag: TensorTag::one() }
    }

    /// Index into `exps` for pulse j (1 or 2) acting on atom (0 or 1).
    pub fn slot(pulse: u8, atom: usize) -> usize {
        2 * atom + (pulse as usize - 1)
    }

    /// Net per-atom exponents (a + b, c + d).
    pub fn atom_totals(&self) -> (i32, i32) {
        (self.exps[0] + self.exps[1], self.exps[2] + self.exps[3])
    }

    /// Modulation order of φ21 = φ2 − φ1 for a surviving monomial.
    pub fn modulation_order(&self) -> i32 {
        self.exps[1] + self.exps[3]
    }

    /// Position phases cancel on each atom.
    pub fn phases_survive(&self) -> bool {
        self.atom_totals() == (0, 0)
    }
}

/// Coefficient vectors indexed by phase monomial.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PhaseTaggedVector {
    terms: BTreeMap<PhaseMonomial, TwoAtomVector>,
}

/// Stationary (global ground) sector and the decaying pair sectors.
pub fn pair_sectors() -> &'static [(f64, KronSum); 5] {
    static S: OnceLock<[(f64, KronSum); 5]> = OnceLock::new();
    S.get_or_init(|| {
        let p = sector_projectors();
        let mut out: [(f64, KronSum); 5] = Default::default();
        for (idx, slot) in out.iter_mut().enumerate() {
            slot.0 = 0.5 * idx as f64;
        }
        for (ra, pa) in p.iter() {
            for (rb, pb) in p.iter() {
                let idx = ((ra + rb) * 2.0).round() as usize;
                out[idx].1.push(ONE, *pa, *pb);
            }
        }
        out
    })
}

/// Pair resolvent Σ Πμ/(z + μγ) on a state coefficient vector.
///
/// At z = 0 the stationary sector is excised; a non-negligible stationary
/// component there is a pole error.
pub fn pair_resolvent(v: &TwoAtomVector, z: C64, gamma: f64) -> Result<TwoAtomVector> {
    let sectors = pair_sectors();
    let mut out = TwoAtomVector::zeros();
    for (rate, proj) in sectors.iter() {
        let x = proj.apply(v);
        let denom = z + rate * gamma;
        if denom.norm() < POLE_EPS {
            let norm = x.max_abs();
            if norm > POLE_TOL * v.max_abs().max(f64::MIN_POSITIVE) {
                return Err(MqcError::Pole { norm });
            }
            continue;
        }
        out.0 += x.0 / denom;
    }
    Ok(out)
}

/// Options for [`scattering_solution`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpansionOptions {
    pub gamma: f64,
    /// Include interaction insertions between the pulses (full p-sum).
    pub interpulse_interaction: bool,
    /// Replace T by iΩ.
    pub gamma_zeroed: bool,
    pub part: InteractionPart,
    /// If set, drop monomials that cannot survive with this modulation order.
    pub harmonic: Option<i32>,
}

impl Default for ExpansionOptions {
    fn default() -> Self {
        ExpansionOptions {
            gamma: 1.0,
            interpulse_interaction: true,
            gamma_zeroed: false,
            part: InteractionPart::Full,
            harmonic: None,
        }
    }
}

impl ExpansionOptions {
    pub fn terms(&self) -> &'static InteractionTerms {
        if self.gamma_zeroed {
            interaction_terms_gamma_zeroed()
        } else {
            interaction_terms()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplacePoint {
    pub z1: C64,
    pub z2: C64,
}

impl LaplacePoint {
    pub fn new(z1: C64, z2: C64) -> Result<Self> {
        if z1.re < 0.0 || z2.re < 0.0 {
            return Err(MqcError::Input("Laplace variables need Re z >= 0".into()));
        }
        Ok(LaplacePoint { z1, z2 })
    }
}

impl PhaseTaggedVector {
    pub fn new() -> Self {
        Self::default()
    }

    /// Global ground state |1⟩⟨1| ⊗ |1⟩⟨1| with the trivial monomial.
    pub fn initial_vector() -> Self {
        let g = basis().expand(&sigma(1, 1));
        let mut out = Self::new();
        out.insert(PhaseMonomial::trivial(), TwoAtomVector::product(&g, &g));
        out
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&PhaseMonomial, &TwoAtomVector)> {
        self.terms.iter()
    }

    pub fn get(&self, m: &PhaseMonomial) -> Option<&TwoAtomVector> {
        self.terms.get(m)
    }

    /// Adds v to the entry for m, merging duplicates.
    pub fn insert(&mut self, m: PhaseMonomial, v: TwoAtomVector) {
        if v.max_abs() == 0.0 {
            return;
        }
        match self.terms.get_mut(&m) {
            Some(x) => x.0 += v.0,
            None => {
                self.terms.insert(m, v);
            }
        }
    }

    pub fn merge(&mut self, other: PhaseTaggedVector) {
        for (m, v) in other.terms {
            self.insert(m, v);
        }
    }

    pub fn filter<F: Fn(&PhaseMonomial) -> bool>(&self, keep: F) -> Self {
        PhaseTaggedVector {
            terms: self.terms.iter().filter(|(m, _)| keep(m)).map(|(m, v)| (m.clone(), v.clone())).collect(),
        }
    }

    /// Sum over monomials with all phases set to zero and tags evaluated.
    pub fn total(&self, tensor: Option<&CouplingTensor>) -> TwoAtomVector {
        let mut out = TwoAtomVector::zeros();
        for (m, v) in &self.terms {
            let w = match tensor {
                Some(t) => m.tag.value(t),
                None if m.tag.degree() == 0 => ONE,
                None => continue,
            };
            out.0 += v.0 * w;
        }
        out
    }

    /// Replaces tensor tags by their numeric values for a fixed configuration.
    pub fn evaluate_tags(&self, tensor: &CouplingTensor) -> Self {
        let mut out = Self::new();
        for (m, v) in &self.terms {
            let w = m.tag.value(tensor);
            out.insert(PhaseMonomial { exps: m.exps, tag: TensorTag::one() }, TwoAtomVector(v.0 * w));
        }
        out
    }

    /// Applies pulse j with harmonics R[p] on both atoms.
    pub fn apply_kick<F: Fn(&PhaseMonomial) -> bool>(
        &self,
        pulse: u8,
        kick: &KickDecomposition,
        keep: F,
    ) -> Result<Self> {
        if pulse != 1 && pulse != 2 {
            return Err(MqcError::Input(format!("pulse label must be 1 or 2, got {pulse}")));
        }
        let (s0, s1) = (PhaseMonomial::slot(pulse, 0), PhaseMonomial::slot(pulse, 1));
        let mut out = Self::new();
        for (m, v) in &self.terms {
            for p in -2..=2 {
                for q in -2..=2 {
                    let mut exps = m.exps;
                    exps[s0] += p;
                    exps[s1] += q;
                    let next = PhaseMonomial { exps, tag: m.tag.clone() };
                    if !keep(&next) {
                        continue;
                    }
                    let x = kick.harmonic(p) * v.0 * kick.harmonic(q).transpose();
                    if x.camax() == 0.0 {
                        continue;
                    }
                    let (ta, tb) = next.atom_totals();
                    if ta.abs() > 2 || tb.abs() > 2 {
                        return Err(MqcError::Invariant(format!(
                            "phase harmonic bound exceeded: {:?}",
                            next.exps
                        )));
                    }
                    out.insert(next, TwoAtomVector(x));
                }
            }
        }
        Ok(out)
    }

    pub fn apply_resolvent(&self, z: C64, gamma: f64) -> Result<Self> {
        let mut out = Self::new();
        for (m, v) in &self.terms {
            out.insert(m.clone(), pair_resolvent(v, z, gamma)?);
        }
        Ok(out)
    }

    /// Multiplies by V, expanding it over its tensor factors.
    pub fn apply_interaction(&self, terms: &InteractionTerms, part: InteractionPart) -> Result<Self> {
        let factors: Vec<(TagFactor, KronSum)> =
            TagFactor::all().iter().map(|f| (*f, f.terms(terms).part(part))).collect();
        let mut out = Self::new();
        for (m, v) in &self.terms {
            if m.tag.degree() >= 2 {
                return Err(MqcError::Invariant(
                    "tensor degree would exceed two (double scattering cap)".into(),
                ));
            }
            for (f, k) in &factors {
                out.insert(PhaseMonomial { exps: m.exps, tag: m.tag.times(*f) }, k.apply(v));
            }
        }
        Ok(out)
    }
}

/// Monomial filter used between the two pulses and after the second one.
fn harmonic_filter(harmonic: Option<i32>, pulse: u8) -> impl Fn(&PhaseMonomial) -> bool {
    move |m: &PhaseMonomial| match (harmonic, pulse) {
        (None, _) => true,
        (Some(l), 1) => m.exps[0] + m.exps[2] == -l,
        (Some(l), _) => m.phases_survive() && m.modulation_order() == l,
    }
}

/// Perturbative solution of order n ∈ {0, 2}.
pub fn scattering_solution(
    n: usize,
    point: LaplacePoint,
    area: f64,
    channel: PolarizationChannel,
    opts: &ExpansionOptions,
) -> Result<PhaseTaggedVector> {
    if n != 0 && n != 2 {
        return Err(MqcError::Input(format!("expansion order must be 0 or 2, got {n}")));
    }
    let k1 = kick_harmonics(area, channel.pulse_polarization(1));
    let k2 = kick_harmonics(area, channel.pulse_polarization(2));
    let terms = opts.terms();
    let after1 = PhaseTaggedVector::initial_vector().apply_kick(1, &k1, harmonic_filter(opts.harmonic, 1))?;
    let ps: Vec<usize> = if opts.interpulse_interaction { (0..=n).collect() } else { vec![0] };
    let mut total = PhaseTaggedVector::new();
    for p in ps {
        let mut x = after1.apply_resolvent(point.z1, opts.gamma)?;
        for _ in 0..p {
            x = x.apply_interaction(terms, opts.part)?.apply_resolvent(point.z1, opts.gamma)?;
        }
        x = x.apply_kick(2, &k2, harmonic_filter(opts.harmonic, 2))?;
        x = x.apply_resolvent(point.z2, opts.gamma)?;
        for _ in 0..(n - p) {
            x = x.apply_interaction(terms, opts.part)?.apply_resolvent(point.z2, opts.gamma)?;
        }
        total.merge(x);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator_basis::TwoAtomBasis;
    use approx::assert_relative_eq;

    #[test]
    fn test_initial_vector() {
        let v = PhaseTaggedVector::initial_vector();
        assert_eq!(v.len(), 1);
        let c = v.get(&PhaseMonomial::trivial()).unwrap();
        assert_relative_eq!(c.get(TwoAtomBasis::index(0, 0)).re, 0.25, epsilon = 1e-15);
    }

    #[test]
    fn test_first_kick_has_no_second_harmonic() {
        let k = kick_harmonics(0.8, crate::single_atom_dynamics::Polarization::X);
        let v = PhaseTaggedVector::initial_vector().apply_kick(1, &k, |_| true).unwrap();
        for (m, _) in v.iter() {
            assert!(m.exps[0].abs() <= 1 && m.exps[2].abs() <= 1, "{:?}", m.exps);
        }
        assert_eq!(v.len(), 9);
    }

    #[test]
    fn test_zero_area_kick_is_identity() {
        let k = kick_harmonics(0.0, crate::single_atom_dynamics::Polarization::Y);
        let v0 = PhaseTaggedVector::initial_vector();
        assert_eq!(v0.apply_kick(2, &k, |_| true).unwrap(), v0);
    }

    #[test]
    fn test_pair_sectors_complete() {
        let v = PhaseTaggedVector::initial_vector().total(None);
        let mut sum = TwoAtomVector::zeros();
        for (_, p) in pair_sectors().iter() {
            sum.0 += p.apply(&v).0;
        }
        assert!((sum.0 - v.0).camax() < 1e-15);
    }

    #[test]
    fn test_resolvent_ground_is_one_over_z() {
        let v = PhaseTaggedVector::initial_vector().total(None);
        let z = C64::new(0.3, 2.0);
        let r = pair_resolvent(&v, z, 1.0).unwrap();
        assert!((r.0 - v.0 / z).camax() < 1e-15);
        assert!(matches!(pair_resolvent(&v, C64::new(0.0, 0.0), 1.0), Err(MqcError::Pole { .. })));
    }

    #[test]
    fn test_interaction_degree_cap() {
        let terms = interaction_terms();
        let mut v = PhaseTaggedVector::new();
        v.insert(PhaseMonomial::trivial(), TwoAtomVector(crate::operator_basis::Mat16::identity()));
        let once = v.apply_interaction(terms, InteractionPart::Full).unwrap();
        assert!(once.iter().all(|(m, _)| m.tag.degree() == 1));
        let twice = once.apply_interaction(terms, InteractionPart::Full).unwrap();
        assert!(twice.iter().all(|(m, _)| m.tag.degree() == 2));
        assert!(twice.apply_interaction(terms, InteractionPart::Full).is_err());
    }

    #[test]
    fn test_tag_canonical_order() {
        let a = TensorTag::one().times(TagFactor::Conj(0, 1)).times(TagFactor::T(2, 2));
        let b = TensorTag::one().times(TagFactor::T(2, 2)).times(TagFactor::Conj(0, 1));
        assert_eq!(a, b);
        assert!(a.is_mixed_pair());
    }

    #[test]
    fn test_order_zero_has_no_tags() {
        let pt = LaplacePoint::new(C64::new(0.5, 0.1), C64::new(0.2, 0.0)).unwrap();
        let s = scattering_solution(0, pt, 0.6, PolarizationChannel::Parallel, &ExpansionOptions::default()).unwrap();
        assert!(s.iter().all(|(m, _)| m.tag.degree() == 0));
        let w = crate::spectra::detection_functional(crate::spectra::DetectionDirection::X);
        let l2: C64 = s
            .iter()
            .filter(|(m, _)| m.modulation_order().abs() == 2 && m.phases_survive())
            .map(|(_, v)| crate::spectra::pairing(&w, &v.0))
            .sum();
        assert!(l2.norm() < 1e-15);
    }

    #[test]
    fn test_invalid_order() {
        let pt = LaplacePoint::new(ONE, ONE).unwrap();
        assert!(scattering_solution(1, pt, 0.1, PolarizationChannel::Parallel, &ExpansionOptions::default()).is_err());
    }
}
