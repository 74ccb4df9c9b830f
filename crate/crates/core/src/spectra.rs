// SPDX-License-Identifier: Apache-2.0

//! Detection, 1QC/2QC spectra and closed-form observables.
//!
//! Spectra are evaluated at z1 = i(ω − κω0), z2 = 0 and carry the factor
//! 1/√(2π). Frequencies are detunings in units of γ, and γ = 1 internally.
//!
//! [`ResponseEngine`] precomputes the response as a rational function of z1.
//! Every resolvent G(z1) splits into pair sectors Πμ/(z1 + μγ), so each
//! pathway is a sum of products of such poles with z1-independent
//! coefficients. Coefficients are kept per ordered pair of tensor factors,
//! which serves both the configuration average (contracting with
//! ⟨f1 f2⟩) and single configurations (multiplying numeric tensor values).

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dipole_coupling::{
    interaction_terms, interaction_terms_gamma_zeroed, CouplingTensor, InteractionPart,
};
use crate::disorder_average::{average_state, factor_pair_average, AveragedComponents};
use crate::error::{MqcError, Result};
use crate::operator_basis::{basis, sigma, Mat16, TwoAtomVector, C64, ZERO};
use crate::scattering_expansion::{
    pair_sectors, scattering_solution, ExpansionOptions, LaplacePoint, TagFactor, POLE_TOL,
};
use crate::single_atom_dynamics::{
    cartesian_sigma, kick_harmonics, Polarization, PolarizationChannel, POLE_EPS, SPEED_OF_LIGHT,
};
use crate::superoperator::KronSum;

pub const VACUUM_PERMITTIVITY: f64 = 8.8541878128e-12;
pub const VACUUM_PERMEABILITY: f64 = 1.25663706212e-6;
pub const HBAR: f64 = 1.054571817e-34;

/// Common prefactor of the spectra.
pub fn spectrum_prefactor() -> f64 {
    1.0 / (2.0 * PI).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DetectionDirection {
    X,
    Y,
}

impl DetectionDirection {
    pub const ALL: [DetectionDirection; 2] = [DetectionDirection::X, DetectionDirection::Y];

    /// Excited states whose populations radiate into this direction.
    pub fn emitting_states(self) -> [Polarization; 2] {
        match self {
            DetectionDirection::X => [Polarization::Z, Polarization::Y],
            DetectionDirection::Y => [Polarization::Z, Polarization::X],
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            DetectionDirection::X => "x",
            DetectionDirection::Y => "y",
        }
    }
}

impl FromStr for DetectionDirection {
    type Err = MqcError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "x" => Ok(DetectionDirection::X),
            "y" => Ok(DetectionDirection::Y),
            other => Err(MqcError::Input(format!("detection direction must be x or y, got '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DetectionChannel {
    pub direction: DetectionDirection,
    pub polarization: PolarizationChannel,
}

impl fmt::Display for DetectionChannel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}", self.direction.label(), self.polarization.label())
    }
}

impl FromStr for DetectionChannel {
    type Err = MqcError;

    /// Parses labels such as "y_par" or "x_perp".
    fn from_str(s: &str) -> Result<Self> {
        let (d, p) = s
            .trim()
            .split_once('_')
            .ok_or_else(|| MqcError::Input(format!("channel must look like 'x_par' or 'y_perp', got '{s}'")))?;
        Ok(DetectionChannel { direction: d.parse()?, polarization: p.parse()? })
    }
}

impl DetectionChannel {
    pub fn all() -> [DetectionChannel; 4] {
        use DetectionDirection::*;
        use PolarizationChannel::*;
        [(X, Parallel), (X, Perpendicular), (Y, Parallel), (Y, Perpendicular)]
            .map(|(direction, polarization)| DetectionChannel { direction, polarization })
    }
}

/// Matrix W with ⟨detected intensity⟩ = Σij Wij Cij, summed over both atoms.
pub fn detection_functional(direction: DetectionDirection) -> Mat16 {
    let b = basis();
    let tr = b.trace_functional();
    let mut w = Mat16::zeros();
    for q in direction.emitting_states() {
        let f = b.expectation_functional(&cartesian_sigma(q, q));
        w += f * tr.transpose() + tr * f.transpose();
    }
    w
}

pub fn pairing(w: &Mat16, c: &Mat16) -> C64 {
    w.component_mul(c).sum()
}

pub fn detect(v: &TwoAtomVector, direction: DetectionDirection) -> C64 {
    pairing(&detection_functional(direction), &v.0)
}

pub fn detection_projection(components: &AveragedComponents, direction: DetectionDirection) -> BTreeMap<i32, C64> {
    let w = detection_functional(direction);
    components.components.iter().map(|(l, v)| (*l, pairing(&w, &v.0))).collect()
}

/// Backward action of a Kronecker sum on a functional.
fn pull_back(k: &KronSum, w: &Mat16) -> Mat16 {
    let mut out = Mat16::zeros();
    for t in k.terms() {
        out += t.a.transpose() * w * t.bt.transpose();
    }
    out
}

/// Functional W ∘ G(z) of the pair resolvent, excising the stationary sector at z = 0.
fn pull_back_resolvent(w: &Mat16, z: C64, gamma: f64) -> Mat16 {
    let mut out = Mat16::zeros();
    for (rate, p) in pair_sectors().iter() {
        let d = z + rate * gamma;
        if d.norm() < POLE_EPS {
            continue;
        }
        out += pull_back(p, w) / d;
    }
    out
}

fn kron_apply(a: &Mat16, b: &Mat16, c: &Mat16) -> Mat16 {
    a * c * b.transpose()
}

const NS: usize = 5;
const NF: usize = 18;

/// Σ c_μ/(z+μ) + Σ c_μν/((z+μ)(z+ν)) + Σ c_μνλ/((z+μ)(z+ν)(z+λ)), μ in units of γ/2.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalZ {
    pub one: [C64; NS],
    pub two: [[C64; NS]; NS],
    pub three: [[[C64; NS]; NS]; NS],
}

impl Default for RationalZ {
    fn default() -> Self {
        RationalZ { one: [ZERO; NS], two: [[ZERO; NS]; NS], three: [[[ZERO; NS]; NS]; NS] }
    }
}

impl RationalZ {
    pub fn add_scaled(&mut self, o: &RationalZ, w: C64) {
        for i in 0..NS {
            self.one[i] += o.one[i] * w;
            for j in 0..NS {
                self.two[i][j] += o.two[i][j] * w;
                for k in 0..NS {
                    self.three[i][j][k] += o.three[i][j][k] * w;
                }
            }
        }
    }

    fn max_abs(&self) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..NS {
            m = m.max(self.one[i].norm());
            for j in 0..NS {
                m = m.max(self.two[i][j].norm());
                for k in 0..NS {
                    m = m.max(self.three[i][j][k].norm());
                }
            }
        }
        m
    }

    /// Zeroes coefficients on the stationary sector. Fails if any is not negligible.
    fn excise_stationary(&mut self, scale: f64) -> Result<()> {
        let tol = POLE_TOL * scale.max(f64::MIN_POSITIVE);
        let mut worst: f64 = 0.0;
        let mut check = |c: &mut C64, hit: bool| {
            if hit {
                worst = worst.max(c.norm());
                *c = ZERO;
            }
        };
        for i in 0..NS {
            check(&mut self.one[i], i == 0);
            for j in 0..NS {
                check(&mut self.two[i][j], i == 0 || j == 0);
                for k in 0..NS {
                    check(&mut self.three[i][j][k], i == 0 || j == 0 || k == 0);
                }
            }
        }
        if worst > tol {
            return Err(MqcError::Pole { norm: worst });
        }
        Ok(())
    }

    pub fn eval(&self, z: C64, gamma: f64) -> C64 {
        let inv: [C64; NS] = std::array::from_fn(|i| {
            let d = z + 0.5 * i as f64 * gamma;
            if d.norm() < POLE_EPS {
                ZERO
            } else {
                1.0 / d
            }
        });
        let mut s = ZERO;
        for i in 0..NS {
            s += self.one[i] * inv[i];
            for j in 0..NS {
                s += self.two[i][j] * inv[i] * inv[j];
                for k in 0..NS {
                    s += self.three[i][j][k] * inv[i] * inv[j] * inv[k];
                }
            }
        }
        s
    }
}

/// Which interaction to use in the double-scattering pathways.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum CouplingVariant {
    #[default]
    Full,
    /// T ↦ iΩ.
    GammaZeroed,
}

impl FromStr for CouplingVariant {
    type Err = MqcError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "full" | "avg" => Ok(CouplingVariant::Full),
            "gamma0" | "gamma_zeroed" => Ok(CouplingVariant::GammaZeroed),
            other => Err(MqcError::Input(format!("coupling variant must be full or gamma0, got '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseOptions {
    pub area: f64,
    pub variant: CouplingVariant,
    pub interpulse_interaction: bool,
    pub z2: C64,
}

impl ResponseOptions {
    pub fn new(area: f64) -> Self {
        ResponseOptions { area, variant: CouplingVariant::Full, interpulse_interaction: true, z2: ZERO }
    }
}

/// Demodulated response Ĩ_κ(z1, z2) for one detection channel, resolved by tensor factors.
#[derive(Debug, Clone)]
pub struct ResponseEngine {
    pub kappa: i32,
    pub channel: DetectionChannel,
    pub options: ResponseOptions,
    /// Single scattering.
    pub single: RationalZ,
    /// One interaction insertion per factor slot. Averages to zero.
    pub linear: Vec<RationalZ>,
    /// Double scattering per (first factor, second factor) slot.
    pub pairs: Vec<RationalZ>,
}

impl ResponseEngine {
    pub fn new(kappa: i32, channel: DetectionChannel, options: ResponseOptions) -> Result<Self> {
        if kappa == 0 || kappa.abs() > 2 {
            return Err(MqcError::Input(format!("kappa must be ±1 or ±2, got {kappa}")));
        }
        let gamma = 1.0;
        let terms = match options.variant {
            CouplingVariant::Full => interaction_terms(),
            CouplingVariant::GammaZeroed => interaction_terms_gamma_zeroed(),
        };
        let factors = TagFactor::all();
        let v: Vec<KronSum> = factors.iter().map(|f| f.terms(terms).part(InteractionPart::Full)).collect();
        let sectors = pair_sectors();
        let k1 = kick_harmonics(options.area, channel.polarization.pulse_polarization(1));
        let k2 = kick_harmonics(options.area, channel.polarization.pulse_polarization(2));
        let g = basis().expand(&sigma(1, 1));
        let rho0 = g * g.transpose();
        let z2 = options.z2;

        let f = detection_functional(channel.direction);
        let b2 = pull_back_resolvent(&f, z2, gamma);
        // f G2 V_t2 G2
        let b_t2: Vec<Mat16> = v.iter().map(|vt| pull_back_resolvent(&pull_back(vt, &b2), z2, gamma)).collect();
        // f G2 V_t2 G2 V_t1 G2, indexed [t1][t2]
        let b_t1t2: Vec<Vec<Mat16>> = v
            .iter()
            .map(|vt1| b_t2.iter().map(|w| pull_back_resolvent(&pull_back(vt1, w), z2, gamma)).collect())
            .collect();

        let mut single = RationalZ::default();
        let mut linear = vec![RationalZ::default(); NF];
        let mut pairs = vec![RationalZ::default(); NF * NF];
        let l = kappa;
        for a in -2..=2 {
            let c = -l - a;
            if !(-2..=2).contains(&c) {
                continue;
            }
            let x = kron_apply(k1.harmonic(a), k1.harmonic(c), &rho0);
            if x.camax() == 0.0 {
                continue;
            }
            let (r2a, r2b) = (k2.harmonic(-a), k2.harmonic(-c));
            // Functional after R2: W ↦ R2ᵀ-pulled functional.
            let after_r2 = |w: &Mat16| r2a.transpose() * w * r2b;
            let xs: Vec<Mat16> = sectors.iter().map(|(_, p)| p.apply_mat(&x)).collect();

            let e = after_r2(&b2);
            for mu in 0..NS {
                single.one[mu] += pairing(&e, &xs[mu]);
            }
            // Interaction only after the second pulse.
            let h: Vec<Mat16> = b_t2.iter().map(after_r2).collect();
            for t in 0..NF {
                for mu in 0..NS {
                    linear[t].one[mu] += pairing(&h[t], &xs[mu]);
                }
            }
            for t1 in 0..NF {
                for t2 in 0..NF {
                    let w = after_r2(&b_t1t2[t1][t2]);
                    let r = &mut pairs[t1 * NF + t2];
                    for mu in 0..NS {
                        r.one[mu] += pairing(&w, &xs[mu]);
                    }
                }
            }
            if !options.interpulse_interaction {
                continue;
            }
            // y[t1][nu][lambda] = Πν V_t1 Πλ x
            let y: Vec<Vec<Vec<Mat16>>> = v
                .iter()
                .map(|vt| {
                    let vx: Vec<Mat16> = xs.iter().map(|xl| vt.apply_mat(xl)).collect();
                    sectors
                        .iter()
                        .map(|(_, p)| vx.iter().map(|m| p.apply_mat(m)).collect())
                        .collect()
                })
                .collect();
            let e_mu: Vec<Mat16> = sectors.iter().map(|(_, p)| pull_back(p, &e)).collect();
            for t in 0..NF {
                for mu in 0..NS {
                    for lam in 0..NS {
                        linear[t].two[mu][lam] += pairing(&e_mu[mu], &y[t][mu][lam]);
                    }
                }
            }
            // One insertion on each side of the second pulse.
            for t1 in 0..NF {
                for t2 in 0..NF {
                    let r = &mut pairs[t1 * NF + t2];
                    for nu in 0..NS {
                        for lam in 0..NS {
                            r.two[nu][lam] += pairing(&h[t2], &y[t1][nu][lam]);
                        }
                    }
                }
            }
            // Both insertions before the second pulse.
            for t2 in 0..NF {
                let e_mu_t2: Vec<Mat16> = e_mu.iter().map(|w| pull_back(&v[t2], w)).collect();
                for t1 in 0..NF {
                    let r = &mut pairs[t1 * NF + t2];
                    for mu in 0..NS {
                        for nu in 0..NS {
                            for lam in 0..NS {
                                r.three[mu][nu][lam] += pairing(&e_mu_t2[mu], &y[t1][nu][lam]);
                            }
                        }
                    }
                }
            }
        }
        let scale = pairs
            .iter()
            .chain(linear.iter())
            .map(RationalZ::max_abs)
            .fold(single.max_abs(), f64::max);
        single.excise_stationary(scale)?;
        for r in pairs.iter_mut().chain(linear.iter_mut()) {
            r.excise_stationary(scale)?;
        }
        Ok(ResponseEngine { kappa, channel, options, single, linear, pairs })
    }

    /// Configuration-averaged response as a rational function of z1.
    pub fn averaged(&self, xibar: f64) -> RationalZ {
        let factors = TagFactor::all();
        let mut out = self.single.clone();
        for (i, f1) in factors.iter().enumerate() {
            for (j, f2) in factors.iter().enumerate() {
                let w = factor_pair_average(*f1, *f2, xibar, 1.0);
                if w != 0.0 {
                    out.add_scaled(&self.pairs[i * NF + j], C64::new(w, 0.0));
                }
            }
        }
        out
    }

    /// Response of one fixed configuration through second order, position phases averaged.
    pub fn for_tensor(&self, tensor: &CouplingTensor) -> RationalZ {
        let vals = factor_values(tensor);
        let mut out = self.single.clone();
        for i in 0..NF {
            out.add_scaled(&self.linear[i], vals[i]);
        }
        for i in 0..NF {
            for j in 0..NF {
                out.add_scaled(&self.pairs[i * NF + j], vals[i] * vals[j]);
            }
        }
        out
    }

    /// Pair coefficients at one z1 as an 18×18 array, for fast sampling.
    pub fn pair_matrix(&self, z1: C64) -> Vec<C64> {
        self.pairs.iter().map(|r| r.eval(z1, 1.0)).collect()
    }

    /// Spectrum value S at detuning δ (units of γ).
    pub fn averaged_value(&self, delta: f64, xibar: f64) -> C64 {
        self.averaged(xibar).eval(C64::new(0.0, delta), 1.0) * spectrum_prefactor()
    }
}

/// Numeric values of the 18 tensor factors in canonical order.
pub fn factor_values(tensor: &CouplingTensor) -> [C64; NF] {
    TagFactor::all().map(|f| f.value(tensor))
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SpectrumSeries {
    pub kappa: i32,
    pub channel: DetectionChannel,
    pub variant: CouplingVariant,
    pub omega_detuning: Vec<f64>,
    pub values: Vec<C64>,
    pub stderr: Option<Vec<C64>>,
    pub units: String,
}

impl SpectrumSeries {
    pub fn label(&self) -> String {
        let v = match self.variant {
            CouplingVariant::Full => "avg",
            CouplingVariant::GammaZeroed => "gamma0",
        };
        format!("k{}_{}_{}", self.kappa, self.channel, v)
    }
}

pub const SPECTRUM_UNITS: &str = "f^2/gamma^2";

/// 801 points over ±10γ around κω0.
pub fn default_grid() -> Vec<f64> {
    uniform_grid(-10.0, 10.0, 801)
}

pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(MqcError::Input("frequency grid is empty".into()));
    }
    if grid.iter().any(|x| !x.is_finite()) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(MqcError::Input("frequency grid must be finite and strictly increasing".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumOptions {
    pub area: f64,
    pub xibar: f64,
    pub variant: CouplingVariant,
    pub interpulse_interaction: bool,
}

impl SpectrumOptions {
    pub fn new(area: f64, xibar: f64) -> Self {
        SpectrumOptions { area, xibar, variant: CouplingVariant::Full, interpulse_interaction: true }
    }

    fn response(&self) -> ResponseOptions {
        ResponseOptions {
            area: self.area,
            variant: self.variant,
            interpulse_interaction: self.interpulse_interaction,
            z2: ZERO,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.area >= 0.0 && self.area.is_finite()) {
            return Err(MqcError::Input(format!("pulse area must be >= 0, got {}", self.area)));
        }
        if !(self.xibar > 0.0 && self.xibar.is_finite()) {
            return Err(MqcError::Input(format!("mean scaled distance must be > 0, got {}", self.xibar)));
        }
        Ok(())
    }
}

/// Configuration-averaged spectrum S(ω; κ) on a detuning grid.
pub fn spectrum(kappa: i32, channel: DetectionChannel, grid: &[f64], opts: &SpectrumOptions) -> Result<SpectrumSeries> {
    opts.validate()?;
    check_grid(grid)?;
    let engine = ResponseEngine::new(kappa, channel, opts.response())?;
    let r = engine.averaged(opts.xibar);
    let pref = spectrum_prefactor();
    let values = grid.iter().map(|d| r.eval(C64::new(0.0, *d), 1.0) * pref).collect();
    Ok(SpectrumSeries {
        kappa,
        channel,
        variant: opts.variant,
        omega_detuning: grid.to_vec(),
        values,
        stderr: None,
        units: SPECTRUM_UNITS.into(),
    })
}

/// Peak value S(κω0; κ).
pub fn peak_value(kappa: i32, channel: DetectionChannel, opts: &SpectrumOptions) -> Result<C64> {
    opts.validate()?;
    let engine = ResponseEngine::new(kappa, channel, opts.response())?;
    Ok(engine.averaged_value(0.0, opts.xibar))
}

/// Spectrum value through the generic phase-tagged expansion (slow reference path).
pub fn spectrum_point_reference(
    kappa: i32,
    channel: DetectionChannel,
    delta: f64,
    opts: &SpectrumOptions,
) -> Result<C64> {
    opts.validate()?;
    let xopts = ExpansionOptions {
        gamma: 1.0,
        interpulse_interaction: opts.interpulse_interaction,
        gamma_zeroed: opts.variant == CouplingVariant::GammaZeroed,
        part: InteractionPart::Full,
        harmonic: Some(kappa),
    };
    let point = LaplacePoint::new(C64::new(0.0, delta), ZERO)?;
    let mut total = ZERO;
    for n in [0, 2] {
        let st = scattering_solution(n, point, opts.area, channel.polarization, &xopts)?;
        let avg = average_state(&st, opts.xibar, 1.0)?;
        total += detection_projection(&avg, channel.direction).get(&kappa).copied().unwrap_or(ZERO);
    }
    Ok(total * spectrum_prefactor())
}

/// Peak value with z2 → 0 taken by Richardson extrapolation over ε ∈ {1e-6, 1e-7, 1e-8}.
pub fn peak_value_richardson(kappa: i32, channel: DetectionChannel, opts: &SpectrumOptions) -> Result<C64> {
    opts.validate()?;
    let eps = [1e-6, 1e-7, 1e-8];
    let mut vals = [ZERO; 3];
    for (v, e) in vals.iter_mut().zip(eps) {
        let mut r = opts.response();
        r.z2 = C64::new(e, 0.0);
        *v = ResponseEngine::new(kappa, channel, r)?.averaged_value(0.0, opts.xibar);
    }
    // Lagrange extrapolation to ε = 0.
    let mut out = ZERO;
    for i in 0..3 {
        let mut w = 1.0;
        for j in 0..3 {
            if i != j {
                w *= eps[j] / (eps[j] - eps[i]);
            }
        }
        out += vals[i] * w;
    }
    Ok(out)
}

/// Leading-order peak amplitudes, up to the common prefactor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Table1Values {
    pub k1_x_par: f64,
    pub k1_y_par: f64,
    pub k1_x_perp: f64,
    pub k1_y_perp: f64,
    pub k2_x_par: f64,
    pub k2_x_perp: f64,
    pub k2_y_par: f64,
    pub k2_y_perp: f64,
}

impl Table1Values {
    /// Entries as (κ, channel, value).
    pub fn entries(&self) -> [(i32, DetectionChannel, f64); 8] {
        use DetectionDirection::*;
        use PolarizationChannel::*;
        let ch = |d, p| DetectionChannel { direction: d, polarization: p };
        [
            (1, ch(X, Parallel), self.k1_x_par),
            (1, ch(Y, Parallel), self.k1_y_par),
            (1, ch(X, Perpendicular), self.k1_x_perp),
            (1, ch(Y, Perpendicular), self.k1_y_perp),
            (2, ch(X, Parallel), self.k2_x_par),
            (2, ch(X, Perpendicular), self.k2_x_perp),
            (2, ch(Y, Parallel), self.k2_y_par),
            (2, ch(Y, Perpendicular), self.k2_y_perp),
        ]
    }
}

pub fn table1_leading_order(theta: f64, xibar: f64) -> Table1Values {
    let t2 = theta * theta;
    let t4 = t2 * t2;
    let x2 = xibar * xibar;
    Table1Values {
        k1_x_par: 3.0 * t2 / (10.0 * x2),
        k1_y_par: t2,
        k1_x_perp: 0.0,
        k1_y_perp: 0.0,
        k2_x_par: -3.0 * t4 / (320.0 * x2),
        k2_x_perp: -3.0 * t4 / (1280.0 * x2),
        k2_y_par: -51.0 * t4 / (640.0 * x2),
        k2_y_perp: -3.0 * t4 / (1280.0 * x2),
    }
}

/// Computed Re S(κω0; κ) for all eight channels, rescaled so the ŷ∥ κ = 1 entry equals ϑ².
pub fn table1_computed(opts: &SpectrumOptions) -> Result<(Table1Values, f64)> {
    let lead = table1_leading_order(opts.area, opts.xibar);
    let mut vals = [0.0; 8];
    let entries = lead.entries();
    let computed: Vec<Result<f64>> = {
        use rayon::prelude::*;
        entries.par_iter().map(|(k, ch, _)| peak_value(*k, *ch, opts).map(|v| v.re)).collect()
    };
    for (v, c) in vals.iter_mut().zip(computed) {
        *v = c?;
    }
    let norm = opts.area * opts.area / vals[1];
    let t = Table1Values {
        k1_x_par: vals[0] * norm,
        k1_y_par: vals[1] * norm,
        k1_x_perp: vals[2] * norm,
        k1_y_perp: vals[3] * norm,
        k2_x_par: vals[4] * norm,
        k2_x_perp: vals[5] * norm,
        k2_y_par: vals[6] * norm,
        k2_y_perp: vals[7] * norm,
    };
    Ok((t, norm))
}

/// Resonant cross-section 3λ0²/2π.
pub fn resonant_cross_section(lambda0: f64) -> f64 {
    3.0 * lambda0 * lambda0 / (2.0 * PI)
}

/// Cross-section averaged over a Gaussian Doppler distribution.
///
/// The detuning is the sum of three independent Cartesian shifts of rms Δ̄,
/// so it is Gaussian with variance 3Δ̄². γ and Δ̄ must share units.
pub fn mean_scattering_cross_section(lambda0: f64, gamma: f64, delta_bar: f64) -> Result<f64> {
    if !(lambda0 > 0.0 && gamma > 0.0 && delta_bar > 0.0) {
        return Err(MqcError::Input("cross-section parameters must be positive".into()));
    }
    let s = 3f64.sqrt() * delta_bar;
    let h = 0.5 * gamma;
    let norm = 1.0 / (s * (2.0 * PI).sqrt());
    let out = if s > h {
        // Δ = h tan u absorbs the Lorentzian. Both integrands are even.
        let f = |u: f64| {
            let x = h * u.tan();
            h * norm * (-0.5 * (x / s).powi(2)).exp()
        };
        quadrature::double_exponential::integrate(f, 0.0, 0.5 * PI, 1e-14)
    } else {
        // Δ = s v absorbs the Gaussian.
        let f = |v: f64| {
            let pdf = (-0.5 * v * v).exp() / (2.0 * PI).sqrt();
            pdf / (1.0 + (s * v / h).powi(2))
        };
        quadrature::double_exponential::integrate(f, 0.0, 40.0, 1e-14)
    };
    if !out.integral.is_finite() || out.error_estimate > 1e-9 * out.integral.abs().max(1e-300) {
        return Err(MqcError::Numeric(format!(
            "cross-section quadrature did not converge (estimate {:.3e})",
            out.error_estimate
        )));
    }
    Ok(2.0 * resonant_cross_section(lambda0) * out.integral)
}

/// ℓ = 1/(ρ σ̄).
pub fn mean_free_path(rho: f64, sigma: f64) -> Result<f64> {
    if !(rho > 0.0 && sigma > 0.0) {
        return Err(MqcError::Input("density and cross-section must be positive".into()));
    }
    Ok(1.0 / (rho * sigma))
}

/// ϑ = 2d (σ c μ0 E √π / w0)^{1/2} / ħ, SI units.
pub fn pulse_area_from_energy(energy: f64, duration: f64, waist: f64, dipole: f64) -> Result<f64> {
    if !(energy > 0.0 && duration > 0.0 && waist > 0.0 && dipole > 0.0) {
        return Err(MqcError::Input("pulse parameters must be positive".into()));
    }
    Ok(2.0 * dipole * (duration * SPEED_OF_LIGHT * VACUUM_PERMEABILITY * energy * PI.sqrt() / waist).sqrt() / HBAR)
}

/// d from γ = 4ω0³d²/(4πε0 · 3ħc²).
pub fn dipole_from_gamma(gamma: f64, omega0: f64) -> Result<f64> {
    if !(gamma > 0.0 && omega0 > 0.0) {
        return Err(MqcError::Input("gamma and omega0 must be positive".into()));
    }
    Ok((gamma * 4.0 * PI * VACUUM_PERMITTIVITY * 3.0 * HBAR * SPEED_OF_LIGHT.powi(2) / (4.0 * omega0.powi(3))).sqrt())
}

pub fn gamma_from_dipole(dipole: f64, omega0: f64) -> f64 {
    4.0 * omega0.powi(3) * dipole * dipole / (4.0 * PI * VACUUM_PERMITTIVITY * 3.0 * HBAR * SPEED_OF_LIGHT.powi(2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ch(d: DetectionDirection, p: PolarizationChannel) -> DetectionChannel {
        DetectionChannel { direction: d, polarization: p }
    }

    #[test]
    fn test_channel_label_roundtrip() {
        for c in DetectionChannel::all() {
            assert_eq!(c.to_string().parse::<DetectionChannel>().unwrap(), c);
        }
        assert!("z_par".parse::<DetectionChannel>().is_err());
        assert!("xpar".parse::<DetectionChannel>().is_err());
    }

    #[test]
    fn test_detection_of_excited_x() {
        let b = basis();
        let sxx = b.expand(&cartesian_sigma(Polarization::X, Polarization::X));
        let g = b.expand(&sigma(1, 1));
        let v = TwoAtomVector::product(&sxx, &g);
        assert_relative_eq!(detect(&v, DetectionDirection::Y).re, 1.0, epsilon = 1e-14);
        assert!(detect(&v, DetectionDirection::X).norm() < 1e-14);
        let gg = TwoAtomVector::product(&g, &g);
        assert!(detect(&gg, DetectionDirection::X).norm() < 1e-14);
        assert!(detect(&gg, DetectionDirection::Y).norm() < 1e-14);
    }

    #[test]
    fn test_table1_closed_form_ratios() {
        let t = table1_leading_order(0.2, 80.0);
        assert_relative_eq!(t.k2_x_par / t.k1_x_par, -0.04 / 32.0, max_relative = 1e-14);
        assert_relative_eq!(t.k2_y_par / t.k2_y_perp, 34.0, max_relative = 1e-14);
        let z = table1_leading_order(0.0, 80.0);
        assert!(z.entries().iter().all(|e| e.2 == 0.0));
    }

    #[test]
    fn test_engine_matches_reference_path() {
        let opts = SpectrumOptions::new(0.3, 20.0);
        for (kappa, c, delta) in [
            (1, ch(DetectionDirection::X, PolarizationChannel::Parallel), 0.4),
            (2, ch(DetectionDirection::Y, PolarizationChannel::Perpendicular), -0.7),
        ] {
            let engine = ResponseEngine::new(kappa, c, opts.response()).unwrap();
            let fast = engine.averaged_value(delta, opts.xibar);
            let slow = spectrum_point_reference(kappa, c, delta, &opts).unwrap();
            assert!((fast - slow).norm() < 1e-12 * slow.norm().max(1e-30), "{fast} vs {slow}");
        }
    }

    #[test]
    fn test_resonant_cross_section() {
        assert_relative_eq!(resonant_cross_section(790e-9), 2.98e-13, max_relative = 1e-3);
        let small = mean_scattering_cross_section(790e-9, 1.0, 1e-9).unwrap();
        assert_relative_eq!(small, resonant_cross_section(790e-9), max_relative = 1e-6);
    }

    #[test]
    fn test_pulse_area_sqrt_energy() {
        let a = pulse_area_from_energy(1e-9, 1e-13, 1e-3, 2e-29).unwrap();
        let b = pulse_area_from_energy(2e-9, 1e-13, 1e-3, 2e-29).unwrap();
        assert_relative_eq!(b / a, 2f64.sqrt(), max_relative = 1e-14);
    }

    #[test]
    fn test_dipole_roundtrip() {
        let p = crate::single_atom_dynamics::PhysicalParams::new(2.0 * PI * 6.067e6, 790e-9).unwrap();
        let d = dipole_from_gamma(p.gamma, p.omega0).unwrap();
        assert_relative_eq!(gamma_from_dipole(d, p.omega0), p.gamma, max_relative = 1e-12);
    }

    #[test]
    fn test_empty_grid_rejected() {
        let c = ch(DetectionDirection::X, PolarizationChannel::Parallel);
        assert!(spectrum(1, c, &[], &SpectrumOptions::new(0.1, 80.0)).is_err());
        assert!(spectrum(0, c, &[0.0], &SpectrumOptions::new(0.1, 80.0)).is_err());
    }
}
