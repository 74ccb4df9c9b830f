// SPDX-License-Identifier: Apache-2.0

//! Acceptance criteria with measured residuals.
//!
//! Each criterion is a list of checks. Required checks decide the verdict;
//! diagnostic checks are reported alongside but never change it.

use std::f64::consts::PI;
use std::fmt;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dipole_coupling::{Configuration, TensorMode};
use crate::disorder_average::window_factor_moments;
use crate::error::{MqcError, Result};
use crate::operator_basis::{basis, Mat16, Mat4, TwoAtomBasis, C64};
use crate::oracle_validation::{
    analytic_tensor_moments, laplace_analytic, laplace_oracle, monte_carlo_spectrum, monte_carlo_tensor_moments,
    window_effective_distance, window_expectation, LaplaceOracleOptions, LaplaceValues, McOptions,
};
use crate::scattering_expansion::TagFactor;
use crate::single_atom_dynamics::{free_propagator, kick_harmonics, state_free_propagator, Polarization, PolarizationChannel};
use crate::spectra::{
    default_grid, mean_free_path, mean_scattering_cross_section, peak_value, peak_value_richardson,
    resonant_cross_section, spectrum, table1_computed, table1_leading_order, CouplingVariant, DetectionChannel,
    DetectionDirection, ResponseEngine, ResponseOptions, SpectrumOptions,
};

/// Criteria expected to fail, with the measured reason.
pub const KNOWN_FAILURES: &[(u8, &str)] = &[
    (
        7,
        "same-type averages <T T> do not vanish over a finite uniform distance window: \
         <exp(-2i xi)/xi^2>/<1/xi^2> = 0.022 on [67.2, 92.8], which N = 1e5 resolves at about 7 standard errors; \
         the sample agrees with the exact window expectation",
    ),
    (
        8,
        "the Doppler-averaged cross-section integral evaluates to 1.152e-15 m^2 (mean free path 8.68 m) \
         at the cited parameters, ten times the quoted 1.14e-16 m^2 (88 m); the resonant limit agrees",
    ),
];

pub fn known_failure(id: u8) -> Option<&'static str> {
    KNOWN_FAILURES.iter().find(|(k, _)| *k == id).map(|(_, r)| *r)
}

pub const CRITERIA: [(u8, &str); 9] = [
    (1, "table1"),
    (2, "ratios"),
    (3, "perp_1qc_zero"),
    (4, "signs"),
    (5, "gamma_zeroed"),
    (6, "oracle_equivalence"),
    (7, "monte_carlo"),
    (8, "cross_section"),
    (9, "structure"),
];

pub fn criterion_name(id: u8) -> Option<&'static str> {
    CRITERIA.iter().find(|(k, _)| *k == id).map(|(_, n)| *n)
}

/// Tolerances of every check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub table1_rel: f64,
    pub table1_seconds: f64,
    pub ratio_rel: f64,
    pub perp_zero: f64,
    pub gamma0_factor: f64,
    pub gamma0_perp: f64,
    pub oracle_far_rel: f64,
    pub oracle_near_rel: f64,
    pub oracle_seconds: f64,
    pub mc_sigmas: f64,
    pub mc_seconds: f64,
    pub cross_section_rel: f64,
    pub resonant_rel: f64,
    pub gram: f64,
    pub kick: f64,
    pub semigroup: f64,
    pub exponent: f64,
    pub symmetry: f64,
    pub extrapolation_rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            table1_rel: 1e-2,
            table1_seconds: 60.0,
            ratio_rel: 1e-2,
            perp_zero: 1e-12,
            gamma0_factor: 0.02,
            gamma0_perp: 1e-10,
            oracle_far_rel: 1e-4,
            oracle_near_rel: 2e-2,
            oracle_seconds: 300.0,
            mc_sigmas: 3.0,
            mc_seconds: 600.0,
            cross_section_rel: 1e-2,
            resonant_rel: 1e-3,
            gram: 1e-12,
            kick: 1e-12,
            semigroup: 1e-10,
            exponent: 0.05,
            symmetry: 1e-10,
            extrapolation_rel: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidationConfig {
    pub seed: u64,
    pub mc_samples: usize,
    pub mc_window: (f64, f64),
    pub mc_area: f64,
    pub oracle_directions: usize,
    pub oracle_area: f64,
    pub criteria: Vec<u8>,
    pub tolerances: Tolerances,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig {
            seed: 12345,
            mc_samples: 100_000,
            mc_window: (67.2, 92.8),
            mc_area: 0.14 * PI,
            oracle_directions: 10,
            oracle_area: 0.14 * PI,
            criteria: CRITERIA.iter().map(|(k, _)| *k).collect(),
            tolerances: Tolerances::default(),
        }
    }
}

impl ValidationConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(k) = self.criteria.iter().find(|k| criterion_name(**k).is_none()) {
            return Err(MqcError::Input(format!("unknown criterion {k}")));
        }
        if self.mc_samples == 0 || self.oracle_directions == 0 {
            return Err(MqcError::Input("sample counts must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
    pub passed: bool,
    /// Reported only, does not enter the verdict.
    pub diagnostic: bool,
}

impl Check {
    /// Passes when residual ≤ tolerance.
    fn at_most(name: impl Into<String>, residual: f64, tolerance: f64) -> Self {
        Check { name: name.into(), residual, tolerance, passed: residual <= tolerance, diagnostic: false }
    }

    fn diagnostic(mut self) -> Self {
        self.diagnostic = true;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub id: u8,
    pub name: String,
    pub passed: bool,
    pub seconds: f64,
    pub checks: Vec<Check>,
    pub known_failure: Option<String>,
}

impl CriterionReport {
    fn new(id: u8, checks: Vec<Check>, seconds: f64) -> Self {
        CriterionReport {
            id,
            name: criterion_name(id).unwrap_or("unknown").into(),
            passed: checks.iter().all(|c| c.diagnostic || c.passed),
            seconds,
            checks,
            known_failure: known_failure(id).map(String::from),
        }
    }

    /// Worst residual/tolerance over required checks.
    pub fn worst_ratio(&self) -> f64 {
        self.checks
            .iter()
            .filter(|c| !c.diagnostic)
            .map(|c| if c.tolerance > 0.0 { c.residual / c.tolerance } else if c.residual > 0.0 { f64::INFINITY } else { 0.0 })
            .fold(0.0, f64::max)
    }

    pub fn failed_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.diagnostic && !c.passed)
    }
}

impl fmt::Display for CriterionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "criterion {} {}: {} (worst residual/tolerance {:.3e}, {:.1} s)",
            self.id,
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.worst_ratio(),
            self.seconds
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub seed: u64,
    pub mc_samples: usize,
    pub criteria: Vec<CriterionReport>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.criteria.iter().all(|c| c.passed)
    }

    /// Verdicts that differ from the expectation recorded in [`KNOWN_FAILURES`].
    pub fn unexpected(&self) -> Vec<&CriterionReport> {
        self.criteria.iter().filter(|c| c.passed == c.known_failure.is_some()).collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("# seed {}\n# mc_samples {}\n", self.seed, self.mc_samples);
        for c in &self.criteria {
            s.push_str(&format!("{c}\n"));
            for k in &c.checks {
                s.push_str(&format!(
                    "    {:<4} {:<62} residual {:.4e}  tolerance {:.4e}{}\n",
                    if k.passed { "ok" } else { "FAIL" },
                    k.name,
                    k.residual,
                    k.tolerance,
                    if k.diagnostic { "  (diagnostic)" } else { "" }
                ));
            }
            if let (false, Some(r)) = (c.passed, &c.known_failure) {
                s.push_str(&format!("    known: {r}\n"));
            }
        }
        s
    }
}

pub fn run_validation(cfg: &ValidationConfig) -> Result<ValidationReport> {
    cfg.validate()?;
    let mut criteria = Vec::new();
    for &id in &cfg.criteria {
        criteria.push(run_criterion(id, cfg)?);
    }
    Ok(ValidationReport { seed: cfg.seed, mc_samples: cfg.mc_samples, criteria })
}

pub fn run_criterion(id: u8, cfg: &ValidationConfig) -> Result<CriterionReport> {
    let t0 = Instant::now();
    let tol = &cfg.tolerances;
    let mut checks = match id {
        1 => table1_checks(tol)?,
        2 => ratio_checks(tol)?,
        3 => perp_zero_checks(tol)?,
        4 => sign_checks()?,
        5 => gamma_zeroed_checks(tol)?,
        6 => oracle_checks(cfg)?,
        7 => monte_carlo_checks(cfg)?,
        8 => cross_section_checks(tol)?,
        9 => structure_checks(tol)?,
        _ => return Err(MqcError::Input(format!("unknown criterion {id}"))),
    };
    let seconds = t0.elapsed().as_secs_f64();
    let limit = match id {
        1 => Some(tol.table1_seconds),
        6 => Some(tol.oracle_seconds),
        7 => Some(tol.mc_seconds),
        _ => None,
    };
    if let Some(l) = limit {
        checks.push(Check::at_most("runtime seconds", seconds, l));
    }
    Ok(CriterionReport::new(id, checks, seconds))
}

fn ch(d: DetectionDirection, p: PolarizationChannel) -> DetectionChannel {
    DetectionChannel { direction: d, polarization: p }
}

fn all_channels() -> Vec<DetectionChannel> {
    DetectionDirection::ALL
        .iter()
        .flat_map(|d| PolarizationChannel::ALL.iter().map(move |p| ch(*d, *p)))
        .collect()
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

const SMALL_AREA: f64 = 0.01 * PI;

fn table1_checks(tol: &Tolerances) -> Result<Vec<Check>> {
    let opts = SpectrumOptions::new(SMALL_AREA, 80.0);
    let (computed, _) = table1_computed(&opts)?;
    let lead = table1_leading_order(SMALL_AREA, 80.0);
    Ok(computed
        .entries()
        .iter()
        .zip(lead.entries())
        .filter(|(_, (_, _, l))| *l != 0.0)
        .map(|((k, c, v), (_, _, l))| Check::at_most(format!("k{k} {c} vs closed form"), rel(*v, l), tol.table1_rel))
        .collect())
}

fn re_peak(kappa: i32, c: DetectionChannel, opts: &SpectrumOptions) -> Result<f64> {
    Ok(peak_value(kappa, c, opts)?.re)
}

fn ratio_checks(tol: &Tolerances) -> Result<Vec<Check>> {
    use DetectionDirection::*;
    use PolarizationChannel::*;
    let mut out = Vec::new();
    for xibar in [80.0, 160.0] {
        let o = SpectrumOptions::new(SMALL_AREA, xibar);
        let r = re_peak(2, ch(X, Parallel), &o)? / re_peak(1, ch(X, Parallel), &o)?;
        let expect = -SMALL_AREA * SMALL_AREA / 32.0;
        out.push(Check::at_most(format!("x_par 2QC/1QC at xibar {xibar}"), rel(r, expect), tol.ratio_rel));
        for (d, expect) in [(X, 4.0), (Y, 34.0)] {
            let r = re_peak(2, ch(d, Parallel), &o)? / re_peak(2, ch(d, Perpendicular), &o)?;
            out.push(Check::at_most(format!("{} par/perp 2QC at xibar {xibar}", d.label()), rel(r, expect), tol.ratio_rel));
        }
    }
    Ok(out)
}

fn perp_zero_checks(tol: &Tolerances) -> Result<Vec<Check>> {
    let grid = default_grid();
    let mut out = Vec::new();
    for area in [SMALL_AREA, 0.14 * PI] {
        for variant in [CouplingVariant::Full, CouplingVariant::GammaZeroed] {
            let mut o = SpectrumOptions::new(area, 80.0);
            o.variant = variant;
            let pars: Vec<f64> = DetectionDirection::ALL
                .iter()
                .map(|d| Ok(re_peak(1, ch(*d, PolarizationChannel::Parallel), &o)?.abs()))
                .collect::<Result<_>>()?;
            let dominant = pars.iter().cloned().fold(0.0, f64::max);
            for (d, par) in DetectionDirection::ALL.iter().zip(&pars) {
                let perp = spectrum(1, ch(*d, PolarizationChannel::Perpendicular), &grid, &o)?;
                let worst = perp.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
                let tag = format!("{}_perp 1QC, area {:.2}pi {variant:?}", d.label(), area / PI);
                out.push(Check::at_most(format!("{tag} / par peak"), worst / dominant, tol.perp_zero));
                out.push(Check::at_most(format!("{tag} / same-direction par peak"), worst / par, tol.perp_zero).diagnostic());
            }
        }
    }
    Ok(out)
}

fn sign_checks() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for area in [SMALL_AREA, 0.14 * PI] {
        for xibar in [80.0, 160.0] {
            let o = SpectrumOptions::new(area, xibar);
            let mut bad = 0.0;
            for c in all_channels() {
                if c.polarization == PolarizationChannel::Parallel && re_peak(1, c, &o)? <= 0.0 {
                    bad += 1.0;
                }
                if re_peak(2, c, &o)? >= 0.0 {
                    bad += 1.0;
                }
            }
            out.push(Check::at_most(format!("sign violations, area {:.2}pi xibar {xibar}", area / PI), bad, 0.0));
        }
    }
    Ok(out)
}

fn gamma_zeroed_checks(tol: &Tolerances) -> Result<Vec<Check>> {
    use DetectionDirection::*;
    use PolarizationChannel::*;
    let full = SpectrumOptions::new(SMALL_AREA, 80.0);
    let mut g0 = full;
    g0.variant = CouplingVariant::GammaZeroed;
    let mut out = Vec::new();
    for k in [1, 2] {
        let r = re_peak(k, ch(X, Parallel), &full)? / re_peak(k, ch(X, Parallel), &g0)?;
        out.push(Check::at_most(format!("x_par k{k} full/gamma0 - 2"), (r - 2.0).abs(), tol.gamma0_factor));
    }
    let (a, b) = (re_peak(2, ch(Y, Parallel), &full)?, re_peak(2, ch(Y, Parallel), &g0)?);
    out.push(Check::at_most("y_par 2QC sign flip (1 if not flipped)", if a * b < 0.0 { 0.0 } else { 1.0 }, 0.0));
    out.push(Check::at_most("y_par 2QC shrinks (|gamma0|/|full|)", (b / a).abs(), 1.0));
    for d in DetectionDirection::ALL {
        let r = peak_value(2, ch(d, Perpendicular), &g0)?.norm() / re_peak(2, ch(d, Perpendicular), &full)?.abs();
        out.push(Check::at_most(format!("{}_perp 2QC gamma0/full", d.label()), r, tol.gamma0_perp));
    }
    Ok(out)
}

/// Random isotropic directions for the oracle comparison, reproducible from the seed.
pub fn oracle_directions(seed: u64, n: usize) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    (0..n)
        .map(|_| {
            let ct: f64 = rng.random_range(-1.0..=1.0);
            (ct.clamp(-1.0, 1.0).acos(), rng.random_range(0.0..2.0 * PI))
        })
        .collect()
}

pub const ORACLE_DETUNINGS: [f64; 3] = [0.0, 0.5, 2.0];

/// Largest oracle-vs-analytic deviation at one configuration and κ, relative to the
/// largest analytic value of the same detection direction.
pub fn oracle_deviation(config: &Configuration, area: f64, kappa: i32) -> Result<f64> {
    let mut pairs: Vec<(LaplaceValues, LaplaceValues)> = Vec::new();
    for p in PolarizationChannel::ALL {
        let o = LaplaceOracleOptions::new(area, kappa, p, ORACLE_DETUNINGS.to_vec());
        pairs.push((laplace_oracle(config, &o)?, laplace_analytic(config, &o)?));
    }
    let mut worst: f64 = 0.0;
    for pick in [|v: &LaplaceValues| v.x.clone(), |v: &LaplaceValues| v.y.clone()] {
        let scale = pairs.iter().flat_map(|(_, a)| pick(a)).map(|v| v.norm()).fold(0.0, f64::max);
        for (o, a) in &pairs {
            for (x, y) in pick(o).iter().zip(pick(a)) {
                worst = worst.max((x - y).norm() / scale);
            }
        }
    }
    Ok(worst)
}

fn oracle_checks(cfg: &ValidationConfig) -> Result<Vec<Check>> {
    let tol = &cfg.tolerances;
    let dirs = oracle_directions(cfg.seed, cfg.oracle_directions);
    let mut out = Vec::new();
    for (xi, limit) in [(1000.0, tol.oracle_far_rel), (80.0, tol.oracle_near_rel)] {
        let jobs: Vec<(f64, f64, i32)> = dirs.iter().flat_map(|(t, p)| [1, 2].map(|k| (*t, *p, k))).collect();
        let devs: Vec<Result<f64>> = jobs
            .par_iter()
            .map(|(t, p, k)| oracle_deviation(&Configuration::new(xi, *t, *p)?, cfg.oracle_area, *k))
            .collect();
        for k in [1, 2] {
            let mut worst: f64 = 0.0;
            for (j, d) in jobs.iter().zip(&devs) {
                if j.2 == k {
                    worst = worst.max(d.clone()?);
                }
            }
            out.push(Check::at_most(format!("k{k} relative deviation at xi {xi}"), worst, limit));
        }
    }
    Ok(out)
}

fn z_score(d: C64, se: C64) -> f64 {
    let part = |x: f64, s: f64| if x == 0.0 { 0.0 } else { (x / s).abs() };
    part(d.re, se.re).max(part(d.im, se.im))
}

fn monte_carlo_checks(cfg: &ValidationConfig) -> Result<Vec<Check>> {
    let sig = cfg.tolerances.mc_sigmas;
    let w = cfg.mc_window;
    let xe = window_effective_distance(w);
    let opts = McOptions::new(cfg.mc_samples, w, cfg.seed, cfg.mc_area);
    let tm = monte_carlo_tensor_moments(&opts)?;
    let ideal = analytic_tensor_moments(xe);
    let exact = window_factor_moments(w, TensorMode::Exact, 1.0)?;
    let f = TagFactor::all();
    let (mut mixed, mut same, mut window) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..18 {
        for j in 0..18 {
            let k = i * 18 + j;
            let z = z_score(tm.mean[k] - ideal[k], tm.stderr[k]);
            if f[i].is_conj() != f[j].is_conj() {
                mixed = mixed.max(z);
            } else {
                same = same.max(z);
            }
            window = window.max(z_score(tm.mean[k] - exact[k], tm.stderr[k]));
        }
    }
    let mut out = vec![
        Check::at_most("mixed <T T*> vs isotropic average (sigmas)", mixed, sig),
        Check::at_most("same-type <T T> vs zero (sigmas)", same, sig),
        Check::at_most("all moments vs exact window expectation (sigmas)", window, sig).diagnostic(),
    ];
    let avg_opts = SpectrumOptions::new(cfg.mc_area, xe);
    for k in [1, 2] {
        for c in all_channels() {
            let mc = monte_carlo_spectrum(k, c, &[0.0], &opts)?;
            let (m, se) = (mc.series.values[0], mc.series.stderr.as_ref().expect("standard errors")[0]);
            let a = peak_value(k, c, &avg_opts)?;
            out.push(Check::at_most(format!("k{k} {c} peak vs averaged (sigmas)"), z_score(m - a, se), sig));
            let engine = ResponseEngine::new(k, c, ResponseOptions::new(cfg.mc_area))?;
            let e = window_expectation(&engine, 0.0, w, TensorMode::Exact)?;
            out.push(Check::at_most(format!("k{k} {c} peak vs window expectation (sigmas)"), z_score(m - e, se), sig).diagnostic());
        }
    }
    Ok(out)
}

/// Cross-section parameters: λ0 = 790 nm, γ = 2π·6 MHz, Δ̄ = 2π·560 MHz, ρ = 1e8 cm⁻³.
pub const CROSS_SECTION_CASE: (f64, f64, f64, f64) = (790e-9, 2.0 * PI * 6e6, 2.0 * PI * 560e6, 1e14);

fn cross_section_checks(tol: &Tolerances) -> Result<Vec<Check>> {
    let (l0, g, d, rho) = CROSS_SECTION_CASE;
    let s = mean_scattering_cross_section(l0, g, d)?;
    let ell = mean_free_path(rho, s)?;
    let lim = mean_scattering_cross_section(l0, g, 1e-6 * g)?;
    Ok(vec![
        Check::at_most("mean cross-section vs 1.14e-16 m^2", rel(s, 1.14e-16), tol.cross_section_rel),
        Check::at_most("mean free path vs 88 m", rel(ell, 88.0), tol.cross_section_rel),
        Check::at_most("small Doppler width vs 3 lambda^2/2pi", rel(lim, resonant_cross_section(l0)), tol.resonant_rel),
        Check::at_most("resonant 3 lambda^2/2pi vs 3.0e-13 m^2", rel(resonant_cross_section(l0), 3.0e-13), 0.01),
    ])
}

fn max_abs<'a, I: IntoIterator<Item = &'a C64>>(it: I) -> f64 {
    it.into_iter().map(|v| v.norm()).fold(0.0, f64::max)
}

fn random_hermitian(rng: &mut ChaCha8Rng) -> Mat4 {
    let a = Mat4::from_fn(|_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let h = a + a.adjoint();
    h / h.trace()
}

fn structure_checks(tol: &Tolerances) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let b = basis();
    out.push(Check::at_most("single-atom Gram - I", max_abs((b.gram() - Mat16::identity()).iter()), tol.gram));
    let g2 = TwoAtomBasis::new().gram();
    out.push(Check::at_most("two-atom Gram - I", max_abs((g2 - DMatrix::identity(256, 256)).iter()), tol.gram));

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let t = b.trace_functional();
    let (mut tr, mut herm) = (0.0f64, 0.0f64);
    for area in [0.3, 0.14 * PI, 2.0] {
        for pol in Polarization::ALL {
            let kd = kick_harmonics(area, pol);
            for phi in [0.0, 0.7, 2.9] {
                let k = kd.reassemble(phi);
                tr = tr.max(max_abs((k.transpose() * t - t).iter()));
                let rho = random_hermitian(&mut rng);
                let after = b.reconstruct(&(k * b.expand(&rho)));
                herm = herm.max(max_abs((after - after.adjoint()).iter()));
            }
        }
    }
    out.push(Check::at_most("kick trace preservation", tr, tol.kick));
    out.push(Check::at_most("kick Hermiticity preservation", herm, tol.kick));

    let mut semi: f64 = 0.0;
    for (s, u) in [(0.3, 1.1), (2.0, 0.5), (4.0, 3.0)] {
        let lhs = state_free_propagator(1.0, s + u)? - state_free_propagator(1.0, s)? * state_free_propagator(1.0, u)?;
        let lhs_op = free_propagator(1.0, s + u)? - free_propagator(1.0, u)? * free_propagator(1.0, s)?;
        semi = semi.max(max_abs(lhs.iter())).max(max_abs(lhs_op.iter()));
    }
    out.push(Check::at_most("propagator semigroup", semi, tol.semigroup));

    let areas = [0.005 * PI, 0.01 * PI, 0.02 * PI];
    for (k, c, expect) in [
        (1, ch(DetectionDirection::Y, PolarizationChannel::Parallel), 2.0),
        (1, ch(DetectionDirection::X, PolarizationChannel::Parallel), 2.0),
    ]
    .into_iter()
    .chain(all_channels().into_iter().map(|c| (2, c, 4.0)))
    {
        let pts: Vec<(f64, f64)> = areas
            .iter()
            .map(|a| Ok((a.ln(), re_peak(k, c, &SpectrumOptions::new(*a, 80.0))?.abs().ln())))
            .collect::<Result<_>>()?;
        out.push(Check::at_most(format!("k{k} {c} area exponent - {expect}"), (fit_slope(&pts) - expect).abs(), tol.exponent));
    }

    let grid = default_grid();
    let n = grid.len();
    let o = SpectrumOptions::new(0.14 * PI, 80.0);
    let mut sym: f64 = 0.0;
    let mut peak_off = 0.0;
    for k in [1, 2] {
        for c in all_channels() {
            let s = spectrum(k, c, &grid, &o)?;
            let scale = max_abs(&s.values);
            if k == 1 && c.polarization == PolarizationChannel::Perpendicular {
                continue;
            }
            for i in 0..n / 2 {
                let (a, bb) = (s.values[i], s.values[n - 1 - i]);
                sym = sym.max(((a.re - bb.re).abs() + (a.im + bb.im).abs()) / scale);
            }
            let arg = (0..n).max_by(|i, j| s.values[*i].re.abs().total_cmp(&s.values[*j].re.abs())).expect("grid");
            if grid[arg] != 0.0 {
                peak_off += 1.0;
            }
        }
    }
    out.push(Check::at_most("line shape Re even / Im odd", sym, tol.symmetry));
    out.push(Check::at_most("peaks away from zero detuning", peak_off, 0.0));

    let small = SpectrumOptions::new(SMALL_AREA, 80.0);
    let gap = re_peak(1, ch(DetectionDirection::X, PolarizationChannel::Parallel), &small)?
        / re_peak(1, ch(DetectionDirection::Y, PolarizationChannel::Parallel), &small)?;
    out.push(Check::at_most("x_par/y_par 1QC gap vs 3/(10 xibar^2)", rel(gap, 3.0 / (10.0 * 6400.0)), 1e-2));

    let mut extra: f64 = 0.0;
    for k in [1, 2] {
        for c in all_channels() {
            if k == 1 && c.polarization == PolarizationChannel::Perpendicular {
                continue;
            }
            let (a, r) = (peak_value(k, c, &o)?, peak_value_richardson(k, c, &o)?);
            extra = extra.max((a - r).norm() / a.norm());
        }
    }
    out.push(Check::at_most("restricted resolvent vs z2 extrapolation", extra, tol.extrapolation_rel));
    Ok(out)
}

fn fit_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn test_fit_slope_exact() {
        let pts: Vec<(f64, f64)> = [1.0f64, 2.0, 3.0].iter().map(|x| (x.ln(), 4.0 * x.ln() + 1.0)).collect();
        assert_relative_eq!(fit_slope(&pts), 4.0, epsilon = 1e-12);
    }

    #[test]
    fn test_unknown_criterion_rejected() {
        let cfg = ValidationConfig { criteria: vec![42], ..Default::default() };
        assert!(run_validation(&cfg).is_err());
    }

    #[test]
    fn test_corrupted_tolerance_fails_named_criterion() {
        let mut cfg = ValidationConfig { criteria: vec![2], ..Default::default() };
        cfg.tolerances.ratio_rel = 1e-14;
        let r = run_validation(&cfg).unwrap();
        assert!(!r.criteria[0].passed);
        assert_eq!(r.criteria[0].name, "ratios");
        assert!(r.to_text().contains("criterion 2 ratios: FAIL"));
    }

    #[test]
    fn test_directions_reproducible() {
        assert_eq!(oracle_directions(3, 4), oracle_directions(3, 4));
        assert_ne!(oracle_directions(3, 4), oracle_directions(4, 4));
    }
}
