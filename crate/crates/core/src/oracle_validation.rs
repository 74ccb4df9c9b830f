// SPDX-License-Identifier: Apache-2.0

//! Brute-force checks of the perturbative spectra.
//!
//! The time-domain oracle works directly with 16×16 two-atom density
//! matrices. It builds the full master-equation generator from the dipole
//! operators (all orders in the coupling), applies exact pulse unitaries
//! obtained by matrix exponentiation, and integrates with an adaptive
//! eighth-order Runge-Kutta method. Laplace components come from integrating
//! e^{−zt}ρ(t) alongside the state.
//!
//! The Monte-Carlo average samples configurations, evaluates the
//! fixed-configuration response and reports means with standard errors.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use ode_solvers::dop_shared::OutputType;
use ode_solvers::{Dop853, System};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dipole_coupling::{coupling_tensor, Configuration, CouplingTensor, TensorMode};
use crate::disorder_average::{pair_average, window_factor_moments};
pub use crate::disorder_average::window_effective_distance;
use crate::error::{MqcError, Result};
use crate::operator_basis::{Mat4, C64, ONE, ZERO};
use crate::scattering_expansion::TagFactor;
use crate::single_atom_dynamics::{cartesian_sigma, dipole_components, dipole_lowering, Polarization, PolarizationChannel};
use crate::spectra::{
    factor_values, spectrum_prefactor, CouplingVariant, DetectionChannel, DetectionDirection, ResponseEngine,
    ResponseOptions, SpectrumSeries, SPECTRUM_UNITS,
};

/// Two-atom Hilbert-space dimension.
pub const HDIM: usize = 16;
/// Length of vec(ρ).
pub const VDIM: usize = HDIM * HDIM;

/// Single-atom operator embedded on `atom` (0 or 1) of the pair.
pub fn embed(op: &Mat4, atom: usize) -> DMatrix<C64> {
    let id = DMatrix::<C64>::identity(4, 4);
    let o = DMatrix::from_fn(4, 4, |i, j| op[(i, j)]);
    if atom == 0 {
        o.kronecker(&id)
    } else {
        id.kronecker(&o)
    }
}

/// |g g⟩⟨g g|.
pub fn ground_pair_state() -> DMatrix<C64> {
    let mut rho = DMatrix::zeros(HDIM, HDIM);
    rho[(0, 0)] = ONE;
    rho
}

/// Master-equation generator for a pair, written directly on density matrices.
#[derive(Debug, Clone)]
pub struct PairLiouvillian {
    gamma: f64,
    tensor: Option<CouplingTensor>,
    d: [[DMatrix<C64>; 3]; 2],
    dd: [[DMatrix<C64>; 3]; 2],
    pe: [DMatrix<C64>; 2],
}

impl PairLiouvillian {
    pub fn new(gamma: f64, tensor: Option<CouplingTensor>) -> Self {
        let comps = dipole_components();
        let d: [[DMatrix<C64>; 3]; 2] = std::array::from_fn(|a| std::array::from_fn(|k| embed(&comps[k], a)));
        let dd: [[DMatrix<C64>; 3]; 2] = std::array::from_fn(|a| std::array::from_fn(|k| d[a][k].adjoint()));
        let pe: [DMatrix<C64>; 2] = std::array::from_fn(|a| {
            (0..3).fold(DMatrix::zeros(HDIM, HDIM), |acc, k| acc + &dd[a][k] * &d[a][k])
        });
        PairLiouvillian { gamma, tensor, d, dd, pe }
    }

    pub fn apply(&self, rho: &DMatrix<C64>) -> DMatrix<C64> {
        let g = C64::new(self.gamma, 0.0);
        let mut out = DMatrix::zeros(HDIM, HDIM);
        for a in 0..2 {
            for k in 0..3 {
                out += (&self.d[a][k] * rho * &self.dd[a][k]) * g;
            }
            out -= (&self.pe[a] * rho + rho * &self.pe[a]) * (g * 0.5);
        }
        if let Some(t) = &self.tensor {
            for alpha in 0..2 {
                let beta = 1 - alpha;
                for k in 0..3 {
                    for m in 0..3 {
                        let tkm = t.t[(k, m)];
                        let a = &self.d[beta][k] * rho * &self.dd[alpha][m] - rho * &self.dd[alpha][m] * &self.d[beta][k];
                        let b = &self.d[alpha][k] * rho * &self.dd[beta][m] - &self.dd[beta][m] * &self.d[alpha][k] * rho;
                        out += a * tkm + b * tkm.conj();
                    }
                }
            }
        }
        out
    }

    /// Dense matrix on column-major vec(ρ).
    pub fn matrix(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(VDIM, VDIM);
        for col in 0..VDIM {
            let mut e = DMatrix::zeros(HDIM, HDIM);
            e[(col % HDIM, col / HDIM)] = ONE;
            let out = self.apply(&e);
            m.set_column(col, &DVector::from_column_slice(out.as_slice()));
        }
        m
    }
}

/// Exact single-atom pulse unitary exp[−i(ϑ/2)(e^{iφ}S† + e^{−iφ}S)].
pub fn pulse_unitary(area: f64, pol: Polarization, phi: f64) -> Mat4 {
    let s = dipole_lowering(pol);
    let h = s.adjoint() * C64::from_polar(1.0, phi) + s * C64::from_polar(1.0, -phi);
    (h * C64::new(0.0, -0.5 * area)).exp()
}

/// Pulse unitary on the pair with per-atom phases.
pub fn pair_pulse_unitary(area: f64, pol: Polarization, phases: [f64; 2]) -> DMatrix<C64> {
    let u0 = pulse_unitary(area, pol, phases[0]);
    let u1 = pulse_unitary(area, pol, phases[1]);
    let a = DMatrix::from_fn(4, 4, |i, j| u0[(i, j)]);
    let b = DMatrix::from_fn(4, 4, |i, j| u1[(i, j)]);
    a.kronecker(&b)
}

fn kick(u: &DMatrix<C64>, rho: &DMatrix<C64>) -> DMatrix<C64> {
    u * rho * u.adjoint()
}

/// Harmonic (p0, p1) of the per-atom phase dependence of a kick, by DFT on n × n phases.
pub fn kick_harmonic_dft(
    area: f64,
    pol: Polarization,
    rho: &DMatrix<C64>,
    harmonic: (i32, i32),
    n: usize,
) -> DMatrix<C64> {
    let mut acc = DMatrix::zeros(HDIM, HDIM);
    for i in 0..n {
        for j in 0..n {
            let (p0, p1) = (2.0 * PI * i as f64 / n as f64, 2.0 * PI * j as f64 / n as f64);
            let w = C64::from_polar(1.0, -(harmonic.0 as f64 * p0 + harmonic.1 as f64 * p1));
            acc += kick(&pair_pulse_unitary(area, pol, [p0, p1]), rho) * w;
        }
    }
    acc / C64::new((n * n) as f64, 0.0)
}

/// Detected intensity Σα Σq Tr(|q⟩⟨q|α ρ) for the emitting states of a direction.
pub fn detect_operator(rho: &DMatrix<C64>, direction: DetectionDirection) -> C64 {
    let mut s = ZERO;
    for q in direction.emitting_states() {
        let p = cartesian_sigma(q, q);
        for a in 0..2 {
            s += (embed(&p, a) * rho).trace();
        }
    }
    s
}

/// Linear flow ρ̇ = (L − z)ρ in real block form, optionally with an accumulator ȧ = ρ.
struct ShiftedFlow {
    re: DMatrix<f64>,
    accumulate: bool,
}

impl ShiftedFlow {
    fn new(l: &DMatrix<C64>, z: C64, accumulate: bool) -> Self {
        let n = l.nrows();
        let mut re = DMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                let v = if i == j { l[(i, j)] - z } else { l[(i, j)] };
                re[(i, j)] = v.re;
                re[(i, j + n)] = -v.im;
                re[(i + n, j)] = v.im;
                re[(i + n, j + n)] = v.re;
            }
        }
        ShiftedFlow { re, accumulate }
    }
}

impl System<f64, DVector<f64>> for ShiftedFlow {
    fn system(&self, _t: f64, y: &DVector<f64>, dy: &mut DVector<f64>) {
        let m = self.re.nrows();
        let head = y.rows(0, m);
        dy.rows_mut(0, m).copy_from(&(&self.re * head));
        if self.accumulate {
            dy.rows_mut(m, m).copy_from(&head);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorSettings {
    pub rtol: f64,
    pub atol: f64,
    /// Upper integration limit for Laplace integrals, in 1/γ.
    pub horizon: f64,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        IntegratorSettings { rtol: 1e-10, atol: 1e-16, horizon: 60.0 }
    }
}

fn pack(v: &[C64], extra: usize) -> DVector<f64> {
    let n = v.len();
    let mut y = DVector::zeros(2 * n * (1 + extra));
    for (i, c) in v.iter().enumerate() {
        y[i] = c.re;
        y[i + n] = c.im;
    }
    y
}

fn unpack(y: &DVector<f64>, block: usize, n: usize) -> Vec<C64> {
    let off = 2 * n * block;
    (0..n).map(|i| C64::new(y[off + i], y[off + i + n])).collect()
}

fn run_flow(flow: ShiftedFlow, y0: DVector<f64>, t_end: f64, settings: &IntegratorSettings) -> Result<DVector<f64>> {
    let mut stepper = Dop853::new(flow, 0.0, t_end, t_end, y0, settings.rtol, settings.atol);
    stepper.set_output(OutputType::Sparse);
    let stats = stepper
        .integrate()
        .map_err(|e| MqcError::Numeric(format!("integrator failed: {e:?}")))?;
    let reached = stepper.x_out().last().copied().unwrap_or(0.0);
    if (reached - t_end).abs() > 1e-12 * t_end.max(1.0) {
        return Err(MqcError::Numeric(format!("integrator stopped at t = {reached} before {t_end} ({stats})")));
    }
    stepper
        .y_out()
        .last()
        .cloned()
        .ok_or_else(|| MqcError::Numeric(format!("integrator returned no output ({stats})")))
}

/// Integrates ρ from 0 to `t_end`; returns ρ(t_end) and ∫0^t_end e^{−zk t} ρ dt per z.
pub fn integrate_with_laplace(
    l: &DMatrix<C64>,
    rho0: &DMatrix<C64>,
    zs: &[C64],
    t_end: f64,
    settings: &IntegratorSettings,
) -> Result<(DMatrix<C64>, Vec<DMatrix<C64>>)> {
    let n = rho0.len();
    if t_end == 0.0 || rho0.iter().all(|v| *v == ZERO) {
        return Ok((rho0.clone(), vec![DMatrix::zeros(HDIM, HDIM); zs.len()]));
    }
    let to_mat = |y: &DVector<f64>, b: usize| DMatrix::from_column_slice(HDIM, HDIM, &unpack(y, b, n));
    let mut accs = Vec::with_capacity(zs.len());
    let mut end = None;
    for z in zs {
        let y = run_flow(ShiftedFlow::new(l, *z, true), pack(rho0.as_slice(), 1), t_end, settings)?;
        if end.is_none() {
            end = Some(to_mat(&y, 0) * (z * t_end).exp());
        }
        accs.push(to_mat(&y, 1));
    }
    let end = match end {
        Some(e) => e,
        None => to_mat(&run_flow(ShiftedFlow::new(l, ZERO, false), pack(rho0.as_slice(), 0), t_end, settings)?, 0),
    };
    Ok((end, accs))
}

/// Settings of one fixed-configuration Laplace comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplaceOracleOptions {
    pub area: f64,
    pub kappa: i32,
    pub channel: PolarizationChannel,
    /// Detunings δ with z1 = iδ, in units of γ.
    pub detunings: Vec<f64>,
    pub mode: TensorMode,
    pub phase_samples: usize,
    pub integrator: IntegratorSettings,
}

impl LaplaceOracleOptions {
    pub fn new(area: f64, kappa: i32, channel: PolarizationChannel, detunings: Vec<f64>) -> Self {
        LaplaceOracleOptions {
            area,
            kappa,
            channel,
            detunings,
            mode: TensorMode::Exact,
            phase_samples: 8,
            integrator: IntegratorSettings::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.phase_samples < 5 {
            return Err(MqcError::Input("at least 5 phase samples are needed per atom".into()));
        }
        if self.kappa == 0 || self.kappa.abs() > 2 {
            return Err(MqcError::Input(format!("kappa must be ±1 or ±2, got {}", self.kappa)));
        }
        if self.detunings.is_empty() {
            return Err(MqcError::Input("no detunings given".into()));
        }
        Ok(())
    }
}

/// Spectrum values S at each detuning for both detection directions, [x, y].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplaceValues {
    pub x: Vec<C64>,
    pub y: Vec<C64>,
}

/// LU factors of z − L + |ρss⟩⟨tr|, which agrees with z − L on traceless operators
/// and stays invertible at z = 0.
fn traceless_resolvent_lu(l: &DMatrix<C64>, z: C64) -> nalgebra::LU<C64, nalgebra::Dyn, nalgebra::Dyn> {
    let mut m = -l.clone();
    for i in 0..VDIM {
        m[(i, i)] += z;
    }
    // The steady state |gg⟩⟨gg| sits at vec index 0.
    for d in 0..HDIM {
        m[(0, d * HDIM + d)] += ONE;
    }
    m.lu()
}

fn solve_traceless(
    lu: &nalgebra::LU<C64, nalgebra::Dyn, nalgebra::Dyn>,
    y: &DMatrix<C64>,
    z: C64,
) -> Result<DMatrix<C64>> {
    if y.trace().norm() > 1e-12 * y.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1e-300) {
        return Err(MqcError::Invariant("resolvent input is not traceless".into()));
    }
    let b = DVector::from_column_slice(y.as_slice());
    let x = lu.solve(&b).ok_or(MqcError::Singular(z.norm()))?;
    Ok(DMatrix::from_column_slice(HDIM, HDIM, x.as_slice()))
}

fn first_pulse_components(opts: &LaplaceOracleOptions) -> Vec<((i32, i32), DMatrix<C64>)> {
    let pol1 = opts.channel.pulse_polarization(1);
    let rho0 = ground_pair_state();
    let mut out = Vec::new();
    for a in -2..=2 {
        let c = -opts.kappa - a;
        if (-2..=2).contains(&c) {
            let x = kick_harmonic_dft(opts.area, pol1, &rho0, (a, c), opts.phase_samples);
            // Harmonics that vanish exactly come back as DFT roundoff.
            if x.iter().any(|v| v.norm() > 1e-13) {
                out.push(((a, c), x));
            }
        }
    }
    out
}

fn finish(opts: &LaplaceOracleOptions, l: &DMatrix<C64>, g1: Vec<Vec<((i32, i32), DMatrix<C64>)>>, ode: bool) -> Result<LaplaceValues> {
    let pol2 = opts.channel.pulse_polarization(2);
    let pref = spectrum_prefactor();
    let mut out = LaplaceValues { x: Vec::new(), y: Vec::new() };
    for comps in g1 {
        let mut y = DMatrix::zeros(HDIM, HDIM);
        for ((a, c), g) in comps {
            y += kick_harmonic_dft(opts.area, pol2, &g, (-a, -c), opts.phase_samples);
        }
        let integral = if ode {
            let (end, acc) = integrate_with_laplace(l, &y, &[ZERO], opts.integrator.horizon, &opts.integrator)?;
            check_decayed(&end, &y)?;
            acc.into_iter().next().expect("one accumulator")
        } else {
            solve_traceless(&traceless_resolvent_lu(l, ZERO), &y, ZERO)?
        };
        out.x.push(detect_operator(&integral, DetectionDirection::X) * pref);
        out.y.push(detect_operator(&integral, DetectionDirection::Y) * pref);
    }
    Ok(out)
}

fn check_decayed(end: &DMatrix<C64>, start: &DMatrix<C64>) -> Result<()> {
    let s = start.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let e = end.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if e > 1e-9 * s + 1e-14 {
        return Err(MqcError::Numeric(format!("state has not decayed at the integration horizon ({e:.3e})")));
    }
    Ok(())
}

/// Demodulated Laplace components from time integration, at fixed configuration.
///
/// Per-atom pulse phases are demodulated separately and recombined with
/// cancelling phases on each atom, which corresponds to averaging over
/// position phases.
pub fn laplace_oracle(config: &Configuration, opts: &LaplaceOracleOptions) -> Result<LaplaceValues> {
    opts.validate()?;
    let tensor = coupling_tensor(config, opts.mode, 1.0)?;
    let l = PairLiouvillian::new(1.0, Some(tensor)).matrix();
    let zs: Vec<C64> = opts.detunings.iter().map(|d| C64::new(0.0, *d)).collect();
    let mut g1: Vec<Vec<((i32, i32), DMatrix<C64>)>> = vec![Vec::new(); zs.len()];
    for (h, x) in first_pulse_components(opts) {
        let (end, acc) = integrate_with_laplace(&l, &x, &zs, opts.integrator.horizon, &opts.integrator)?;
        check_decayed(&end, &x)?;
        for (k, a) in acc.into_iter().enumerate() {
            g1[k].push((h, a));
        }
    }
    finish(opts, &l, g1, true)
}

/// The same quantity as [`laplace_oracle`] from direct linear solves of (z − L).
pub fn laplace_direct(config: &Configuration, opts: &LaplaceOracleOptions) -> Result<LaplaceValues> {
    opts.validate()?;
    let tensor = coupling_tensor(config, opts.mode, 1.0)?;
    let l = PairLiouvillian::new(1.0, Some(tensor)).matrix();
    let comps = first_pulse_components(opts);
    let mut g1 = Vec::new();
    for d in &opts.detunings {
        let z = C64::new(0.0, *d);
        let lu = traceless_resolvent_lu(&l, z);
        let mut row = Vec::new();
        for (h, x) in &comps {
            row.push((*h, solve_traceless(&lu, x, z)?));
        }
        g1.push(row);
    }
    finish(opts, &l, g1, false)
}

/// Engine prediction at a fixed configuration for the same detunings.
pub fn laplace_analytic(config: &Configuration, opts: &LaplaceOracleOptions) -> Result<LaplaceValues> {
    opts.validate()?;
    let tensor = coupling_tensor(config, opts.mode, 1.0)?;
    let mut out = LaplaceValues { x: Vec::new(), y: Vec::new() };
    for dir in DetectionDirection::ALL {
        let ch = DetectionChannel { direction: dir, polarization: opts.channel };
        let e = ResponseEngine::new(opts.kappa, ch, ResponseOptions::new(opts.area))?;
        let r = e.for_tensor(&tensor);
        let vals: Vec<C64> =
            opts.detunings.iter().map(|d| r.eval(C64::new(0.0, *d), 1.0) * spectrum_prefactor()).collect();
        match dir {
            DetectionDirection::X => out.x = vals,
            DetectionDirection::Y => out.y = vals,
        }
    }
    Ok(out)
}

/// One transient-intensity run with global pulse phases φ1 = 0, φ2 = φ21.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRun {
    pub configuration: Configuration,
    pub area: f64,
    pub channel: PolarizationChannel,
    pub tau_grid: Vec<f64>,
    pub t_grid: Vec<f64>,
    pub phi21: Vec<f64>,
    pub mode: TensorMode,
    /// Include the coupling at all.
    pub interaction: bool,
    pub integrator: IntegratorSettings,
}

/// I(τ, t_fl, φ21) indexed [τ][φ21][t_fl], per detection direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransientIntensities {
    pub x: Vec<Vec<Vec<f64>>>,
    pub y: Vec<Vec<Vec<f64>>>,
}

fn check_sorted_nonnegative(g: &[f64], name: &str) -> Result<()> {
    if g.is_empty() || g.iter().any(|t| !(*t >= 0.0 && t.is_finite())) || g.windows(2).any(|w| w[1] <= w[0]) {
        return Err(MqcError::Input(format!("{name} grid must be nonempty, nonnegative and increasing")));
    }
    Ok(())
}

/// Propagates ρ across a sorted time grid, returning ρ at each grid point.
fn propagate_on_grid(
    l: &DMatrix<C64>,
    rho0: &DMatrix<C64>,
    grid: &[f64],
    settings: &IntegratorSettings,
) -> Result<Vec<DMatrix<C64>>> {
    let mut out = Vec::with_capacity(grid.len());
    let mut rho = rho0.clone();
    let mut t = 0.0;
    for &tg in grid {
        let (next, _) = integrate_with_laplace(l, &rho, &[], tg - t, settings)?;
        rho = next;
        t = tg;
        check_state(&rho)?;
        out.push(rho.clone());
    }
    Ok(out)
}

/// Trace, Hermiticity and population bounds along a trajectory.
fn check_state(rho: &DMatrix<C64>) -> Result<()> {
    let tr = rho.trace();
    if (tr - ONE).norm() > 1e-10 {
        return Err(MqcError::Invariant(format!("trace drifted to {tr}")));
    }
    if (rho - rho.adjoint()).iter().any(|v| v.norm() > 1e-10) {
        return Err(MqcError::Invariant("density matrix lost Hermiticity".into()));
    }
    if (0..HDIM).any(|i| !(-1e-10..=1.0 + 1e-10).contains(&rho[(i, i)].re)) {
        return Err(MqcError::Invariant("population outside [0, 1]".into()));
    }
    Ok(())
}

pub fn time_domain_evolve(run: &OracleRun) -> Result<TransientIntensities> {
    check_sorted_nonnegative(&run.tau_grid, "tau")?;
    check_sorted_nonnegative(&run.t_grid, "fluorescence time")?;
    if run.phi21.is_empty() {
        return Err(MqcError::Input("no phase samples".into()));
    }
    if !(run.area >= 0.0) {
        return Err(MqcError::Input("pulse area must be >= 0".into()));
    }
    let tensor = if run.interaction { Some(coupling_tensor(&run.configuration, run.mode, 1.0)?) } else { None };
    let l = PairLiouvillian::new(1.0, tensor).matrix();
    let pol1 = run.channel.pulse_polarization(1);
    let pol2 = run.channel.pulse_polarization(2);
    let after1 = kick(&pair_pulse_unitary(run.area, pol1, [0.0, 0.0]), &ground_pair_state());
    let states = propagate_on_grid(&l, &after1, &run.tau_grid, &run.integrator)?;
    let per_tau: Vec<Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)>> = states
        .par_iter()
        .map(|rho| {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for &phi in &run.phi21 {
                let r2 = kick(&pair_pulse_unitary(run.area, pol2, [phi, phi]), rho);
                let traj = propagate_on_grid(&l, &r2, &run.t_grid, &run.integrator)?;
                let (mut ix, mut iy) = (Vec::new(), Vec::new());
                for s in &traj {
                    let (vx, vy) = (detect_operator(s, DetectionDirection::X), detect_operator(s, DetectionDirection::Y));
                    for v in [vx, vy] {
                        if v.re < -1e-12 || v.im.abs() > 1e-10 {
                            return Err(MqcError::Invariant(format!("intensity {v} is not a nonnegative real")));
                        }
                    }
                    ix.push(vx.re);
                    iy.push(vy.re);
                }
                xs.push(ix);
                ys.push(iy);
            }
            Ok((xs, ys))
        })
        .collect();
    let mut out = TransientIntensities { x: Vec::new(), y: Vec::new() };
    for r in per_tau {
        let (x, y) = r?;
        out.x.push(x);
        out.y.push(y);
    }
    Ok(out)
}

/// Harmonic l of samples taken at φ = 2πk/N: (1/N) Σ I e^{−ilφ}.
pub fn numeric_demodulate(samples: &[f64], l: i32) -> C64 {
    let n = samples.len();
    if n == 0 {
        return ZERO;
    }
    samples
        .iter()
        .enumerate()
        .map(|(k, v)| C64::from_polar(*v, -(l as f64) * 2.0 * PI * k as f64 / n as f64))
        .sum::<C64>()
        / n as f64
}

/// Equally spaced phases on [0, 2π).
pub fn phase_samples(n: usize) -> Vec<f64> {
    (0..n).map(|k| 2.0 * PI * k as f64 / n as f64).collect()
}

/// Isotropic direction and uniform distance in a window.
pub fn sample_configuration<R: Rng>(rng: &mut R, window: (f64, f64)) -> Result<Configuration> {
    let xi = rng.random_range(window.0..=window.1);
    let ct: f64 = rng.random_range(-1.0..=1.0);
    let phi = rng.random_range(0.0..2.0 * PI);
    Configuration::new(xi, ct.clamp(-1.0, 1.0).acos(), phi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McOptions {
    pub samples: usize,
    pub window: (f64, f64),
    pub seed: u64,
    pub area: f64,
    pub variant: CouplingVariant,
    pub interpulse_interaction: bool,
    pub mode: TensorMode,
    /// Number of per-configuration traces to keep.
    pub keep_traces: usize,
}

impl McOptions {
    pub fn new(samples: usize, window: (f64, f64), seed: u64, area: f64) -> Self {
        McOptions {
            samples,
            window,
            seed,
            area,
            variant: CouplingVariant::Full,
            interpulse_interaction: true,
            mode: TensorMode::Exact,
            keep_traces: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(MqcError::Input("Monte-Carlo needs at least one sample".into()));
        }
        if !(self.window.0 > 0.0 && self.window.1 >= self.window.0 && self.window.1.is_finite()) {
            return Err(MqcError::Input(format!("invalid distance window {:?}", self.window)));
        }
        Ok(())
    }
}

/// Configurations per independent RNG stream.
const BLOCK: usize = 1024;

/// Running sums for complex means with separate real and imaginary variances.
#[derive(Debug, Clone, Default)]
struct Moments {
    sum: Vec<C64>,
    sq_re: Vec<f64>,
    sq_im: Vec<f64>,
}

impl Moments {
    fn new(n: usize) -> Self {
        Moments { sum: vec![ZERO; n], sq_re: vec![0.0; n], sq_im: vec![0.0; n] }
    }

    fn push(&mut self, v: &[C64]) {
        for (i, x) in v.iter().enumerate() {
            self.sum[i] += x;
            self.sq_re[i] += x.re * x.re;
            self.sq_im[i] += x.im * x.im;
        }
    }

    fn merge(mut self, o: Moments) -> Moments {
        for i in 0..self.sum.len() {
            self.sum[i] += o.sum[i];
            self.sq_re[i] += o.sq_re[i];
            self.sq_im[i] += o.sq_im[i];
        }
        self
    }

    /// Means and standard errors (real and imaginary parts separately).
    fn finish(&self, n: usize) -> (Vec<C64>, Vec<C64>) {
        let nf = n as f64;
        let mean: Vec<C64> = self.sum.iter().map(|s| s / nf).collect();
        let se = mean
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let sd = |sq: f64, mu: f64| {
                    if n < 2 {
                        0.0
                    } else {
                        ((sq / nf - mu * mu).max(0.0) * nf / (nf - 1.0) / nf).sqrt()
                    }
                };
                C64::new(sd(self.sq_re[i], m.re), sd(self.sq_im[i], m.im))
            })
            .collect();
        (mean, se)
    }
}

/// Runs `f` over all sampled configurations in deterministic blocks.
fn sample_blocks<F>(opts: &McOptions, width: usize, f: F) -> Result<Moments>
where
    F: Fn(&CouplingTensor, &mut Vec<C64>) + Sync,
{
    let blocks = opts.samples.div_ceil(BLOCK);
    let parts: Vec<Result<Moments>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(b as u64);
            let mut m = Moments::new(width);
            let mut buf = vec![ZERO; width];
            let n = BLOCK.min(opts.samples - b * BLOCK);
            for _ in 0..n {
                let cfg = sample_configuration(&mut rng, opts.window)?;
                let mut t = coupling_tensor(&cfg, opts.mode, 1.0)?;
                if opts.variant == CouplingVariant::GammaZeroed {
                    t = t.gamma_zeroed();
                }
                f(&t, &mut buf);
                m.push(&buf);
            }
            Ok(m)
        })
        .collect();
    let mut total = Moments::new(width);
    for p in parts {
        total = total.merge(p?);
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McResult {
    pub series: SpectrumSeries,
    /// Per-configuration spectra of the first configurations.
    pub traces: Vec<Vec<C64>>,
    pub seed: u64,
    pub samples: usize,
}

fn fixed_value(pairs: &[Vec<C64>], singles: &[C64], k: usize, vals: &[C64; 18]) -> C64 {
    let p = &pairs[k];
    let mut s = singles[k];
    for i in 0..18 {
        let mut row = ZERO;
        for j in 0..18 {
            row += p[i * 18 + j] * vals[j];
        }
        s += row * vals[i];
    }
    s * spectrum_prefactor()
}

/// Monte-Carlo configuration average of fixed-configuration spectra.
pub fn monte_carlo_spectrum(
    kappa: i32,
    channel: DetectionChannel,
    grid: &[f64],
    opts: &McOptions,
) -> Result<McResult> {
    opts.validate()?;
    if grid.is_empty() {
        return Err(MqcError::Input("frequency grid is empty".into()));
    }
    let ropts = ResponseOptions {
        area: opts.area,
        variant: CouplingVariant::Full,
        interpulse_interaction: opts.interpulse_interaction,
        z2: ZERO,
    };
    let engine = ResponseEngine::new(kappa, channel, ropts)?;
    let zs: Vec<C64> = grid.iter().map(|d| C64::new(0.0, *d)).collect();
    let pairs: Vec<Vec<C64>> = zs.iter().map(|z| engine.pair_matrix(*z)).collect();
    let singles: Vec<C64> = zs.iter().map(|z| engine.single.eval(*z, 1.0)).collect();
    let value = |t: &CouplingTensor, buf: &mut Vec<C64>| {
        let vals = factor_values(t);
        for k in 0..zs.len() {
            buf[k] = fixed_value(&pairs, &singles, k, &vals);
        }
    };
    let m = sample_blocks(opts, zs.len(), value)?;
    let (mean, se) = m.finish(opts.samples);
    let mut traces = Vec::new();
    if opts.keep_traces > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(0);
        let mut buf = vec![ZERO; zs.len()];
        for _ in 0..opts.keep_traces.min(opts.samples).min(BLOCK) {
            let cfg = sample_configuration(&mut rng, opts.window)?;
            let mut t = coupling_tensor(&cfg, opts.mode, 1.0)?;
            if opts.variant == CouplingVariant::GammaZeroed {
                t = t.gamma_zeroed();
            }
            value(&t, &mut buf);
            traces.push(buf.clone());
        }
    }
    Ok(McResult {
        series: SpectrumSeries {
            kappa,
            channel,
            variant: opts.variant,
            omega_detuning: grid.to_vec(),
            values: mean,
            stderr: Some(se),
            units: SPECTRUM_UNITS.into(),
        },
        traces,
        seed: opts.seed,
        samples: opts.samples,
    })
}

/// Sample means of all ordered degree-2 factor products f1 f2, with standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorMoments {
    pub factors: Vec<String>,
    /// Row-major 18×18 means of ⟨f1 f2⟩.
    pub mean: Vec<C64>,
    pub stderr: Vec<C64>,
}

pub fn monte_carlo_tensor_moments(opts: &McOptions) -> Result<TensorMoments> {
    opts.validate()?;
    let m = sample_blocks(opts, 18 * 18, |t, buf| {
        let v = factor_values(t);
        for i in 0..18 {
            for j in 0..18 {
                buf[i * 18 + j] = v[i] * v[j];
            }
        }
    })?;
    let (mean, stderr) = m.finish(opts.samples);
    Ok(TensorMoments { factors: TagFactor::all().iter().map(|f| f.to_string()).collect(), mean, stderr })
}

/// Expected fixed-configuration value under the sampling distribution, from exact window moments.
pub fn window_expectation(engine: &ResponseEngine, delta: f64, window: (f64, f64), mode: TensorMode) -> Result<C64> {
    let m = window_factor_moments(window, mode, 1.0)?;
    let z = C64::new(0.0, delta);
    let p = engine.pair_matrix(z);
    let s = engine.single.eval(z, 1.0) + p.iter().zip(&m).map(|(a, b)| a * b).sum::<C64>();
    Ok(s * spectrum_prefactor())
}

/// Analytic ⟨f1 f2⟩ for the isotropic mixed-pair average at distance ξ̄.
pub fn analytic_tensor_moments(xibar: f64) -> Vec<C64> {
    let f = TagFactor::all();
    let mut out = vec![ZERO; 18 * 18];
    for i in 0..18 {
        for j in 0..18 {
            if f[i].is_conj() != f[j].is_conj() {
                let (t, s) = if f[i].is_conj() { (f[j], f[i]) } else { (f[i], f[j]) };
                out[i * 18 + j] = C64::new(pair_average(t.indices(), s.indices(), xibar, 1.0), 0.0);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator_basis::{basis, TwoAtomBasis, TwoAtomVector};
    use crate::scattering_expansion::pair_sectors;
    use crate::single_atom_dynamics::{kick_harmonics, state_free_propagator};
    use crate::superoperator::KronSum;
    use approx::assert_relative_eq;

    #[test]
    fn test_demodulate_constant_and_cosine() {
        let n = 8;
        let ph = phase_samples(n);
        let c = vec![2.5; n];
        assert_relative_eq!(numeric_demodulate(&c, 0).re, 2.5, epsilon = 1e-15);
        assert!(numeric_demodulate(&c, 1).norm() < 1e-15);
        let cs: Vec<f64> = ph.iter().map(|p| p.cos()).collect();
        for l in [1, -1] {
            let v = numeric_demodulate(&cs, l);
            assert_relative_eq!(v.re, 0.5, epsilon = 1e-15);
            assert!(v.im.abs() < 1e-15);
        }
    }

    #[test]
    fn test_exact_kick_matches_harmonics() {
        let (area, pol, phi) = (0.9, Polarization::Y, 0.7);
        let u = pulse_unitary(area, pol, phi);
        let b = basis();
        let direct = b.superoperator(|q| u * q * u.adjoint());
        let harm = kick_harmonics(area, pol).reassemble(phi);
        assert!((direct - harm).camax() < 1e-13);
    }

    #[test]
    fn test_generator_matches_free_propagator() {
        let l = PairLiouvillian::new(1.0, None);
        let t = 1e-6;
        let p = state_free_propagator(1.0, t).unwrap();
        let mut k = KronSum::new();
        k.push(ONE, p, p);
        let mut c = crate::operator_basis::Mat16::zeros();
        for i in 0..16 {
            for j in 0..16 {
                c[(i, j)] = C64::new(((3 * i + 7 * j) % 11) as f64 / 11.0 - 0.4, ((5 * i + j) % 7) as f64 / 7.0 - 0.5);
            }
        }
        let tb = TwoAtomBasis::new();
        let v = TwoAtomVector(c);
        let fd = (tb.reconstruct(&k.apply(&v)) - tb.reconstruct(&v)) / C64::new(t, 0.0);
        let exact = l.apply(&tb.reconstruct(&v));
        let scale = exact.iter().map(|x| x.norm()).fold(0.0, f64::max);
        let err = (fd - exact).iter().map(|x| x.norm()).fold(0.0, f64::max);
        assert!(err < 1e-5 * scale, "{err}");
        // Sector decomposition is consistent with the dense generator.
        let _ = pair_sectors();
    }

    #[test]
    fn test_single_pulse_population_decay() {
        let area = 0.8;
        let cfg = Configuration::new(1000.0, 0.3, 0.2).unwrap();
        let run = OracleRun {
            configuration: cfg,
            area: 0.0,
            channel: PolarizationChannel::Parallel,
            tau_grid: vec![0.0],
            t_grid: vec![0.0, 0.5, 2.0],
            phi21: vec![0.0],
            mode: TensorMode::Exact,
            interaction: false,
            integrator: IntegratorSettings::default(),
        };
        let zero = time_domain_evolve(&run).unwrap();
        assert!(zero.y[0][0].iter().all(|v| v.abs() < 1e-15));
        // One pulse of area ϑ: second pulse of zero area is the identity.
        let l = PairLiouvillian::new(1.0, None).matrix();
        let rho = kick(&pair_pulse_unitary(area, Polarization::X, [0.0, 0.0]), &ground_pair_state());
        let traj = propagate_on_grid(&l, &rho, &[0.5, 2.0], &IntegratorSettings::default()).unwrap();
        let s2 = (0.5 * area).sin().powi(2);
        for (s, t) in traj.iter().zip([0.5, 2.0]) {
            let pop = detect_operator(s, DetectionDirection::Y).re;
            assert_relative_eq!(pop, 2.0 * s2 * (-t as f64).exp(), max_relative = 1e-9);
        }
    }

    #[test]
    fn test_direct_solve_matches_ode() {
        let cfg = Configuration::new(30.0, 1.1, 0.4).unwrap();
        let opts = LaplaceOracleOptions::new(0.5, 1, PolarizationChannel::Parallel, vec![0.0, 0.8]);
        let a = laplace_oracle(&cfg, &opts).unwrap();
        let b = laplace_direct(&cfg, &opts).unwrap();
        for (u, v) in a.y.iter().zip(&b.y) {
            assert!((u - v).norm() < 1e-8 * v.norm(), "{u} {v}");
        }
    }

    #[test]
    fn test_mc_deterministic() {
        let ch = DetectionChannel { direction: DetectionDirection::X, polarization: PolarizationChannel::Parallel };
        let opts = McOptions::new(50, (67.2, 92.8), 7, 0.3);
        let a = monte_carlo_spectrum(1, ch, &[0.0, 1.0], &opts).unwrap();
        let b = monte_carlo_spectrum(1, ch, &[0.0, 1.0], &opts).unwrap();
        assert_eq!(a, b);
        assert!(monte_carlo_spectrum(1, ch, &[0.0], &McOptions::new(0, (67.2, 92.8), 7, 0.3)).is_err());
    }
}
