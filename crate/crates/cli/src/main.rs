// SPDX-License-Identifier: Apache-2.0

//! Command-line front end: spectra, presets, oracle checks, Monte-Carlo
//! averages, cross-sections and the acceptance suite.

mod config;
mod output;

use std::f64::consts::PI;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mqcspec::dipole_coupling::Configuration;
use mqcspec::oracle_validation::{
    laplace_analytic, laplace_direct, laplace_oracle, monte_carlo_spectrum, LaplaceOracleOptions, McOptions,
};
use mqcspec::single_atom_dynamics::PolarizationChannel;
use mqcspec::spectra::{
    mean_free_path, mean_scattering_cross_section, resonant_cross_section, spectrum, table1_computed,
    table1_leading_order, CouplingVariant, SpectrumOptions,
};
use mqcspec::validation::{oracle_directions, run_validation};
use mqcspec::MqcError;
use serde_json::json;

use crate::config::{GridSpec, McSection, Resolved, RunConfig};
use crate::output::{fmt_e, RunOutput};

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Numeric(String),
    Io(String),
    CriteriaFailed(Vec<String>),
}

impl From<MqcError> for CliError {
    fn from(e: MqcError) -> Self {
        match e {
            MqcError::Input(_) => CliError::Input(e.to_string()),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::CriteriaFailed(_) => 1,
            CliError::Input(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "invalid input: {m}"),
            CliError::Numeric(m) => write!(f, "numeric failure: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::CriteriaFailed(c) => write!(f, "failed criteria: {}", c.join(", ")),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "mqcspec", version, about = "Multiple-quantum-coherence fluorescence spectra of dipole-coupled atom pairs")]
struct Cli {
    /// TOML run configuration. Flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true, env = "MQCSPEC_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct ParamArgs {
    /// Decay rate γ in rad/s.
    #[arg(long)]
    gamma: Option<f64>,
    /// Transition wavelength in m.
    #[arg(long)]
    lambda0: Option<f64>,
    /// Pulse area ϑ in rad.
    #[arg(long)]
    area: Option<f64>,
    /// Pulse energy in J (with --pulse-duration and --beam-waist).
    #[arg(long)]
    pulse_energy: Option<f64>,
    /// Pulse duration in s.
    #[arg(long)]
    pulse_duration: Option<f64>,
    /// Beam waist in m.
    #[arg(long)]
    beam_waist: Option<f64>,
    /// Mean scaled distance ξ̄ = k0 r̄.
    #[arg(long)]
    xibar: Option<f64>,
    /// Atom density in m⁻³.
    #[arg(long)]
    density: Option<f64>,
    /// Mean interatomic distance r̄ in m.
    #[arg(long)]
    mean_distance: Option<f64>,
    /// Modulation orders, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    kappa: Option<Vec<i32>>,
    /// Channels such as y_par,x_perp.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    channels: Option<Vec<String>>,
    /// Lowest detuning in units of γ.
    #[arg(long, allow_hyphen_values = true)]
    grid_lo: Option<f64>,
    /// Highest detuning in units of γ.
    #[arg(long, allow_hyphen_values = true)]
    grid_hi: Option<f64>,
    /// Number of detuning points.
    #[arg(long)]
    grid_points: Option<usize>,
    /// full or gamma0.
    #[arg(long)]
    variant: Option<String>,
    /// exact, far-field or near-field coupling tensor.
    #[arg(long)]
    tensor: Option<String>,
    /// Switch off the coupling between the two pulses.
    #[arg(long)]
    no_interpulse_interaction: bool,
    /// Monte-Carlo configurations.
    #[arg(long)]
    samples: Option<usize>,
    /// Distance window LO,HI in units of 1/k0.
    #[arg(long, value_delimiter = ',', num_args = 2, value_names = ["LO", "HI"])]
    window: Option<Vec<f64>>,
    /// Monte-Carlo random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Per-configuration traces to write.
    #[arg(long)]
    keep_traces: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

impl ParamArgs {
    fn to_config(&self) -> RunConfig {
        RunConfig {
            gamma: self.gamma,
            lambda0: self.lambda0,
            area: self.area,
            pulse_energy: self.pulse_energy,
            pulse_duration: self.pulse_duration,
            beam_waist: self.beam_waist,
            xibar: self.xibar,
            density: self.density,
            mean_distance: self.mean_distance,
            kappa: self.kappa.clone(),
            channels: self.channels.clone(),
            grid: GridSpec { lo: self.grid_lo, hi: self.grid_hi, points: self.grid_points },
            variant: self.variant.clone(),
            tensor: self.tensor.clone(),
            interpulse_interaction: self.no_interpulse_interaction.then_some(false),
            mc: McSection {
                samples: self.samples,
                window: self.window.as_ref().map(|w| (w[0], w[1])),
                seed: self.seed,
                keep_traces: self.keep_traces,
            },
            out_dir: self.out_dir.clone(),
            validate: None,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq)]
enum Preset {
    /// All averaged and Γ-zeroed spectra at ϑ = 0.14π, ξ̄ = 80.
    Fig4,
    /// Closed-form peak values next to computed and fitted ones.
    Table1,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Configuration-averaged spectra.
    Spectrum {
        #[arg(long)]
        preset: Option<Preset>,
        #[command(flatten)]
        params: ParamArgs,
    },
    /// Peak values against the small-area closed forms.
    Table1 {
        #[command(flatten)]
        params: ParamArgs,
    },
    /// Fixed-configuration comparison of the time-domain oracle with the analytic response.
    OracleCheck {
        /// Scaled distance ξ.
        #[arg(long, default_value_t = 1000.0)]
        xi: f64,
        /// Number of random directions.
        #[arg(long, default_value_t = 3)]
        directions: usize,
        /// Detunings in units of γ.
        #[arg(long, value_delimiter = ',', default_value = "0,0.5,2", allow_hyphen_values = true)]
        detunings: Vec<f64>,
        /// Also solve the resolvent equations directly.
        #[arg(long)]
        direct: bool,
        #[command(flatten)]
        params: ParamArgs,
    },
    /// Monte-Carlo configuration average with standard errors.
    McAverage {
        #[command(flatten)]
        params: ParamArgs,
    },
    /// Doppler-averaged scattering cross-section and mean free path.
    CrossSection {
        /// rms Doppler shift in rad/s.
        #[arg(long)]
        delta_bar: Option<f64>,
        #[command(flatten)]
        params: ParamArgs,
    },
    /// Acceptance criteria with measured residuals.
    Validate {
        /// Criteria to run, comma separated.
        #[arg(long, value_delimiter = ',')]
        criteria: Option<Vec<u8>>,
        #[command(flatten)]
        params: ParamArgs,
    },
}

fn layered(file: Option<&PathBuf>, preset: Option<RunConfig>, params: &ParamArgs) -> Result<RunConfig, CliError> {
    let mut cfg = preset.unwrap_or_default();
    if let Some(p) = file {
        cfg.overlay(&RunConfig::load(p)?);
    }
    cfg.overlay(&params.to_config());
    Ok(cfg)
}

fn spectrum_options(r: &Resolved, variant: CouplingVariant) -> SpectrumOptions {
    let mut o = SpectrumOptions::new(r.area, r.xibar);
    o.variant = variant;
    o.interpulse_interaction = r.interpulse_interaction;
    o
}

fn run_spectra(r: &Resolved, variants: &[CouplingVariant], name: &str) -> Result<(), CliError> {
    let mut out = RunOutput::new(&r.out_dir, name, r)?;
    let mut peaks = Vec::new();
    for v in variants {
        for k in &r.kappas {
            for c in &r.channels {
                let s = spectrum(*k, *c, &r.grid, &spectrum_options(r, *v))?;
                let path = out.series(&s)?;
                let centre = s.omega_detuning.iter().position(|w| *w == 0.0);
                if let Some(i) = centre {
                    peaks.push(json!({ "series": s.label(), "re_peak": s.values[i].re }));
                }
                println!("{}", path.display());
            }
        }
    }
    out.finish(json!({ "series_count": variants.len() * r.kappas.len() * r.channels.len(), "peaks": peaks }))?;
    Ok(())
}

fn run_table1(r: &Resolved) -> Result<(), CliError> {
    let mut out = RunOutput::new(&r.out_dir, "table1", r)?;
    let opts = spectrum_options(r, r.variant);
    let (at, norm) = table1_computed(&opts)?;
    let lead = table1_leading_order(r.area, r.xibar);
    let unit = table1_leading_order(1.0, r.xibar);
    let scales = [0.5, 1.0, 2.0];
    let fits: Vec<_> = scales
        .iter()
        .map(|s| table1_computed(&SpectrumOptions { area: r.area * s, ..opts }).map(|(t, _)| t))
        .collect::<Result<_, _>>()?;
    let mut rows = Vec::new();
    for (i, ((k, c, v), (_, _, l))) in at.entries().iter().zip(lead.entries()).enumerate() {
        let p = if *k == 1 { 2 } else { 4 };
        let coef = unit.entries()[i].2;
        let pts: Vec<(f64, f64)> = scales
            .iter()
            .zip(&fits)
            .map(|(s, t)| ((r.area * s).ln(), t.entries()[i].2.abs().ln()))
            .collect();
        let (slope, fitted) = if l == 0.0 {
            (f64::NAN, 0.0)
        } else {
            let slope = fit_slope(&pts);
            let mean = pts.iter().map(|(x, y)| y - p as f64 * x).sum::<f64>() / pts.len() as f64;
            (slope, mean.exp() * l.signum())
        };
        let dev = if l == 0.0 { v.abs() } else { ((v - l) / l).abs() };
        rows.push(vec![
            k.to_string(),
            c.to_string(),
            fmt_e(l),
            fmt_e(*v),
            fmt_e(dev),
            fmt_e(coef),
            fmt_e(fitted),
            format!("{slope:.6}"),
        ]);
        println!("k{k} {c:<7} closed {l:>+.6e}  computed {v:>+.6e}  coefficient {coef:>+.6e} fitted {fitted:>+.6e}  exponent {slope:.4}");
    }
    out.table(
        "table1.dat",
        "table1",
        &[
            "kappa",
            "channel",
            "closed_form",
            "computed",
            "deviation",
            "closed_form_coefficient",
            "fitted_coefficient",
            "fitted_exponent",
        ],
        &rows,
    )?;
    out.finish(json!({ "normalization": norm }))?;
    Ok(())
}

fn fit_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

fn run_oracle_check(r: &Resolved, xi: f64, directions: usize, detunings: &[f64], direct: bool) -> Result<(), CliError> {
    if directions == 0 || detunings.is_empty() {
        return Err(CliError::Input("need at least one direction and one detuning".into()));
    }
    let mut out = RunOutput::new(&r.out_dir, "oracle-check", r)?;
    let mut pols: Vec<PolarizationChannel> = r.channels.iter().map(|c| c.polarization).collect();
    pols.sort();
    pols.dedup();
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for (theta, phi) in oracle_directions(r.mc_seed, directions) {
        let cfg = Configuration::new(xi, theta, phi)?;
        for k in &r.kappas {
            for p in &pols {
                let mut o = LaplaceOracleOptions::new(r.area, *k, *p, detunings.to_vec());
                o.mode = r.tensor;
                let ora = laplace_oracle(&cfg, &o)?;
                let ana = laplace_analytic(&cfg, &o)?;
                let dir = if direct { Some(laplace_direct(&cfg, &o)?) } else { None };
                for (d, pick) in [("x", 0usize), ("y", 1)] {
                    let sel = |v: &mqcspec::oracle_validation::LaplaceValues| if pick == 0 { v.x.clone() } else { v.y.clone() };
                    let (a, b) = (sel(&ora), sel(&ana));
                    let scale = b.iter().map(|v| v.norm()).fold(0.0, f64::max);
                    for (i, w) in detunings.iter().enumerate() {
                        let dev = if scale > 0.0 { (a[i] - b[i]).norm() / scale } else { (a[i] - b[i]).norm() };
                        worst = worst.max(dev);
                        let mut row = vec![
                            format!("{theta:.6}"),
                            format!("{phi:.6}"),
                            k.to_string(),
                            format!("{d}_{}", p.label()),
                            format!("{w:.6}"),
                            fmt_e(a[i].re),
                            fmt_e(a[i].im),
                            fmt_e(b[i].re),
                            fmt_e(b[i].im),
                            fmt_e(dev),
                        ];
                        if let Some(dv) = &dir {
                            let c = sel(dv)[i];
                            row.push(fmt_e(c.re));
                            row.push(fmt_e(c.im));
                        }
                        rows.push(row);
                    }
                }
            }
        }
    }
    let mut cols = vec![
        "theta", "phi", "kappa", "channel", "omega_detuning_over_gamma", "oracle_re", "oracle_im", "analytic_re",
        "analytic_im", "relative_deviation",
    ];
    if direct {
        cols.extend(["direct_re", "direct_im"]);
    }
    out.table("oracle_check.dat", "oracle-check", &cols, &rows)?;
    out.finish(json!({ "xi": xi, "directions": directions, "worst_relative_deviation": worst }))?;
    println!("worst relative deviation {worst:.3e} at xi = {xi}");
    Ok(())
}

fn run_mc(r: &Resolved) -> Result<(), CliError> {
    let mut out = RunOutput::new(&r.out_dir, "mc-average", r)?;
    let opts = McOptions {
        samples: r.mc_samples,
        window: r.mc_window,
        seed: r.mc_seed,
        area: r.area,
        variant: r.variant,
        interpulse_interaction: r.interpulse_interaction,
        mode: r.tensor,
        keep_traces: r.keep_traces,
    };
    for k in &r.kappas {
        for c in &r.channels {
            let res = monte_carlo_spectrum(*k, *c, &r.grid, &opts)?;
            println!("{}", out.series(&res.series)?.display());
            if !res.traces.is_empty() {
                let rows: Vec<Vec<String>> = r
                    .grid
                    .iter()
                    .enumerate()
                    .map(|(i, w)| {
                        std::iter::once(format!("{w:.6}")).chain(res.traces.iter().map(|t| fmt_e(t[i].re))).collect()
                    })
                    .collect();
                let cols: Vec<String> = std::iter::once("omega_detuning_over_gamma".to_string())
                    .chain((0..res.traces.len()).map(|j| format!("Re_S_{j}")))
                    .collect();
                let cols: Vec<&str> = cols.iter().map(String::as_str).collect();
                out.table(&format!("{}_traces.dat", res.series.label()), "mc-traces", &cols, &rows)?;
            }
        }
    }
    out.finish(json!({ "seed": r.mc_seed, "samples": r.mc_samples }))?;
    Ok(())
}

fn run_cross_section(r: &Resolved, raw: &RunConfig, delta_bar: Option<f64>) -> Result<(), CliError> {
    let delta_bar = delta_bar.unwrap_or(2.0 * PI * 560e6);
    let density = raw.density.unwrap_or(1e14);
    let s = mean_scattering_cross_section(r.lambda0, r.gamma, delta_bar)?;
    let l = mean_free_path(density, s)?;
    let s0 = resonant_cross_section(r.lambda0);
    let mut out = RunOutput::new(&r.out_dir, "cross-section", r)?;
    let v = json!({
        "lambda0_m": r.lambda0,
        "gamma_rad_per_s": r.gamma,
        "delta_bar_rad_per_s": delta_bar,
        "density_per_m3": density,
        "mean_cross_section_m2": s,
        "resonant_cross_section_m2": s0,
        "mean_free_path_m": l,
    });
    out.json("cross_section.json", &v)?;
    out.finish(v)?;
    println!("mean cross-section {s:.6e} m^2");
    println!("resonant cross-section {s0:.6e} m^2");
    println!("mean free path {l:.6e} m");
    Ok(())
}

fn run_validate(raw: &RunConfig, r: &Resolved, criteria: Option<Vec<u8>>) -> Result<(), CliError> {
    let mut v = raw.validate.clone().unwrap_or_default();
    if let Some(s) = raw.mc.seed {
        v.seed = s;
    }
    if let Some(n) = raw.mc.samples {
        v.mc_samples = n;
    }
    if let Some(c) = criteria {
        v.criteria = c;
    }
    let report = run_validation(&v)?;
    let mut out = RunOutput::new(&r.out_dir, "validate", &v)?;
    let text = report.to_text();
    print!("{text}");
    out.text("validation_report.txt", &text)?;
    out.json("validation_report.json", &report)?;
    out.finish(json!({ "seed": report.seed, "all_passed": report.all_passed() }))?;
    if report.all_passed() {
        Ok(())
    } else {
        Err(CliError::CriteriaFailed(
            report.criteria.iter().filter(|c| !c.passed).map(|c| format!("{} {}", c.id, c.name)).collect(),
        ))
    }
}

fn fig4_preset() -> RunConfig {
    RunConfig { area: Some(0.14 * PI), xibar: Some(80.0), kappa: Some(vec![1, 2]), ..Default::default() }
}

fn table1_preset() -> RunConfig {
    RunConfig { area: Some(0.01 * PI), xibar: Some(80.0), ..Default::default() }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Input("thread count must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Input(format!("cannot configure worker threads: {e}")))?;
    }
    let file = cli.config.as_ref();
    match cli.command {
        Command::Spectrum { preset, params } => match preset {
            Some(Preset::Fig4) => {
                let r = layered(file, Some(fig4_preset()), &params)?.resolve()?;
                run_spectra(&r, &[CouplingVariant::Full, CouplingVariant::GammaZeroed], "spectrum --preset fig4")
            }
            Some(Preset::Table1) => run_table1(&layered(file, Some(table1_preset()), &params)?.resolve()?),
            None => {
                let r = layered(file, None, &params)?.resolve()?;
                run_spectra(&r, &[r.variant], "spectrum")
            }
        },
        Command::Table1 { params } => run_table1(&layered(file, Some(table1_preset()), &params)?.resolve()?),
        Command::OracleCheck { xi, directions, detunings, direct, params } => {
            let r = layered(file, None, &params)?.resolve()?;
            run_oracle_check(&r, xi, directions, &detunings, direct)
        }
        Command::McAverage { params } => run_mc(&layered(file, None, &params)?.resolve()?),
        Command::CrossSection { delta_bar, params } => {
            let raw = layered(file, None, &params)?;
            let mut geometry_free = raw.clone();
            geometry_free.density = None;
            geometry_free.mean_distance = None;
            run_cross_section(&geometry_free.resolve()?, &raw, delta_bar)
        }
        Command::Validate { criteria, params } => {
            let raw = layered(file, None, &params)?;
            let r = raw.resolve()?;
            run_validate(&raw, &r, criteria)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mqcspec: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_error_exit_codes() {
        assert_eq!(CliError::from(MqcError::Input("x".into())).exit_code(), 2);
        assert_eq!(CliError::from(MqcError::Numeric("x".into())).exit_code(), 3);
        assert_eq!(CliError::from(MqcError::Singular(0.0)).exit_code(), 3);
        assert_eq!(CliError::CriteriaFailed(vec![]).exit_code(), 1);
    }

    #[test]
    fn test_cli_definition_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
