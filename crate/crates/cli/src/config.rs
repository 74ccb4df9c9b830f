// SPDX-License-Identifier: Apache-2.0

//! Run configuration from a TOML file with command-line overrides.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use mqcspec::dipole_coupling::TensorMode;
use mqcspec::single_atom_dynamics::{PhysicalParams, SPEED_OF_LIGHT};
use mqcspec::spectra::{
    default_grid, dipole_from_gamma, pulse_area_from_energy, uniform_grid, CouplingVariant, DetectionChannel,
};
use mqcspec::validation::ValidationConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Ratio r̄ ρ^{1/3} of the mean nearest-neighbour distance in a uniform gas.
pub const NEAREST_NEIGHBOUR_FACTOR: f64 = 0.554;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub points: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McSection {
    pub samples: Option<usize>,
    pub window: Option<(f64, f64)>,
    pub seed: Option<u64>,
    pub keep_traces: Option<usize>,
}

/// Every field is optional so that files and flags can be layered.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Decay rate, rad/s.
    pub gamma: Option<f64>,
    /// Transition wavelength, m.
    pub lambda0: Option<f64>,
    /// Pulse area in rad.
    pub area: Option<f64>,
    /// Pulse energy, J.
    pub pulse_energy: Option<f64>,
    /// Pulse duration, s.
    pub pulse_duration: Option<f64>,
    /// Beam waist, m.
    pub beam_waist: Option<f64>,
    pub xibar: Option<f64>,
    /// Atom density, m⁻³.
    pub density: Option<f64>,
    /// Mean interatomic distance, m.
    pub mean_distance: Option<f64>,
    pub kappa: Option<Vec<i32>>,
    pub channels: Option<Vec<String>>,
    pub grid: GridSpec,
    pub variant: Option<String>,
    pub tensor: Option<String>,
    pub interpulse_interaction: Option<bool>,
    pub mc: McSection,
    pub out_dir: Option<PathBuf>,
    pub validate: Option<ValidationConfig>,
}

macro_rules! overlay {
    ($dst:expr, $src:expr, $($f:ident),*) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f.clone(); } )*
    };
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Input(format!("invalid config {}: {e}", path.display())))
    }

    /// Fields set in `other` replace those in `self`.
    pub fn overlay(&mut self, other: &RunConfig) {
        overlay!(
            self,
            other,
            gamma,
            lambda0,
            area,
            pulse_energy,
            pulse_duration,
            beam_waist,
            xibar,
            density,
            mean_distance,
            kappa,
            channels,
            variant,
            tensor,
            interpulse_interaction,
            out_dir,
            validate
        );
        overlay!(self.grid, other.grid, lo, hi, points);
        overlay!(self.mc, other.mc, samples, window, seed, keep_traces);
    }

    pub fn resolve(&self) -> Result<Resolved, CliError> {
        let defaults = PhysicalParams::rubidium();
        let gamma = positive("gamma", self.gamma.unwrap_or(defaults.gamma))?;
        let lambda0 = positive("lambda0", self.lambda0.unwrap_or(defaults.lambda0))?;
        let area = self.resolve_area(gamma, lambda0)?;
        let xibar = self.resolve_xibar(lambda0)?;
        let kappas = self.kappa.clone().unwrap_or_else(|| vec![1, 2]);
        if kappas.is_empty() {
            return Err(CliError::Input("the kappa list is empty".into()));
        }
        if let Some(k) = kappas.iter().find(|k| !matches!(k.abs(), 1 | 2)) {
            return Err(CliError::Input(format!("kappa must be ±1 or ±2, got {k}")));
        }
        let channels = match &self.channels {
            Some(c) if c.is_empty() => return Err(CliError::Input("the channel list is empty".into())),
            Some(c) => c.iter().map(|s| s.parse()).collect::<Result<Vec<_>, _>>()?,
            None => DetectionChannel::all().to_vec(),
        };
        let grid = match (self.grid.lo, self.grid.hi, self.grid.points) {
            (None, None, None) => default_grid(),
            (lo, hi, n) => uniform_grid(lo.unwrap_or(-10.0), hi.unwrap_or(10.0), n.unwrap_or(801)),
        };
        let variant = self.variant.as_deref().map(str::parse).transpose()?.unwrap_or_default();
        let tensor = self.tensor.as_deref().map(str::parse).transpose()?.unwrap_or_default();
        let window = self.mc.window.unwrap_or((67.2, 92.8));
        if !(window.0 > 0.0 && window.1 >= window.0 && window.1.is_finite()) {
            return Err(CliError::Input(format!("invalid Monte-Carlo window {window:?}")));
        }
        Ok(Resolved {
            gamma,
            lambda0,
            area,
            xibar,
            kappas,
            channels,
            grid,
            variant,
            tensor,
            interpulse_interaction: self.interpulse_interaction.unwrap_or(true),
            mc_samples: self.mc.samples.unwrap_or(100),
            mc_window: window,
            mc_seed: self.mc.seed.unwrap_or(12345),
            keep_traces: self.mc.keep_traces.unwrap_or(0),
            out_dir: self.out_dir.clone().unwrap_or_else(|| PathBuf::from(".")),
        })
    }

    fn resolve_area(&self, gamma: f64, lambda0: f64) -> Result<f64, CliError> {
        let triplet = [self.pulse_energy, self.pulse_duration, self.beam_waist];
        let given = triplet.iter().filter(|v| v.is_some()).count();
        match (self.area, given) {
            (Some(_), 0) | (None, 0) => {
                let a = self.area.unwrap_or(0.14 * PI);
                if !(a >= 0.0 && a.is_finite()) {
                    return Err(CliError::Input(format!("pulse area must be >= 0, got {a}")));
                }
                Ok(a)
            }
            (Some(_), _) => Err(CliError::Input(
                "give either the pulse area or the energy/duration/waist triplet, not both".into(),
            )),
            (None, 3) => {
                let omega0 = 2.0 * PI * SPEED_OF_LIGHT / lambda0;
                let d = dipole_from_gamma(gamma, omega0)?;
                let [e, s, w] = triplet.map(|v| v.expect("checked"));
                Ok(pulse_area_from_energy(e, s, w, d)?)
            }
            (None, _) => Err(CliError::Input("pulse energy, duration and waist must be given together".into())),
        }
    }

    fn resolve_xibar(&self, lambda0: f64) -> Result<f64, CliError> {
        let k0 = 2.0 * PI / lambda0;
        let from_density = |rho: f64| -> Result<f64, CliError> {
            Ok(NEAREST_NEIGHBOUR_FACTOR * positive("density", rho)?.powf(-1.0 / 3.0))
        };
        let rbar = match (self.density, self.mean_distance) {
            (None, None) => None,
            (Some(rho), None) => Some(from_density(rho)?),
            (None, Some(r)) => Some(positive("mean_distance", r)?),
            (Some(rho), Some(r)) => {
                let expect = from_density(rho)?;
                if ((r - expect) / expect).abs() > 0.01 {
                    return Err(CliError::Input(format!(
                        "mean distance {r:.4e} m is inconsistent with density {rho:.4e} m^-3 (expected {expect:.4e} m within 1%)"
                    )));
                }
                Some(r)
            }
        };
        match (self.xibar, rbar) {
            (Some(_), Some(_)) => Err(CliError::Input("give either xibar or density/mean distance, not both".into())),
            (Some(x), None) => positive("xibar", x),
            (None, Some(r)) => Ok(k0 * r),
            (None, None) => Ok(80.0),
        }
    }
}

fn positive(name: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Input(format!("{name} must be positive, got {v}")))
    }
}

/// Fully specified run parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Resolved {
    pub gamma: f64,
    pub lambda0: f64,
    pub area: f64,
    pub xibar: f64,
    pub kappas: Vec<i32>,
    pub channels: Vec<DetectionChannel>,
    pub grid: Vec<f64>,
    pub variant: CouplingVariant,
    pub tensor: TensorMode,
    pub interpulse_interaction: bool,
    pub mc_samples: usize,
    pub mc_window: (f64, f64),
    pub mc_seed: u64,
    pub keep_traces: usize,
    #[serde(skip)]
    pub out_dir: PathBuf,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn test_defaults_resolve() {
        let r = RunConfig::default().resolve().unwrap();
        assert_relative_eq!(r.xibar, 80.0);
        assert_eq!(r.grid.len(), 801);
        assert_eq!(r.channels.len(), 4);
    }

    #[test]
    fn test_empty_kappa_rejected() {
        let c = RunConfig { kappa: Some(vec![]), ..Default::default() };
        assert!(matches!(c.resolve(), Err(CliError::Input(_))));
    }

    #[test]
    fn test_area_specifications_exclusive() {
        let c = RunConfig { area: Some(0.1), pulse_energy: Some(1e-9), ..Default::default() };
        assert!(c.resolve().is_err());
        let c = RunConfig { pulse_energy: Some(1e-9), pulse_duration: Some(1e-9), ..Default::default() };
        assert!(c.resolve().is_err());
    }

    #[test]
    fn test_density_distance_consistency() {
        let rho: f64 = 1e14;
        let r = NEAREST_NEIGHBOUR_FACTOR * rho.powf(-1.0 / 3.0);
        let ok = RunConfig { density: Some(rho), mean_distance: Some(r * 1.005), ..Default::default() };
        assert!(ok.resolve().is_ok());
        let bad = RunConfig { density: Some(rho), mean_distance: Some(r * 1.02), ..Default::default() };
        assert!(bad.resolve().is_err());
        let x = RunConfig { density: Some(rho), ..Default::default() }.resolve().unwrap().xibar;
        assert_relative_eq!(x, 2.0 * PI / 790e-9 * r, max_relative = 1e-12);
    }

    #[test]
    fn test_overlay_prefers_flags() {
        let mut base = RunConfig { area: Some(0.1), xibar: Some(50.0), ..Default::default() };
        base.overlay(&RunConfig { xibar: Some(90.0), ..Default::default() });
        assert_eq!(base.area, Some(0.1));
        assert_eq!(base.xibar, Some(90.0));
    }

    #[test]
    fn test_unknown_key_rejected() {
        assert!(toml::from_str::<RunConfig>("bogus = 1").is_err());
    }
}
