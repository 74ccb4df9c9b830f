// SPDX-License-Identifier: Apache-2.0

//! Single-atom pulse kicks, free dissipative evolution and its resolvent.
//!
//! Kicks are the exact unitary action Q ↦ U Q U† with U = exp(−iϑM/2) and
//! M = S† e^{iφ} + S e^{−iφ}, split into phase harmonics R[p], p = −2..2.
//!
//! Free evolution is expressed through three rate sectors. For states,
//!
//! ```text
//! P0(ρ)  = Pg ρ Pg + Σq Dq ρ Dq†          rate 0
//! P½(ρ)  = Pe ρ Pg + Pg ρ Pe              rate γ/2
//! P1(ρ)  = Pe ρ Pe − Σq Dq ρ Dq†          rate γ
//! ```
//!
//! so that exp(Lγ t) = P0 + e^{−γt/2} P½ + e^{−γt} P1. Operator (Heisenberg)
//! evolution uses the Hilbert-Schmidt adjoints, which in the orthonormal basis
//! are conjugate transposes.

use std::f64::consts::SQRT_2;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{MqcError, Result};
use crate::operator_basis::{basis, sigma, Mat16, Mat4, Vec16, C64, I, ONE};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// |z| below which a resolvent argument is treated as zero.
pub const POLE_EPS: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Polarization {
    X,
    Y,
    Z,
}

impl Polarization {
    pub const ALL: [Polarization; 3] = [Polarization::X, Polarization::Y, Polarization::Z];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl FromStr for Polarization {
    type Err = MqcError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "x" => Ok(Polarization::X),
            "y" => Ok(Polarization::Y),
            "z" => Ok(Polarization::Z),
            other => Err(MqcError::Input(format!("unsupported polarization '{other}'"))),
        }
    }
}

/// Lowering operator S = D·ε* for a Cartesian polarization.
pub fn dipole_lowering(pol: Polarization) -> Mat4 {
    let r = 1.0 / SQRT_2;
    match pol {
        Polarization::X => (sigma(1, 4) - sigma(1, 2)) * C64::new(r, 0.0),
        Polarization::Y => (sigma(1, 4) + sigma(1, 2)) * C64::new(0.0, r),
        Polarization::Z => sigma(1, 3),
    }
}

/// Cartesian dipole lowering components [Dx, Dy, Dz].
pub fn dipole_components() -> [Mat4; 3] {
    Polarization::ALL.map(dipole_lowering)
}

/// Excited state |q⟩ = Dq†|1⟩ as a column of amplitudes.
pub fn excited_state(pol: Polarization) -> nalgebra::SVector<C64, 4> {
    dipole_lowering(pol).adjoint().column(0).into_owned()
}

/// Projector |q⟩⟨r| in the Cartesian excited basis.
pub fn cartesian_sigma(q: Polarization, r: Polarization) -> Mat4 {
    excited_state(q) * excited_state(r).adjoint()
}

pub fn excited_projector() -> Mat4 {
    dipole_components()
        .iter()
        .fold(Mat4::zeros(), |acc, d| acc + d.adjoint() * d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    /// Decay rate, rad/s.
    pub gamma: f64,
    /// Transition angular frequency, rad/s.
    pub omega0: f64,
    /// Transition wavelength, m.
    pub lambda0: f64,
    pub doppler_shift: f64,
}

impl PhysicalParams {
    pub fn new(gamma: f64, lambda0: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(MqcError::Input(format!("gamma must be positive, got {gamma}")));
        }
        if !(lambda0 > 0.0 && lambda0.is_finite()) {
            return Err(MqcError::Input(format!("lambda0 must be positive, got {lambda0}")));
        }
        Ok(PhysicalParams {
            gamma,
            omega0: 2.0 * std::f64::consts::PI * SPEED_OF_LIGHT / lambda0,
            lambda0,
            doppler_shift: 0.0,
        })
    }

    /// Rb D-line-like values: λ0 = 790 nm, γ = 2π × 6 MHz.
    pub fn rubidium() -> Self {
        Self::new(2.0 * std::f64::consts::PI * 6.0e6, 790e-9).expect("valid constants")
    }

    pub fn k0(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.lambda0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec {
    pub area: f64,
    pub polarization: Polarization,
    pub arrival: u8,
}

impl PulseSpec {
    pub fn new(area: f64, polarization: Polarization, arrival: u8) -> Result<Self> {
        if !(area >= 0.0 && area.is_finite()) {
            return Err(MqcError::Input(format!("pulse area must be >= 0, got {area}")));
        }
        if polarization == Polarization::Z {
            return Err(MqcError::Input(
                "pulse polarization must be transverse to the propagation axis z".into(),
            ));
        }
        if arrival != 1 && arrival != 2 {
            return Err(MqcError::Input(format!("pulse label must be 1 or 2, got {arrival}")));
        }
        Ok(PulseSpec { area, polarization, arrival })
    }
}

/// Phase harmonics of a kick: R(φ) = Σp e^{ipφ} R[p].
#[derive(Debug, Clone, PartialEq)]
pub struct KickDecomposition {
    harmonics: [Mat16; 5],
}

impl KickDecomposition {
    pub fn harmonic(&self, p: i32) -> &Mat16 {
        assert!((-2..=2).contains(&p), "kick harmonic {p} out of range");
        &self.harmonics[(p + 2) as usize]
    }

    pub fn reassemble(&self, phi: f64) -> Mat16 {
        (-2..=2).fold(Mat16::zeros(), |acc, p| {
            acc + self.harmonic(p) * C64::from_polar(1.0, p as f64 * phi)
        })
    }
}

pub fn kick_decomposition(pulse: &PulseSpec) -> KickDecomposition {
    kick_harmonics(pulse.area, pulse.polarization)
}

pub fn kick_harmonics(area: f64, pol: Polarization) -> KickDecomposition {
    let s = dipole_lowering(pol);
    let m2 = s.adjoint() * s + s * s.adjoint();
    let id = Mat4::identity();
    let (sn, cs) = (0.5 * area).sin_cos();
    let pi = (id - m2) + m2 * C64::new(cs, 0.0);
    let st = s * C64::new(sn, 0.0);
    let sd = st.adjoint();
    let b = basis();
    let h0 = b.superoperator(|q| pi * q * pi + sd * q * st + st * q * sd);
    let hp1 = b.superoperator(|q| (pi * q * sd - sd * q * pi) * I);
    let hm1 = b.superoperator(|q| (pi * q * st - st * q * pi) * I);
    let hp2 = b.superoperator(|q| sd * q * sd);
    let hm2 = b.superoperator(|q| st * q * st);
    KickDecomposition { harmonics: [hm2, hm1, h0, hp1, hp2] }
}

/// Which polarizations the two pulses carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PolarizationChannel {
    /// x then x.
    Parallel,
    /// x then y.
    Perpendicular,
}

impl PolarizationChannel {
    pub const ALL: [PolarizationChannel; 2] =
        [PolarizationChannel::Parallel, PolarizationChannel::Perpendicular];

    pub fn pulse_polarization(self, pulse: u8) -> Polarization {
        match (self, pulse) {
            (PolarizationChannel::Perpendicular, 2) => Polarization::Y,
            _ => Polarization::X,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            PolarizationChannel::Parallel => "par",
            PolarizationChannel::Perpendicular => "perp",
        }
    }
}

impl FromStr for PolarizationChannel {
    type Err = MqcError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "par" | "parallel" | "xx" | "x-x" => Ok(PolarizationChannel::Parallel),
            "perp" | "perpendicular" | "xy" | "x-y" => Ok(PolarizationChannel::Perpendicular),
            other => Err(MqcError::Input(format!("unknown polarization channel '{other}'"))),
        }
    }
}

/// Single-atom state after two kicks with no evolution in between.
pub fn two_pulse_pure_states(
    area: f64,
    channel: PolarizationChannel,
    phi1: f64,
    phi2: f64,
) -> Vec16 {
    let (s, c) = (0.5 * area).sin_cos();
    let e1 = C64::from_polar(1.0, phi1);
    let e2 = C64::from_polar(1.0, phi2);
    let g = nalgebra::SVector::<C64, 4>::new(ONE, C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0));
    let x = excited_state(Polarization::X);
    let y = excited_state(Polarization::Y);
    let psi = match channel {
        PolarizationChannel::Parallel => {
            g * (C64::new(c * c, 0.0) - e1 * e2.conj() * (s * s)) - x * (I * (e1 + e2) * (s * c))
        }
        PolarizationChannel::Perpendicular => {
            g * C64::new(c * c, 0.0) - x * (I * e1 * s) - y * (I * e2 * (s * c))
        }
    };
    basis().expand(&(psi * psi.adjoint()))
}

/// State-space sector projectors with their decay rates in units of γ.
pub fn sector_projectors() -> &'static [(f64, Mat16); 3] {
    static P: OnceLock<[(f64, Mat16); 3]> = OnceLock::new();
    P.get_or_init(|| {
        let d = dipole_components();
        let pe = excited_projector();
        let pg = Mat4::identity() - pe;
        let feed = |r: &Mat4| d.iter().fold(Mat4::zeros(), |acc, dq| acc + dq * r * dq.adjoint());
        let b = basis();
        [
            (0.0, b.superoperator(|r| pg * r * pg + feed(r))),
            (0.5, b.superoperator(|r| pe * r * pg + pg * r * pe)),
            (1.0, b.superoperator(|r| pe * r * pe - feed(r))),
        ]
    })
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(MqcError::Input(format!("propagation time must be >= 0, got {t}")));
    }
    Ok(())
}

/// Operator evolution Q(0) ↦ Q(t) under Lγ.
pub fn free_propagator(gamma: f64, t: f64) -> Result<Mat16> {
    Ok(state_free_propagator(gamma, t)?.adjoint())
}

/// State evolution ρ(0) ↦ ρ(t) under Lγ.
pub fn state_free_propagator(gamma: f64, t: f64) -> Result<Mat16> {
    check_time(t)?;
    Ok(sector_projectors()
        .iter()
        .fold(Mat16::zeros(), |acc, (rate, p)| acc + p * C64::new((-rate * gamma * t).exp(), 0.0)))
}

/// Generator Lγ acting on states.
pub fn state_generator(gamma: f64) -> Mat16 {
    sector_projectors()
        .iter()
        .fold(Mat16::zeros(), |acc, (rate, p)| acc - p * C64::new(rate * gamma, 0.0))
}

/// Operator resolvent 1/(z − Lγ). Fails at z = 0 because of the ground-state pole.
pub fn resolvent(gamma: f64, z: C64) -> Result<Mat16> {
    Ok(state_resolvent(gamma, z.conj())?.adjoint())
}

pub fn state_resolvent(gamma: f64, z: C64) -> Result<Mat16> {
    if z.norm() < POLE_EPS {
        return Err(MqcError::Pole { norm: 1.0 });
    }
    Ok(resolvent_terms(gamma, z, true))
}

/// Resolvent with the stationary sector excised, valid at z = 0.
pub fn resolvent_restricted(gamma: f64, z: C64) -> Mat16 {
    resolvent_terms(gamma, z.conj(), false).adjoint()
}

fn resolvent_terms(gamma: f64, z: C64, include_stationary: bool) -> Mat16 {
    sector_projectors()
        .iter()
        .filter(|(rate, _)| include_stationary || *rate > 0.0)
        .fold(Mat16::zeros(), |acc, (rate, p)| acc + p / (z + rate * gamma))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator_basis::hs_inner;
    use approx::assert_relative_eq;

    fn coef_of(v: &Vec16, op: &Mat4) -> C64 {
        hs_inner(op, &basis().reconstruct(v))
    }

    #[test]
    fn test_lowering_operators() {
        let r = 1.0 / SQRT_2;
        let sx = dipole_lowering(Polarization::X);
        assert_relative_eq!(sx[(0, 3)].re, r);
        assert_relative_eq!(sx[(0, 1)].re, -r);
        let sy = dipole_lowering(Polarization::Y);
        assert_relative_eq!(sy[(0, 1)].im, r);
        assert_relative_eq!(sy[(0, 3)].im, r);
        assert_eq!(dipole_lowering(Polarization::Z), sigma(1, 3));
        assert!("w".parse::<Polarization>().is_err());
    }

    #[test]
    fn test_kick_zero_area_is_identity() {
        let k = kick_harmonics(0.0, Polarization::X);
        assert!((k.harmonic(0) - Mat16::identity()).camax() < 1e-15);
        for p in [-2, -1, 1, 2] {
            assert!(k.harmonic(p).camax() < 1e-15);
        }
    }

    #[test]
    fn test_kick_on_ground_state() {
        let (theta, phi) = (0.7, 0.4);
        let k = kick_harmonics(theta, Polarization::X);
        let b = basis();
        let out = k.reassemble(phi) * b.expand(&sigma(1, 1));
        let (s, c) = (0.5 * theta).sin_cos();
        let x = Polarization::X;
        let sx1 = excited_state(x) * nalgebra::SVector::<C64, 4>::x().transpose();
        assert_relative_eq!(coef_of(&out, &sigma(1, 1)).re, c * c, epsilon = 1e-14);
        assert_relative_eq!(coef_of(&out, &cartesian_sigma(x, x)).re, s * s, epsilon = 1e-14);
        let coh = coef_of(&out, &sx1);
        let expect = -I * C64::from_polar(1.0, phi) * (s * c);
        assert!((coh - expect).norm() < 1e-14);
    }

    #[test]
    fn test_kick_pi_transfers_population() {
        let k = kick_harmonics(std::f64::consts::PI, Polarization::X);
        let out = k.reassemble(1.1) * basis().expand(&sigma(1, 1));
        let x = Polarization::X;
        let expect = basis().expand(&cartesian_sigma(x, x));
        assert!((out - expect).camax() < 1e-14);
    }

    #[test]
    fn test_pure_states_match_composed_kicks() {
        let theta = 0.9;
        for channel in PolarizationChannel::ALL {
            let k1 = kick_harmonics(theta, channel.pulse_polarization(1));
            let k2 = kick_harmonics(theta, channel.pulse_polarization(2));
            let (p1, p2) = (0.3, -1.2);
            let composed = k2.reassemble(p2) * k1.reassemble(p1) * basis().expand(&sigma(1, 1));
            let direct = two_pulse_pure_states(theta, channel, p1, p2);
            assert!((composed - direct).camax() < 1e-14, "{channel:?}");
        }
    }

    #[test]
    fn test_pure_state_small_area_is_ground() {
        let v = two_pulse_pure_states(1e-9, PolarizationChannel::Parallel, 0.2, 0.5);
        assert!((v - basis().expand(&sigma(1, 1))).camax() < 1e-8);
    }

    #[test]
    fn test_free_propagator_identity_at_zero() {
        assert!((free_propagator(1.0, 0.0).unwrap() - Mat16::identity()).camax() < 1e-15);
        assert!(free_propagator(1.0, -1.0).is_err());
    }

    #[test]
    fn test_free_propagator_coherence_decay() {
        let t = 1.3;
        let g = 0.8;
        let op = excited_state(Polarization::X) * nalgebra::SVector::<C64, 4>::x().transpose();
        let q = basis().expand(&op.adjoint());
        let out = free_propagator(g, t).unwrap() * q;
        assert!((out - q * C64::new((-0.5 * g * t).exp(), 0.0)).camax() < 1e-15);
    }

    #[test]
    fn test_free_propagator_ground_feed() {
        let t = 0.6;
        let b = basis();
        let out = b.reconstruct(&(free_propagator(1.0, t).unwrap() * b.expand(&sigma(1, 1))));
        let pe = sigma(2, 2) + sigma(3, 3) + sigma(4, 4);
        let expect = sigma(1, 1) + pe * C64::new(1.0 - (-t).exp(), 0.0);
        assert!((out - expect).camax() < 1e-15);
    }

    #[test]
    fn test_resolvent_ground_at_one() {
        let g = 0.7;
        let b = basis();
        let out = b.reconstruct(&(resolvent(g, ONE).unwrap() * b.expand(&sigma(1, 1))));
        let pe = sigma(2, 2) + sigma(3, 3) + sigma(4, 4);
        let expect = sigma(1, 1) + pe * C64::new(1.0 - 1.0 / (1.0 + g), 0.0);
        assert!((out - expect).camax() < 1e-15);
    }

    #[test]
    fn test_resolvent_excited_population() {
        let z = C64::new(0.2, 0.37);
        let x = Polarization::X;
        let sxx = basis().expand(&cartesian_sigma(x, x));
        let out = resolvent(1.0, z).unwrap() * sxx;
        let err = (out - sxx / (z + 1.0)).camax();
        assert!(err < 1e-14, "{err}");
    }

    #[test]
    fn test_resolvent_lorentzian() {
        let z = C64::new(0.0, 0.37);
        let ground = nalgebra::SVector::<C64, 4>::x();
        let sx1 = basis().expand(&(excited_state(Polarization::X) * ground.transpose()));
        let out = resolvent(1.0, z).unwrap() * sx1;
        let err = (out - sx1 / (z + 0.5)).camax();
        assert!(err < 1e-14, "{err}");
    }

    #[test]
    fn test_resolvent_pole() {
        assert!(matches!(resolvent(1.0, C64::new(0.0, 0.0)), Err(MqcError::Pole { .. })));
    }
}
