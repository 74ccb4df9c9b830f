// SPDX-License-Identifier: Apache-2.0

//! Multiple-quantum-coherence fluorescence spectra of dipole-coupled atom
//! pairs excited by two phase-modulated pulses.
//!
//! Units: time in 1/γ and frequency in γ unless a function states SI units.

pub mod dipole_coupling;
pub mod disorder_average;
pub mod error;
pub mod operator_basis;
pub mod oracle_validation;
pub mod scattering_expansion;
pub mod single_atom_dynamics;
pub mod spectra;
pub mod superoperator;
pub mod validation;

pub use error::{MqcError, Result};
