// SPDX-License-Identifier: Apache-2.0

//! Error type shared by all modules.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MqcError {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("resolvent pole at z = 0: stationary component of norm {norm:.3e}")]
    Pole { norm: f64 },

    #[error("coupling tensor is singular at xi = {0}")]
    Singular(f64),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("numeric failure: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, MqcError>;
