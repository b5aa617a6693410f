use thiserror::Error;

use crate::floquet::QuasienergySpectrum;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid chain: {0}")]
    InvalidChain(String),

    #[error("invalid drive: {0}")]
    InvalidDrive(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("step h = {h} does not divide the drive segments (tau = {tau}, T - tau = {rest})")]
    StepNotCommensurate { h: f64, tau: f64, rest: f64 },

    #[error("operation requires a piecewise-constant (step) drive")]
    NonStepDrive,

    #[error("trajectory carries no phase-frame tag")]
    MissingPhaseConvention,

    #[error("no quasienergy gap: drive frequency {omega} does not exceed the bandwidth {bandwidth}")]
    GapUndefined { omega: f64, bandwidth: f64 },

    #[error("mode is not classified as bound")]
    NotBound,

    #[error("Sambe truncation not converged at K = {k_max} (last shift {last_shift:e})")]
    TruncationNotConverged {
        k_max: usize,
        last_shift: f64,
        partial: Box<QuasienergySpectrum>,
    },

    #[error("quadrature not converged after {panels} panels (estimate {estimate:e})")]
    QuadratureNotConverged { panels: usize, estimate: f64 },

    #[error("no root of F0 in [{lo}, {hi}]")]
    NoRootInInterval { lo: f64, hi: f64 },

    #[error("invalid sweep plan: {0}")]
    PlanInvalid(String),

    #[error("eigensolver failed: {0}")]
    Eigen(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors that come from bad inputs rather than numerics or IO.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidChain(_)
                | Error::InvalidDrive(_)
                | Error::InvalidState(_)
                | Error::StepNotCommensurate { .. }
                | Error::NonStepDrive
                | Error::MissingPhaseConvention
                | Error::GapUndefined { .. }
                | Error::NotBound
                | Error::NoRootInInterval { .. }
                | Error::PlanInvalid(_)
        )
    }

    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::TruncationNotConverged { .. }
                | Error::QuadratureNotConverged { .. }
                | Error::Eigen(_)
        )
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidChain(_) => "InvalidChain",
            Error::InvalidDrive(_) => "InvalidDrive",
            Error::InvalidState(_) => "InvalidState",
            Error::StepNotCommensurate { .. } => "StepNotCommensurate",
            Error::NonStepDrive => "NonStepDrive",
            Error::MissingPhaseConvention => "MissingPhaseConvention",
            Error::GapUndefined { .. } => "GapUndefined",
            Error::NotBound => "NotBound",
            Error::TruncationNotConverged { .. } => "TruncationNotConverged",
            Error::QuadratureNotConverged { .. } => "QuadratureNotConverged",
            Error::NoRootInInterval { .. } => "NoRootInInterval",
            Error::PlanInvalid(_) => "PlanInvalid",
            Error::Eigen(_) => "Eigen",
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
        }
    }
}
