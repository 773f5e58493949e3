use thiserror::Error;

/// Errors raised by the thermal model, oracle, estimators and identification.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("point (r = {r}, z = {z}) lies outside the cell domain")]
    OutsideDomain { r: f64, z: f64 },

    #[error("assembled mass matrix is not symmetric positive definite")]
    MassNotSpd,

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("{scheme} diverged at t = {t} s (|T| exceeded 1000 degC)")]
    Divergence { scheme: &'static str, t: f64 },

    #[error("no steady state exists: all boundaries are adiabatic and q = {q} W/m^3")]
    NoSteadyState { q: f64 },

    #[error("drive cycle: {0}")]
    Cycle(String),

    #[error("missing column `{0}` required by this operation")]
    MissingColumn(&'static str),

    #[error("calibration: {0}")]
    Calibration(String),

    #[error("filter divergence: innovation covariance {0} is not positive")]
    FilterDivergence(f64),

    #[error("identification: {0}")]
    Identification(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True when the error stems from malformed or incomplete input rather
    /// than from a numerical failure.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter { .. }
                | Error::OutsideDomain { .. }
                | Error::Dimension(_)
                | Error::Cycle(_)
                | Error::MissingColumn(_)
                | Error::Csv(_)
                | Error::Io(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
