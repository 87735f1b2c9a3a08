use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter failed validation (value out of range, empty input, ...).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Rejection sampling exceeded its retry bound. Almost always means the
    /// density's declared maximum bound is wrong.
    #[error("rejection sampling exceeded {attempts} attempts for one point")]
    RejectionBound { attempts: u64 },

    /// Transport between measures of different total mass was requested from
    /// the exact solver; use the bounded-Lipschitz distance instead.
    #[error("total masses differ ({lhs} vs {rhs}); exact W1 requires equal mass")]
    MassMismatch { lhs: f64, rhs: f64 },

    /// A solver produced NaN or negativity beyond tolerance; usually the
    /// time step is too large.
    #[error("numerical failure at t = {t}: {what}")]
    Numerical { what: String, t: f64 },

    /// I/O error while reading or writing field/event files.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
