//! Error taxonomy shared by every module.
//!
//! Three failure classes cover the whole crate: bad inputs
//! ([`Error::Config`]), numerical analysis failures ([`Error::Analysis`]),
//! and runtime faults of a simulation ([`Error::Divergence`]).

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Invalid configuration or arguments (dimension mismatch, bad bounds,
    /// off-grid event times, malformed schedules).
    #[error("configuration error: {0}")]
    Config(String),

    /// A numerical procedure could not complete or violated its contract
    /// (non-Hurwitz matrix, asymmetric input, residual out of tolerance).
    #[error("analysis error: {0}")]
    Analysis(String),

    /// The integrator produced a non-finite or exploding state. `t` is the
    /// first simulated time at which the fault was observed.
    #[error("divergence fault at t = {t}: {detail}")]
    Divergence { t: f64, detail: String },
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn analysis(msg: impl Into<String>) -> Self {
        Error::Analysis(msg.into())
    }
}
