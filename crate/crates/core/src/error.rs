use thiserror::Error;

use crate::model::ParticleState;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain where the operation is defined.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("unconfined layout: {0}")]
    UnconfinedLayout(String),

    #[error("open potential: no saddle found within {limit:.3e} m above the minimum at {min_height:.3e} m")]
    OpenPotential { min_height: f64, limit: f64 },

    #[error("invalid electrode shape: {0}")]
    InvalidShape(String),

    /// The integrator produced a non-finite state. `last_valid` is the final
    /// state before the blow-up.
    #[error("integration blow-up at t = {:.6e} s", last_valid.time)]
    IntegrationBlowUp { last_valid: ParticleState },

    #[error("config error at `{location}`: {message}")]
    Config { location: String, message: String },

    #[error("unknown preset `{name}`; available: {available}")]
    UnknownPreset { name: String, available: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            location: location.into(),
            message: message.into(),
        }
    }

    /// Usage and configuration problems map to exit status 2, everything else to 1.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Config { .. } | Error::UnknownPreset { .. } | Error::Json(_)
        )
    }
}
