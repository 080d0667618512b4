use thiserror::Error;

/// Errors raised by the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// A reflection or channel delay longer than the cyclic prefix.
    #[error("orthogonality violation: delay of {delay_samples} samples exceeds cyclic prefix of {cp_samples} samples")]
    Orthogonality {
        delay_samples: usize,
        cp_samples: usize,
    },

    #[error("subcarrier {index} out of range for {n_sub} subcarriers")]
    SubcarrierRange { index: usize, n_sub: usize },

    #[error("mixed configurations: {0}")]
    MixedConfig(String),
}

pub type Result<T> = std::result::Result<T, SimError>;
