//! Link-level simulator for massive-MIMO OFDM comparing time-division
//! duplexing with subcarrier-interlaced frequency-division duplexing.

pub mod channel;
pub mod config;
pub mod duplex;
pub mod evaluation;
pub mod error;
pub mod exec;
pub mod figures;
pub mod impairments;
pub mod ofdm;
pub mod rng;

pub use error::{Result, SimError};
pub use config::ExperimentConfig;
pub use exec::Execution;
pub use figures::{run_figure, Figure};

/// Power ratio to decibels.
pub fn db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Decibels to a power ratio.
pub fn from_db(x_db: f64) -> f64 {
    10f64.powf(x_db / 10.0)
}
