//! Stationary workload of a reflected spectrally positive Lévy process whose
//! level is reset by a state-dependent functional at exponential review
//! epochs.

pub mod cli;
pub mod embedded_chain;
pub mod error;
pub mod steady_state;
pub mod tail_asymptotics;
pub mod fluctuation;
pub mod levy_model;
pub mod numerics;
pub mod path_oracle;
pub mod scale_fn;
pub mod stats;

pub use error::{Error, Result};
