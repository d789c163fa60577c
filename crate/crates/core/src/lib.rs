pub mod autodiff;
pub mod cgan;
pub mod channel_sim;
pub mod error;
pub mod metrics;
pub mod pipeline;
pub mod signal_prep;
pub mod spectral;
pub mod vocoder;

pub use error::{Error, Result};
