//! Generator–discriminator cooperative compression for GANs.

pub mod cli_reporting;
pub mod distillation;
pub mod error;
pub mod metrics;
pub mod model_zoo;
pub mod plot;
pub mod pruning;
pub mod selective_activation;
pub mod trainer;

pub use error::{GccError, Result};
