//! Counterfactual prediction and performance evaluation.

pub mod csv_io;
pub mod data;
pub mod error;
pub mod glm;
pub mod inference;
pub mod longitudinal;
pub mod nuisance;
pub mod parallel;
pub mod perf;
pub mod regime;
pub mod rng;
pub mod simulate;
pub mod tailor;

pub use error::{Error, Result};
