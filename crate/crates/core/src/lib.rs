//! Weight-conditioned multi-objective actor-critic training.
pub mod algos;
pub mod cli;
pub mod envs;
pub mod metrics;
pub mod error;
pub mod momdp;
pub mod nets;
pub mod ndgrad;
pub mod rng;

pub use error::{Error, Result};
