//! Multi-objective environments behind one interface.
//!
//! | id                       | K | actions | state                      |
//! |--------------------------|---|---------|----------------------------|
//! | `dst`                    | 2 | 4       | one-hot grid cell          |
//! | `minecart`               | 3 | 6       | position, motion, cargo    |
//! | `minecart-deterministic` | 3 | 6       | same, fixed mining yields  |

mod bandit;
mod dst;
pub mod minecart;

pub use bandit::Bandit;
pub use dst::{Dst, DstMap, Treasure, DOWN, LEFT, RIGHT, UP};
pub use minecart::{Mine, Minecart, MinecartConfig};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvError {
    #[error("action {action} out of range (environment has {num_actions} actions)")]
    InvalidAction { action: usize, num_actions: usize },
    #[error("step called before reset or after the episode ended")]
    NotRunning,
    #[error("invalid environment config: {0}")]
    Config(String),
    #[error("unknown environment `{0}` (expected dst, minecart or minecart-deterministic)")]
    UnknownId(String),
    #[error("{0}")]
    Unsupported(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EnvSpec {
    pub state_dim: usize,
    pub num_actions: usize,
    pub num_objectives: usize,
    pub max_episode_steps: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub state: Vec<f64>,
    pub reward: Vec<f64>,
    /// The episode reached a terminal state.
    pub terminal: bool,
    /// The episode hit `max_episode_steps` without terminating.
    pub truncated: bool,
}

pub trait Environment: Send {
    fn spec(&self) -> EnvSpec;

    /// Starts a new episode. Stochastic environments seed their own child
    /// stream from `rng`, so identical `rng` states give identical episodes.
    fn reset(&mut self, rng: &mut Rng) -> Vec<f64>;

    fn step(&mut self, action: usize) -> Result<Step, EnvError>;

    /// The DST map, for environments that have a known exact front.
    fn dst_map(&self) -> Option<&DstMap> {
        None
    }

    /// Fresh environment with the same configuration.
    fn boxed_clone(&self) -> Box<dyn Environment>;
}

/// Configuration for every environment, as read from the `[env]` section.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub dst: DstMap,
    pub minecart: MinecartConfig,
}

pub const ENV_IDS: [&str; 3] = ["dst", "minecart", "minecart-deterministic"];

pub fn make_env(id: &str, config: &EnvConfig) -> Result<Box<dyn Environment>, EnvError> {
    match id {
        "dst" => Ok(Box::new(Dst::new(config.dst.clone())?)),
        "minecart" => Ok(Box::new(Minecart::new(config.minecart.clone(), false)?)),
        "minecart-deterministic" => Ok(Box::new(Minecart::new(config.minecart.clone(), true)?)),
        other => Err(EnvError::UnknownId(other.to_string())),
    }
}

pub(crate) fn check_action(action: usize, num_actions: usize) -> Result<(), EnvError> {
    if action >= num_actions {
        Err(EnvError::InvalidAction { action, num_actions })
    } else {
        Ok(())
    }
}
