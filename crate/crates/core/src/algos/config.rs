use serde::{Deserialize, Serialize};

use super::entropy::Schedule;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Moppo,
    Moa2c,
}

impl std::str::FromStr for Algo {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "moppo" => Ok(Self::Moppo),
            "moa2c" => Ok(Self::Moa2c),
            _ => Err(Error::Config(format!("unknown algo `{s}` (expected moppo or moa2c)"))),
        }
    }
}

impl std::fmt::Display for Algo {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algo::Moppo => "moppo",
            Algo::Moa2c => "moa2c",
        })
    }
}

/// Optimization hyperparameters shared by both algorithms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub gamma: f64,
    /// Parallel trajectories (environment slots) B.
    pub num_trajectories: usize,
    /// Steps collected per slot per iteration.
    pub rollout_len: usize,
    /// Passes E over each batch.
    pub epochs: usize,
    /// Minibatches per pass (MOPPO only).
    pub minibatches: usize,
    pub clip_eps: f64,
    /// Environment steps to train for.
    pub total_steps: u64,
    /// Actor learning rate η.
    pub lr: f64,
    /// Actor to critic learning-rate ratio C.
    pub critic_ratio: f64,
    /// Critic passes F before each actor update (separate trunks only).
    pub critic_epochs: usize,
    /// Averaging rate δ of the critic loss coefficient β_c.
    pub beta_delta: f64,
    pub beta_init: f64,
    pub max_grad_norm: f64,
    pub popart: bool,
    pub popart_step: f64,
    /// Decoupled weight decay on critic-owned parameters.
    pub critic_weight_decay: f64,
    /// Iterations between in-memory checkpoints.
    pub checkpoint_every: usize,
    /// Resets to a checkpoint tolerated before training fails.
    pub max_resets: usize,
    /// Turn the step-discarding heuristics off entirely.
    pub discard: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            num_trajectories: 8,
            rollout_len: 32,
            epochs: 4,
            minibatches: 8,
            clip_eps: 0.2,
            total_steps: 100_000,
            lr: 3e-4,
            critic_ratio: 0.1,
            critic_epochs: 2,
            beta_delta: 0.001,
            beta_init: 1.0,
            max_grad_norm: 0.5,
            popart: true,
            popart_step: 0.001,
            critic_weight_decay: 0.01,
            checkpoint_every: 50,
            max_resets: 3,
            discard: true,
        }
    }
}

impl TrainConfig {
    pub fn steps_per_iteration(&self) -> u64 {
        (self.num_trajectories * self.rollout_len) as u64
    }

    /// Checks every field; errors name the offending key.
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, why: &str| Err(Error::Config(format!("train.{key} {why}")));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma", "must lie in [0, 1]");
        }
        for (key, v) in [
            ("num_trajectories", self.num_trajectories),
            ("rollout_len", self.rollout_len),
            ("epochs", self.epochs),
            ("minibatches", self.minibatches),
            ("critic_epochs", self.critic_epochs),
            ("checkpoint_every", self.checkpoint_every),
        ] {
            if v == 0 {
                return bad(key, "must be positive");
            }
        }
        if self.minibatches > self.num_trajectories * self.rollout_len {
            return bad("minibatches", "exceeds the transitions per batch");
        }
        for (key, v) in [
            ("lr", self.lr),
            ("critic_ratio", self.critic_ratio),
            ("clip_eps", self.clip_eps),
            ("max_grad_norm", self.max_grad_norm),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(key, &format!("must be positive and finite, got {v}"));
            }
        }
        for (key, v) in [
            ("popart_step", self.popart_step),
            ("beta_delta", self.beta_delta),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(key, "must lie in [0, 1]");
            }
        }
        for (key, v) in [("beta_init", self.beta_init), ("critic_weight_decay", self.critic_weight_decay)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(key, "must be finite and non-negative");
            }
        }
        Ok(())
    }
}

/// Entropy regularization settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EntropyConfig {
    pub schedule: Schedule,
    /// Final target; `None` picks 0.1 on DST and 0.4 elsewhere.
    pub h_min: Option<f64>,
    /// Initial target; `None` means ln |A|.
    pub h_max: Option<f64>,
    pub lambda_init: f64,
    /// Multiplier learning rate η̃; `None` means lr / 10.
    pub lambda_lr: Option<f64>,
    /// Damping c.
    pub damping: f64,
    /// Coefficient of the plain bonus under `Schedule::Fixed` (and for MOA2C).
    pub fixed_lambda: f64,
}

impl Default for EntropyConfig {
    fn default() -> Self {
        Self {
            schedule: Schedule::Linear,
            h_min: None,
            h_max: None,
            lambda_init: 0.01,
            lambda_lr: None,
            damping: 0.01,
            fixed_lambda: 0.01,
        }
    }
}
