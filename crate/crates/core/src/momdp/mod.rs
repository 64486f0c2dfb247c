//! Weights, rollouts, returns, advantages and PopArt statistics.

mod popart;
mod rollout;
mod weights;

pub use popart::{popart_update, CriticHead, LinearCriticHead, PopArtStats, SIGMA_MIN};
pub use rollout::{
    advantages, batch_advantages, batch_reward_to_go, discounted_return, discounted_sums, reward_to_go, rollout,
    sample_action, scalar_advantage, Collector, CompletedEpisode, Critic, Done, Policy, Trajectory, TrajectoryBatch, Transition,
};
pub use weights::{sample_weight, scalarize, WeightVector, SIMPLEX_TOL};

/// A vector of discounted returns, one per objective.
pub type ObjectivePoint = Vec<f64>;
