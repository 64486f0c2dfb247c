//! MOPPO and MOA2C training loops with entropy control, actor/critic
//! gradient balancing and step discarding.

pub mod beta;
pub mod config;
pub mod discard;
pub mod entropy;
pub mod log;
pub mod losses;
mod train;

pub use beta::update_beta;
pub use config::{Algo, EntropyConfig, TrainConfig};
pub use discard::{check_discard, DiscardAction, DiscardState};
pub use entropy::{entropy_step, entropy_target, EntropyController, Schedule};
pub use log::{MetricsLog, MetricsRow};
pub use losses::{
    a2c_gradient, critic_loss, policy_terms, ppo_actor_loss, ppo_clip_term, ppo_objective, squared_error,
    weighted_log_prob, Minibatch, PolicyGraph, PolicyTerms,
};
pub use train::{
    load_model, train_moa2c, train_moppo, EntropyTracePoint, TrainOutput, TrainReport, Trainer, DEFAULT_H_MIN, DST_H_MIN,
};
