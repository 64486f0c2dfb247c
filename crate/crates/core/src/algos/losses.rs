use crate::error::{Error, Result};
use crate::momdp::{Critic, PopArtStats, Trajectory};
use crate::ndgrad::{Gradients, Graph, ParamTree, Tensor, Var};
use crate::nets::Network;

/// One clipped surrogate term `min(r·Â, clip(r, 1−ε, 1+ε)·Â)`.
pub fn ppo_clip_term(ratio: f64, adv: f64, eps: f64) -> f64 {
    (ratio * adv).min(ratio.clamp(1.0 - eps, 1.0 + eps) * adv)
}

/// Anything that can record action logits on a graph. Implemented by
/// [`Network`]; tests plug in tabular policies.
pub trait PolicyGraph {
    fn logits<'p>(&self, g: &mut Graph<'p>, states: &Tensor, alphas: &Tensor) -> Result<Var>;
}

impl PolicyGraph for Network {
    fn logits<'p>(&self, g: &mut Graph<'p>, states: &Tensor, alphas: &Tensor) -> Result<Var> {
        Ok(self.forward(g, states, alphas, true, false)?.logits.unwrap())
    }
}

/// Log-probabilities `[n]` of the taken actions and the mean entropy (scalar).
pub struct PolicyTerms {
    pub log_probs: Var,
    pub entropy: Var,
}

pub fn policy_terms(g: &mut Graph<'_>, logits: Var, actions: &[usize]) -> Result<PolicyTerms> {
    let lsm = g.log_softmax(logits)?;
    let p = g.exp(lsm)?;
    let plogp = g.row_dot(p, lsm)?;
    let neg = g.mean(plogp)?;
    let entropy = g.scale(neg, -1.0)?;
    let log_probs = g.gather(lsm, actions)?;
    Ok(PolicyTerms { log_probs, entropy })
}

/// Summed clipped surrogate `Σ_k min(r_k Â_k, clip(r_k) Â_k)`, an ascent
/// objective.
pub fn ppo_objective(g: &mut Graph<'_>, log_probs: Var, old_log_probs: &[f64], adv: &[f64], eps: f64) -> Result<Var> {
    let old = g.input(Tensor::vector(old_log_probs.to_vec()))?;
    let a = g.input(Tensor::vector(adv.to_vec()))?;
    let d = g.sub(log_probs, old)?;
    let r = g.exp(d)?;
    let ra = g.mul(r, a)?;
    let rc = g.clamp(r, 1.0 - eps, 1.0 + eps)?;
    let rca = g.mul(rc, a)?;
    let m = g.minimum(ra, rca)?;
    Ok(g.sum(m)?)
}

/// `Σ_t w_t log π(a_t|s_t, α)`; with `w_t = γ^t Â_t` its gradient is the
/// A2C estimator.
pub fn weighted_log_prob(g: &mut Graph<'_>, log_probs: Var, weights: &[f64]) -> Result<Var> {
    let w = g.input(Tensor::vector(weights.to_vec()))?;
    let x = g.mul(log_probs, w)?;
    Ok(g.sum(x)?)
}

/// Summed squared error between a normalized prediction `[n, K]` and
/// normalized targets.
pub fn squared_error(g: &mut Graph<'_>, prediction: Var, targets: &Tensor) -> Result<Var> {
    let t = g.input(targets.clone())?;
    let d = g.sub(prediction, t)?;
    let sq = g.square(d)?;
    Ok(g.sum(sq)?)
}

/// A slice of flattened transitions for one update.
#[derive(Clone, Debug, PartialEq)]
pub struct Minibatch {
    pub states: Tensor,
    pub alphas: Tensor,
    pub actions: Vec<usize>,
    pub old_log_probs: Vec<f64>,
    /// Scalarized normalized advantages.
    pub advantages: Vec<f64>,
    /// Normalized critic targets `(q̂ − μ)/σ`, `[n, K]`.
    pub targets: Tensor,
}

/// PPO actor loss (the negated clipped objective) and its gradient.
pub fn ppo_actor_loss(
    policy: &dyn PolicyGraph,
    params: &ParamTree,
    mb: &Minibatch,
    eps: f64,
) -> Result<(f64, Gradients)> {
    let mut g = Graph::new(params);
    let logits = policy.logits(&mut g, &mb.states, &mb.alphas)?;
    let terms = policy_terms(&mut g, logits, &mb.actions)?;
    let obj = ppo_objective(&mut g, terms.log_probs, &mb.old_log_probs, &mb.advantages, eps)?;
    let loss = g.scale(obj, -1.0)?;
    let grads = g.backward_scalar(loss)?;
    Ok((g.value(loss).item(), grads))
}

/// Least-squares critic loss on normalized values and its gradient.
pub fn critic_loss(net: &Network, params: &ParamTree, mb: &Minibatch) -> Result<(f64, Gradients)> {
    let mut g = Graph::new(params);
    let v = net.forward(&mut g, &mb.states, &mb.alphas, false, true)?.value.unwrap();
    let loss = squared_error(&mut g, v, &mb.targets)?;
    let grads = g.backward_scalar(loss)?;
    Ok((g.value(loss).item(), grads))
}

/// The A2C gradient estimate for one on-policy trajectory:
/// `Σ_t γ^t αᵀ((q̂_t − Ṽ(s_t, α))/σ) ∇ log π(a_t|s_t, α)`, where `t` counts
/// from the start of the episode. Returned as an ascent direction.
pub fn a2c_gradient(
    policy: &dyn PolicyGraph,
    params: &ParamTree,
    traj: &Trajectory,
    q_hats: &[Vec<f64>],
    critic: &dyn Critic,
    popart: &PopArtStats,
    gamma: f64,
) -> Result<Gradients> {
    if traj.is_empty() {
        return Ok(Gradients::empty(params.len()));
    }
    if q_hats.len() != traj.len() {
        return Err(Error::DimensionMismatch {
            expected: traj.len(),
            got: q_hats.len(),
        });
    }
    let (_, adv) = crate::momdp::advantages(traj, q_hats, critic, &popart.sigma)?;
    let weights: Vec<f64> = adv
        .iter()
        .enumerate()
        .map(|(i, a)| gamma.powi((traj.start_step + i) as i32) * a)
        .collect();
    let batch = crate::momdp::TrajectoryBatch {
        trajectories: vec![traj.clone()],
        ..Default::default()
    };
    let actions: Vec<usize> = traj.transitions.iter().map(|t| t.action).collect();
    let mut g = Graph::new(params);
    let logits = policy.logits(&mut g, &batch.states(), &batch.alphas())?;
    let terms = policy_terms(&mut g, logits, &actions)?;
    let obj = weighted_log_prob(&mut g, terms.log_probs, &weights)?;
    Ok(g.backward_scalar(obj)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::EnvSpec;
    use crate::ndgrad::Owner;
    use crate::nets::{ArchConfig, ArchKind};
    use crate::rng;

    #[test]
    fn clip_examples() {
        assert_eq!(ppo_clip_term(1.5, 1.0, 0.2), 1.2);
        assert_eq!(ppo_clip_term(0.5, -1.0, 0.2), -0.8);
        assert_eq!(ppo_clip_term(1.0, 3.0, 0.2), 3.0);
    }

    fn small_net(shared: bool) -> (Network, ParamTree) {
        let spec = EnvSpec {
            state_dim: 3,
            num_actions: 4,
            num_objectives: 2,
            max_episode_steps: 10,
        };
        let mut arch = ArchConfig::new(ArchKind::Merge, shared);
        arch.hidden_dim = 8;
        arch.feature_dim = 8;
        Network::build(arch, spec, &mut rng::stream(4, &[])).unwrap()
    }

    fn minibatch(net: &Network, params: &ParamTree) -> Minibatch {
        let states = Tensor::matrix(3, 3, vec![0.1, 0.5, -0.2, 1.0, 0.0, 0.3, -0.4, 0.2, 0.9]);
        let alphas = Tensor::matrix(3, 2, vec![0.5, 0.5, 1.0, 0.0, 0.2, 0.8]);
        let actions = vec![0, 3, 1];
        let mut g = Graph::new(params);
        let logits = net.logits(&mut g, &states, &alphas).unwrap();
        let t = policy_terms(&mut g, logits, &actions).unwrap();
        Minibatch {
            old_log_probs: g.value(t.log_probs).data().to_vec(),
            states,
            alphas,
            actions,
            advantages: vec![1.0, -2.0, 0.5],
            targets: Tensor::matrix(3, 2, vec![1.0, 1.0, 0.0, -1.0, 2.0, 0.5]),
        }
    }

    #[test]
    fn on_policy_loss_is_minus_advantage_sum_and_gradient_is_vanilla() {
        let (net, p) = small_net(true);
        let mb = minibatch(&net, &p);
        let (loss, grads) = ppo_actor_loss(&net, &p, &mb, 0.2).unwrap();
        assert!((loss + mb.advantages.iter().sum::<f64>()).abs() < 1e-12);
        let mut g = Graph::new(&p);
        let logits = net.logits(&mut g, &mb.states, &mb.alphas).unwrap();
        let t = policy_terms(&mut g, logits, &mb.actions).unwrap();
        let pg = weighted_log_prob(&mut g, t.log_probs, &mb.advantages).unwrap();
        let vanilla = g.backward_scalar(pg).unwrap();
        let a = grads.flatten(&p);
        let b = vanilla.flatten(&p);
        for (x, y) in a.iter().zip(&b) {
            assert!((x + y).abs() < 1e-12);
        }
    }

    #[test]
    fn critic_loss_examples() {
        let empty = ParamTree::new();
        let mut g = Graph::new(&empty);
        let pred = g.input(Tensor::matrix(1, 2, vec![0.0, 0.0])).unwrap();
        let l = squared_error(&mut g, pred, &Tensor::matrix(1, 2, vec![1.0, 1.0])).unwrap();
        assert_eq!(g.value(l).item(), 2.0);
        let same = squared_error(&mut g, pred, &Tensor::matrix(1, 2, vec![0.0, 0.0])).unwrap();
        assert_eq!(g.value(same).item(), 0.0);
    }

    #[test]
    fn identity_popart_matches_unnormalized_loss() {
        let (net, p) = small_net(false);
        let mb = minibatch(&net, &p);
        let (loss, _) = critic_loss(&net, &p, &mb).unwrap();
        let stats = PopArtStats::identity(2);
        let out = net.evaluate(&p, &stats, &mb.states, &mb.alphas).unwrap();
        let direct: f64 = out
            .unnormalized_value
            .data()
            .iter()
            .zip(mb.targets.data())
            .map(|(v, q)| (q - v).powi(2))
            .sum();
        assert!((loss - direct).abs() < 1e-10);
    }

    #[test]
    fn separate_trunks_keep_gradients_disjoint() {
        let (net, p) = small_net(false);
        let mb = minibatch(&net, &p);
        let (_, ga) = ppo_actor_loss(&net, &p, &mb, 0.2).unwrap();
        let (_, gc) = critic_loss(&net, &p, &mb).unwrap();
        assert!(ga.touched().count() > 0 && gc.touched().count() > 0);
        assert!(ga.touched().all(|i| p.entry(i).owner == Owner::Actor));
        assert!(gc.touched().all(|i| p.entry(i).owner == Owner::Critic));
    }

    #[test]
    fn entropy_of_uniform_logits_is_log_actions() {
        let p = ParamTree::new();
        let mut g = Graph::new(&p);
        let l = g.input(Tensor::zeros(&[2, 4])).unwrap();
        let t = policy_terms(&mut g, l, &[0, 1]).unwrap();
        assert!((g.value(t.entropy).item() - 4f64.ln()).abs() < 1e-12);
    }
}
