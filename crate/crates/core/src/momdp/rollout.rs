use rand::Rng as _;

use super::{sample_weight, WeightVector};
use crate::envs::Environment;
use crate::error::{Error, Result};
use crate::ndgrad::Tensor;
use crate::rng::{self, Rng};

/// A weight-conditioned stochastic policy over discrete actions.
pub trait Policy {
    /// Action probabilities `[n, |A|]` for states `[n, d_s]` and weights `[n, K]`.
    fn action_probs(&self, states: &Tensor, alphas: &Tensor) -> Result<Tensor>;
}

/// A weight-conditioned vector critic.
pub trait Critic {
    /// Unnormalized value predictions `[n, K]`.
    fn values(&self, states: &Tensor, alphas: &Tensor) -> Result<Tensor>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Done {
    /// The episode continues after this transition.
    No,
    Terminal,
    /// Cut by `max_steps` or the environment's time limit.
    Truncated,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: Vec<f64>,
    pub log_prob: f64,
    pub done: Done,
}

/// One episode segment under a fixed weight vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub alpha: WeightVector,
    pub transitions: Vec<Transition>,
    /// State after the last transition, present iff the segment was truncated.
    pub bootstrap_state: Option<Vec<f64>>,
    /// In-episode index of the first transition (nonzero for a segment that
    /// continues an episode cut by an earlier collection call).
    pub start_step: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn is_truncated(&self) -> bool {
        self.bootstrap_state.is_some()
    }

    pub fn rewards(&self) -> Vec<Vec<f64>> {
        self.transitions.iter().map(|t| t.reward.clone()).collect()
    }
}

/// An episode that ended during a collection call.
#[derive(Clone, Debug, PartialEq)]
pub struct CompletedEpisode {
    pub alpha: WeightVector,
    /// Discounted vector return from the episode's first state.
    pub discounted_return: Vec<f64>,
    pub length: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrajectoryBatch {
    pub trajectories: Vec<Trajectory>,
    /// Episodes that finished (terminal or time limit) while collecting.
    pub episodes: Vec<CompletedEpisode>,
    /// Mean entropy of the sampling distributions over all steps.
    pub mean_entropy: f64,
}

impl TrajectoryBatch {
    pub fn num_steps(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }

    /// All visited states, flattened in trajectory order, as `[n, d_s]`.
    pub fn states(&self) -> Tensor {
        let rows: Vec<&[f64]> = self
            .trajectories
            .iter()
            .flat_map(|t| t.transitions.iter().map(|x| x.state.as_slice()))
            .collect();
        Tensor::from_rows(&rows).expect("batch states have one width")
    }

    /// The weight of each flattened transition, as `[n, K]`.
    pub fn alphas(&self) -> Tensor {
        let rows: Vec<&[f64]> = self
            .trajectories
            .iter()
            .flat_map(|t| std::iter::repeat(t.alpha.as_slice()).take(t.len()))
            .collect();
        Tensor::from_rows(&rows).expect("batch weights have one width")
    }

    /// Writes the debug dump: `step,trajectory_id,action,done,r_1..r_K,logprob`.
    /// `done` is 0 (running), 1 (terminal) or 2 (truncated).
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let k = self.trajectories.first().map_or(0, |t| t.alpha.k());
        let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        let mut header = vec!["step".to_string(), "trajectory_id".into(), "action".into(), "done".into()];
        header.extend((1..=k).map(|i| format!("r_{i}")));
        header.push("logprob".into());
        let csv_err = |e: csv::Error| Error::Csv(e.to_string());
        out.write_record(&header).map_err(csv_err)?;
        for (id, traj) in self.trajectories.iter().enumerate() {
            for (step, t) in traj.transitions.iter().enumerate() {
                let done = match t.done {
                    Done::No => 0,
                    Done::Terminal => 1,
                    Done::Truncated => 2,
                };
                let mut rec = vec![step.to_string(), id.to_string(), t.action.to_string(), done.to_string()];
                rec.extend(t.reward.iter().map(|r| r.to_string()));
                rec.push(t.log_prob.to_string());
                out.write_record(&rec).map_err(csv_err)?;
            }
        }
        out.flush().map_err(|e| Error::io("trajectory dump", e))
    }
}

/// Inverse-CDF draw from a categorical distribution; returns the action and
/// its log-probability.
pub fn sample_action(probs: &[f64], rng: &mut Rng) -> (usize, f64) {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (a, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        last = a;
        acc += p;
        if u < acc {
            return (a, p.ln());
        }
    }
    (last, probs[last].ln())
}

/// Runs one episode from a fresh reset, stopping at a terminal state or
/// after `max_steps` transitions (truncation).
pub fn rollout(
    env: &mut dyn Environment,
    policy: &dyn Policy,
    alpha: &WeightVector,
    max_steps: usize,
    rng: &mut Rng,
) -> Result<Trajectory> {
    assert!(max_steps > 0, "max_steps must be positive");
    let spec = env.spec();
    if alpha.k() != spec.num_objectives {
        return Err(Error::DimensionMismatch {
            expected: spec.num_objectives,
            got: alpha.k(),
        });
    }
    let alpha_t = Tensor::matrix(1, alpha.k(), alpha.as_slice().to_vec());
    let mut state = env.reset(rng);
    let mut transitions = Vec::new();
    loop {
        let probs = policy.action_probs(&Tensor::matrix(1, state.len(), state.clone()), &alpha_t)?;
        let (action, log_prob) = sample_action(probs.data(), rng);
        let step = env.step(action)?;
        let cut = !step.terminal && (step.truncated || transitions.len() + 1 >= max_steps);
        let done = if step.terminal {
            Done::Terminal
        } else if cut {
            Done::Truncated
        } else {
            Done::No
        };
        transitions.push(Transition {
            state,
            action,
            reward: step.reward,
            log_prob,
            done,
        });
        state = step.state;
        if done != Done::No {
            return Ok(Trajectory {
                alpha: alpha.clone(),
                transitions,
                bootstrap_state: (done == Done::Truncated).then_some(state),
                start_step: 0,
            });
        }
    }
}

struct Slot {
    env: Box<dyn Environment>,
    state: Option<Vec<f64>>,
    alpha: WeightVector,
    steps_in_episode: usize,
    segment_start: usize,
    ret: Vec<f64>,
    discount: f64,
}

/// Runs `B` environment copies in lockstep, one batched policy forward per
/// step. Each slot collects exactly `steps_per_slot` transitions per call;
/// finished episodes restart with a freshly sampled weight, and episodes
/// still running at the end of a call are cut (and bootstrapped) and carry
/// on in the next call.
///
/// All randomness for slot `j` in call `iteration` comes from the stream
/// `[ROLLOUT, iteration, j]`.
pub struct Collector {
    slots: Vec<Slot>,
    seed: u64,
    k: usize,
    gamma: f64,
}

impl Collector {
    pub fn new(env: &dyn Environment, num_slots: usize, seed: u64) -> Self {
        let k = env.spec().num_objectives;
        Self {
            slots: (0..num_slots)
                .map(|_| Slot {
                    env: env.boxed_clone(),
                    state: None,
                    alpha: WeightVector::uniform(k),
                    steps_in_episode: 0,
                    segment_start: 0,
                    ret: vec![0.0; k],
                    discount: 1.0,
                })
                .collect(),
            seed,
            k,
            gamma: 1.0,
        }
    }

    /// Discount used for the returns reported in [`TrajectoryBatch::episodes`]
    /// (default 1).
    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn num_slots(&self) -> usize {
        self.slots.len()
    }

    pub fn collect(&mut self, policy: &dyn Policy, steps_per_slot: usize, iteration: u64) -> Result<TrajectoryBatch> {
        let b = self.slots.len();
        let mut rngs: Vec<Rng> = (0..b)
            .map(|j| rng::stream(self.seed, &[rng::tag::ROLLOUT, iteration, j as u64]))
            .collect();
        let mut open: Vec<Vec<Transition>> = vec![Vec::new(); b];
        let mut finished: Vec<Vec<Trajectory>> = vec![Vec::new(); b];
        let mut episodes = Vec::new();
        let mut entropy_sum = 0.0;

        for t in 0..steps_per_slot {
            for (slot, r) in self.slots.iter_mut().zip(&mut rngs) {
                if slot.state.is_none() {
                    slot.alpha = sample_weight(self.k, r);
                    slot.state = Some(slot.env.reset(r));
                    slot.steps_in_episode = 0;
                    slot.segment_start = 0;
                    slot.ret.iter_mut().for_each(|r| *r = 0.0);
                    slot.discount = 1.0;
                }
            }
            let states: Vec<&[f64]> = self.slots.iter().map(|s| s.state.as_deref().unwrap()).collect();
            let alphas: Vec<&[f64]> = self.slots.iter().map(|s| s.alpha.as_slice()).collect();
            let probs = policy.action_probs(&Tensor::from_rows(&states)?, &Tensor::from_rows(&alphas)?)?;

            let last = t + 1 == steps_per_slot;
            for j in 0..b {
                let slot = &mut self.slots[j];
                let row = probs.row(j);
                entropy_sum -= row.iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum::<f64>();
                let (action, log_prob) = sample_action(row, &mut rngs[j]);
                let step = slot.env.step(action)?;
                slot.steps_in_episode += 1;
                for (acc, r) in slot.ret.iter_mut().zip(&step.reward) {
                    *acc += slot.discount * r;
                }
                slot.discount *= self.gamma;
                let done = if step.terminal {
                    Done::Terminal
                } else if step.truncated || last {
                    Done::Truncated
                } else {
                    Done::No
                };
                open[j].push(Transition {
                    state: slot.state.take().unwrap(),
                    action,
                    reward: step.reward,
                    log_prob,
                    done,
                });
                // An episode stopped by the environment's time limit ends;
                // one cut only by the end of this call continues.
                let episode_over = step.terminal || step.truncated;
                if done != Done::No {
                    finished[j].push(Trajectory {
                        alpha: slot.alpha.clone(),
                        transitions: std::mem::take(&mut open[j]),
                        bootstrap_state: (done == Done::Truncated).then(|| step.state.clone()),
                        start_step: slot.segment_start,
                    });
                    slot.segment_start = slot.steps_in_episode;
                }
                if episode_over {
                    episodes.push(CompletedEpisode {
                        alpha: slot.alpha.clone(),
                        discounted_return: slot.ret.clone(),
                        length: slot.steps_in_episode,
                    });
                } else {
                    slot.state = Some(step.state);
                }
            }
        }
        let n = (b * steps_per_slot).max(1) as f64;
        Ok(TrajectoryBatch {
            trajectories: finished.into_iter().flatten().collect(),
            episodes,
            mean_entropy: entropy_sum / n,
        })
    }
}

/// `q̂_t = Σ_{u≥t} γ^{u−t} r_u + γ^{T+1−t}·tail`, computed backwards so the
/// recursion `q̂_t = r_t + γ q̂_{t+1}` holds exactly.
pub fn discounted_sums(rewards: &[Vec<f64>], gamma: f64, tail: Option<&[f64]>) -> Vec<Vec<f64>> {
    let k = rewards.first().map_or(0, Vec::len);
    let mut next: Vec<f64> = tail.map_or(vec![0.0; k], <[f64]>::to_vec);
    let mut out = vec![Vec::new(); rewards.len()];
    for t in (0..rewards.len()).rev() {
        let q: Vec<f64> = rewards[t].iter().zip(&next).map(|(r, n)| r + gamma * n).collect();
        out[t] = q.clone();
        next = q;
    }
    out
}

/// Bootstrapped reward-to-go of one trajectory. The tail value of a
/// truncated trajectory is the critic's unnormalized prediction at the
/// bootstrap state.
pub fn reward_to_go(traj: &Trajectory, gamma: f64, critic: &dyn Critic) -> Result<Vec<Vec<f64>>> {
    assert!((0.0..1.0).contains(&gamma) || gamma == 1.0, "gamma must lie in [0, 1]");
    let tail = match &traj.bootstrap_state {
        Some(s) => {
            let v = critic.values(
                &Tensor::matrix(1, s.len(), s.clone()),
                &Tensor::matrix(1, traj.alpha.k(), traj.alpha.as_slice().to_vec()),
            )?;
            Some(v.into_data())
        }
        None => None,
    };
    Ok(discounted_sums(&traj.rewards(), gamma, tail.as_deref()))
}

/// Reward-to-go for a whole batch, flattened in trajectory order. Bootstrap
/// states are evaluated in a single critic call.
pub fn batch_reward_to_go(batch: &TrajectoryBatch, gamma: f64, critic: &dyn Critic) -> Result<Vec<Vec<f64>>> {
    let boot: Vec<&Trajectory> = batch.trajectories.iter().filter(|t| t.is_truncated()).collect();
    let mut tails = Vec::new();
    if !boot.is_empty() {
        let s: Vec<&[f64]> = boot.iter().map(|t| t.bootstrap_state.as_deref().unwrap()).collect();
        let a: Vec<&[f64]> = boot.iter().map(|t| t.alpha.as_slice()).collect();
        let v = critic.values(&Tensor::from_rows(&s)?, &Tensor::from_rows(&a)?)?;
        tails = (0..v.rows()).map(|i| v.row(i).to_vec()).collect();
    }
    let mut tails = tails.into_iter();
    let mut out = Vec::with_capacity(batch.num_steps());
    for t in &batch.trajectories {
        let tail = if t.is_truncated() { tails.next() } else { None };
        out.extend(discounted_sums(&t.rewards(), gamma, tail.as_deref()));
    }
    Ok(out)
}

/// `αᵀ((q̂ − v) / σ)`.
pub fn scalar_advantage(alpha: &[f64], q_hat: &[f64], v: &[f64], sigma: &[f64]) -> f64 {
    alpha
        .iter()
        .zip(q_hat.iter().zip(v).zip(sigma))
        .map(|(a, ((q, v), s))| a * (q - v) / s)
        .sum()
}

/// Vector advantages `q̂_t − Ṽ(s_t, α)` and their normalized scalarization
/// for one trajectory.
pub fn advantages(
    traj: &Trajectory,
    q_hats: &[Vec<f64>],
    critic: &dyn Critic,
    sigma: &[f64],
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let batch = TrajectoryBatch {
        trajectories: vec![traj.clone()],
        ..Default::default()
    };
    batch_advantages(&batch, q_hats, critic, sigma)
}

/// [`advantages`] over a flattened batch.
pub fn batch_advantages(
    batch: &TrajectoryBatch,
    q_hats: &[Vec<f64>],
    critic: &dyn Critic,
    sigma: &[f64],
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    if q_hats.len() != batch.num_steps() {
        return Err(Error::DimensionMismatch {
            expected: batch.num_steps(),
            got: q_hats.len(),
        });
    }
    let v = critic.values(&batch.states(), &batch.alphas())?;
    let alphas = batch.alphas();
    let mut vec_adv = Vec::with_capacity(q_hats.len());
    let mut scal = Vec::with_capacity(q_hats.len());
    for (i, q) in q_hats.iter().enumerate() {
        vec_adv.push(q.iter().zip(v.row(i)).map(|(a, b)| a - b).collect());
        scal.push(scalar_advantage(alphas.row(i), q, v.row(i), sigma));
    }
    Ok((vec_adv, scal))
}

/// Discounted return of a complete episode: reward-to-go at t = 0.
pub fn discounted_return(rewards: &[Vec<f64>], gamma: f64) -> Vec<f64> {
    discounted_sums(rewards, gamma, None)
        .into_iter()
        .next()
        .unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{Dst, DstMap, DOWN};

    struct Fixed(Vec<f64>);

    impl Policy for Fixed {
        fn action_probs(&self, states: &Tensor, _: &Tensor) -> Result<Tensor> {
            let n = states.rows();
            Ok(Tensor::matrix(n, self.0.len(), self.0.repeat(n)))
        }
    }

    struct ConstCritic(Vec<f64>);

    impl Critic for ConstCritic {
        fn values(&self, states: &Tensor, _: &Tensor) -> Result<Tensor> {
            let n = states.rows();
            Ok(Tensor::matrix(n, self.0.len(), self.0.repeat(n)))
        }
    }

    fn traj(rewards: Vec<Vec<f64>>, boot: Option<Vec<f64>>) -> Trajectory {
        let k = rewards[0].len();
        Trajectory {
            alpha: WeightVector::uniform(k),
            transitions: rewards
                .into_iter()
                .map(|r| Transition {
                    state: vec![0.0],
                    action: 0,
                    reward: r,
                    log_prob: 0.0,
                    done: Done::No,
                })
                .collect(),
            bootstrap_state: boot,
            start_step: 0,
        }
    }

    #[test]
    fn reward_to_go_terminal() {
        let q = reward_to_go(&traj(vec![vec![1.0, 0.0], vec![0.0, 1.0]], None), 0.5, &ConstCritic(vec![9.0, 9.0])).unwrap();
        assert_eq!(q, vec![vec![1.0, 0.5], vec![0.0, 1.0]]);
    }

    #[test]
    fn reward_to_go_gamma_zero() {
        let r = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        let q = reward_to_go(&traj(r.clone(), Some(vec![0.0])), 0.0, &ConstCritic(vec![9.0, 9.0])).unwrap();
        assert_eq!(q, r);
    }

    #[test]
    fn reward_to_go_bootstraps() {
        let q = reward_to_go(&traj(vec![vec![0.0, 0.0]], Some(vec![0.0])), 0.99, &ConstCritic(vec![2.0, 4.0])).unwrap();
        assert!((q[0][0] - 1.98).abs() < 1e-12 && (q[0][1] - 3.96).abs() < 1e-12);
    }

    #[test]
    fn discounted_return_examples() {
        assert_eq!(discounted_return(&[vec![1.0, -1.0]], 0.99), vec![1.0, -1.0]);
        let r = discounted_return(&[vec![0.0, -1.0], vec![0.0, -1.0], vec![10.0, -1.0]], 0.99);
        assert!((r[0] - 9.801).abs() < 1e-12 && (r[1] + 2.9701).abs() < 1e-12);
        assert_eq!(discounted_return(&vec![vec![0.0, 0.0]; 4], 0.9), vec![0.0, 0.0]);
    }

    #[test]
    fn advantage_examples() {
        assert!((scalar_advantage(&[0.5, 0.5], &[2.0, 2.0], &[1.0, 0.0], &[1.0, 2.0]) - 1.0).abs() < 1e-15);
        let t = traj(vec![vec![1.0, 2.0]], None);
        let (v, s) = advantages(&t, &[vec![1.0, 2.0]], &ConstCritic(vec![1.0, 2.0]), &[3.0, 0.5]).unwrap();
        assert_eq!(v, vec![vec![0.0, 0.0]]);
        assert_eq!(s, vec![0.0]);
    }

    #[test]
    fn always_down_hits_first_treasure() {
        let mut env = Dst::new(DstMap::default()).unwrap();
        let mut down = vec![0.0; 4];
        down[DOWN] = 1.0;
        let tr = rollout(&mut env, &Fixed(down), &WeightVector::uniform(2), 100, &mut rng::stream(0, &[])).unwrap();
        assert_eq!(tr.len(), 1);
        assert_eq!(tr.transitions[0].reward, vec![1.0, -1.0]);
        assert_eq!(tr.transitions[0].done, Done::Terminal);
        assert!(!tr.is_truncated());
    }

    #[test]
    fn max_steps_one_truncates() {
        let mut env = Dst::new(DstMap::default()).unwrap();
        let tr = rollout(&mut env, &Fixed(vec![1.0, 0.0, 0.0, 0.0]), &WeightVector::uniform(2), 1, &mut rng::stream(0, &[])).unwrap();
        assert_eq!(tr.len(), 1);
        assert!(tr.is_truncated());
        assert_eq!(tr.transitions[0].done, Done::Truncated);
    }

    #[test]
    fn rollouts_are_deterministic() {
        let mut env = Dst::new(DstMap::default()).unwrap();
        let p = Fixed(vec![0.1, 0.4, 0.2, 0.3]);
        let a = rollout(&mut env, &p, &WeightVector::uniform(2), 50, &mut rng::stream(5, &[])).unwrap();
        let b = rollout(&mut env, &p, &WeightVector::uniform(2), 50, &mut rng::stream(5, &[])).unwrap();
        assert_eq!(a, b);
        assert!(a.transitions.iter().all(|t| t.log_prob <= 0.0));
    }

    #[test]
    fn collector_collects_exact_step_count() {
        let env = Dst::new(DstMap::default()).unwrap();
        let p = Fixed(vec![0.25; 4]);
        let mut c = Collector::new(&env, 8, 1);
        let b1 = c.collect(&p, 16, 0).unwrap();
        assert_eq!(b1.num_steps(), 128);
        assert!(b1.trajectories.iter().all(|t| !t.is_empty()));
        let mut c2 = Collector::new(&env, 8, 1);
        assert_eq!(c2.collect(&p, 16, 0).unwrap(), b1);
        let mut buf = Vec::new();
        b1.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("step,trajectory_id,action,done,r_1,r_2,logprob\n"));
        assert_eq!(text.lines().count(), 129);
        assert!((b1.mean_entropy - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn collector_continues_cut_segments() {
        let env = Dst::new(DstMap::default()).unwrap();
        // Always right: stuck against the east wall until the time limit.
        let p = Fixed(vec![0.0, 0.0, 0.0, 1.0]);
        let mut c = Collector::new(&env, 2, 3).with_gamma(0.5);
        let first = c.collect(&p, 150, 0).unwrap();
        assert!(first.episodes.is_empty());
        assert!(first.trajectories.iter().all(|t| t.start_step == 0 && t.is_truncated()));
        let second = c.collect(&p, 60, 1).unwrap();
        assert_eq!(second.episodes.len(), 2);
        let ep = &second.episodes[0];
        assert_eq!(ep.length, 200);
        assert!((ep.discounted_return[1] + 2.0).abs() < 1e-12);
        // The continuation starts at step 150, the new episode at 0.
        let starts: Vec<usize> = second.trajectories.iter().map(|t| t.start_step).collect();
        assert_eq!(starts, vec![150, 0, 150, 0]);
    }

    proptest::proptest! {
        #[test]
        fn reward_to_go_recursion_is_exact(
            r in proptest::collection::vec(proptest::collection::vec(-10.0f64..10.0, 2), 1..15),
            gamma in 0.0f64..0.999,
            tail in proptest::option::of(proptest::collection::vec(-10.0f64..10.0, 2)),
        ) {
            let q = discounted_sums(&r, gamma, tail.as_deref());
            for t in 0..r.len() {
                let next = if t + 1 < r.len() { q[t + 1].clone() } else { tail.clone().unwrap_or(vec![0.0, 0.0]) };
                for i in 0..2 {
                    proptest::prop_assert_eq!(q[t][i], r[t][i] + gamma * next[i]);
                }
            }
        }

        #[test]
        fn unit_sigma_reduces_to_plain_scalarization(
            q in proptest::collection::vec(-10.0f64..10.0, 3),
            v in proptest::collection::vec(-10.0f64..10.0, 3),
            seed in 0u64..1000,
        ) {
            let a = sample_weight(3, &mut rng::stream(seed, &[]));
            let plain: f64 = a.as_slice().iter().zip(q.iter().zip(&v)).map(|(a, (q, v))| a * (q - v)).sum();
            proptest::prop_assert_eq!(scalar_advantage(a.as_slice(), &q, &v, &[1.0; 3]), plain);
        }
    }
}
