use rand::seq::SliceRandom;

use super::beta::update_beta;
use super::config::{Algo, EntropyConfig, TrainConfig};
use super::discard::{check_discard, DiscardAction, DiscardState, NEAR_ZERO};
use super::entropy::{EntropyController, Schedule};
use super::log::{MetricsLog, MetricsRow};
use super::losses::{policy_terms, ppo_objective, squared_error, weighted_log_prob};
use crate::envs::Environment;
use crate::error::{Error, Result};
use crate::momdp::{batch_advantages, batch_reward_to_go, popart_update, Collector, PopArtStats, TrajectoryBatch};
use crate::ndgrad::{adam_step, clip_global_norm, AdamConfig, AdamState, Checkpoint, Gradients, Graph, Owner, ParamTree, Tensor};
use crate::nets::{ArchConfig, Model, Network};
use crate::rng::{self, tag};

/// Final target entropy used on Deep Sea Treasure unless configured.
pub const DST_H_MIN: f64 = 0.1;
/// Final target entropy used elsewhere unless configured.
pub const DEFAULT_H_MIN: f64 = 0.4;

/// One MDMM step as seen by the trainer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EntropyTracePoint {
    pub iteration: u64,
    pub entropy: f64,
    pub target: f64,
    pub lambda_before: f64,
    pub lambda_after: f64,
}

/// Diagnostics that do not belong in the metrics CSV.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    /// Largest `|r − 1|` over the first minibatch of each sampled batch.
    pub max_first_ratio_dev: f64,
    pub entropy_trace: Vec<EntropyTracePoint>,
    pub discards: usize,
    pub resets: usize,
}

pub struct TrainOutput {
    pub net: Network,
    pub params: ParamTree,
    pub popart: PopArtStats,
    pub log: MetricsLog,
    pub report: TrainReport,
    /// Full training state at the end, suitable for resuming.
    pub checkpoint: Checkpoint,
}

#[derive(Clone, Debug, PartialEq)]
enum Optimizers {
    Joint(AdamState),
    Split { actor: AdamState, critic: AdamState },
}

/// Everything a discard or reset rolls back.
#[derive(Clone, Debug, PartialEq)]
struct State {
    params: ParamTree,
    popart: PopArtStats,
    opt: Optimizers,
    ctrl: EntropyController,
    beta_c: f64,
}

#[derive(Default)]
struct UpdateStats {
    entropy: f64,
    actor_norm: f64,
    critic_norm: f64,
    updates: usize,
    critic_updates: usize,
    non_finite: bool,
}

/// Flattened batch columns for fast minibatch slicing.
struct Flat {
    states: Vec<f64>,
    alphas: Vec<f64>,
    actions: Vec<usize>,
    old_log_probs: Vec<f64>,
    /// In-episode step index of each transition.
    times: Vec<usize>,
    ds: usize,
    k: usize,
}

impl Flat {
    fn new(batch: &TrajectoryBatch, ds: usize, k: usize) -> Self {
        let mut f = Flat {
            states: Vec::new(),
            alphas: Vec::new(),
            actions: Vec::new(),
            old_log_probs: Vec::new(),
            times: Vec::new(),
            ds,
            k,
        };
        for tr in &batch.trajectories {
            for (i, t) in tr.transitions.iter().enumerate() {
                f.states.extend(&t.state);
                f.alphas.extend(tr.alpha.as_slice());
                f.actions.push(t.action);
                f.old_log_probs.push(t.log_prob);
                f.times.push(tr.start_step + i);
            }
        }
        f
    }

    fn len(&self) -> usize {
        self.actions.len()
    }

    fn rows(&self, idx: &[usize]) -> (Tensor, Tensor) {
        let mut s = Vec::with_capacity(idx.len() * self.ds);
        let mut a = Vec::with_capacity(idx.len() * self.k);
        for &i in idx {
            s.extend(&self.states[i * self.ds..(i + 1) * self.ds]);
            a.extend(&self.alphas[i * self.k..(i + 1) * self.k]);
        }
        (Tensor::matrix(idx.len(), self.ds, s), Tensor::matrix(idx.len(), self.k, a))
    }
}

fn pick<T: Copy>(v: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| v[i]).collect()
}

/// Runs MOPPO or MOA2C on one environment.
///
/// ```no_run
/// # use dmorl::{algos::*, envs::*, nets::*};
/// let env = make_env("dst", &EnvConfig::default())?;
/// let out = Trainer::new(Algo::Moppo, env.as_ref(), ArchConfig::default(), TrainConfig::default(), 7)
///     .entropy(EntropyConfig::default())
///     .run()?;
/// println!("{} iterations", out.log.len());
/// # Ok::<(), dmorl::Error>(())
/// ```
pub struct Trainer<'e> {
    algo: Algo,
    env: &'e dyn Environment,
    arch: ArchConfig,
    cfg: TrainConfig,
    entropy: EntropyConfig,
    seed: u64,
    resume: Option<Checkpoint>,
    on_iteration: Option<Box<dyn FnMut(&MetricsRow) + 'e>>,
    on_checkpoint: Option<Box<dyn FnMut(u64, &Checkpoint) -> Result<()> + 'e>>,
}

impl<'e> Trainer<'e> {
    pub fn new(algo: Algo, env: &'e dyn Environment, arch: ArchConfig, cfg: TrainConfig, seed: u64) -> Self {
        Self {
            algo,
            env,
            arch,
            cfg,
            entropy: EntropyConfig::default(),
            seed,
            resume: None,
            on_iteration: None,
            on_checkpoint: None,
        }
    }

    pub fn entropy(mut self, entropy: EntropyConfig) -> Self {
        self.entropy = entropy;
        self
    }

    /// Continue from a checkpoint written by an earlier run with the same
    /// architecture. `total_steps` still counts from the very beginning.
    pub fn resume(mut self, checkpoint: Checkpoint) -> Self {
        self.resume = Some(checkpoint);
        self
    }

    /// Called after every logged iteration.
    pub fn on_iteration(mut self, f: impl FnMut(&MetricsRow) + 'e) -> Self {
        self.on_iteration = Some(Box::new(f));
        self
    }

    /// Called with the iteration count whenever the in-memory good
    /// checkpoint is refreshed (every `checkpoint_every` healthy iterations).
    pub fn on_checkpoint(mut self, f: impl FnMut(u64, &Checkpoint) -> Result<()> + 'e) -> Self {
        self.on_checkpoint = Some(Box::new(f));
        self
    }

    fn controller(&self, lr: f64) -> Result<EntropyController> {
        let spec = self.env.spec();
        let h_max = self.entropy.h_max.unwrap_or((spec.num_actions as f64).ln());
        let default_min = if self.env.dst_map().is_some() { DST_H_MIN } else { DEFAULT_H_MIN };
        let h_min = self.entropy.h_min.unwrap_or(default_min);
        let fixed = self.algo == Algo::Moa2c || self.entropy.schedule == Schedule::Fixed;
        if !(h_max > 0.0 && h_max.is_finite()) {
            return Err(Error::Config(format!("entropy.h_max must be positive, got {h_max}")));
        }
        if !fixed && !(h_min > 0.0 && h_min < h_max) {
            return Err(Error::Config(format!("entropy.h_min must lie in (0, h_max = {h_max}), got {h_min}")));
        }
        let e = &self.entropy;
        for (key, v) in [("lambda_init", e.lambda_init), ("fixed_lambda", e.fixed_lambda)] {
            if !v.is_finite() {
                return Err(Error::Config(format!("entropy.{key} must be finite")));
            }
        }
        if !(e.damping >= 0.0 && e.damping.is_finite()) {
            return Err(Error::Config("entropy.damping must be finite and non-negative".into()));
        }
        if let Some(l) = e.lambda_lr {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::Config(format!("entropy.lambda_lr must be positive, got {l}")));
            }
        }
        Ok(EntropyController {
            lambda: self.entropy.lambda_init,
            eta_tilde: self.entropy.lambda_lr.unwrap_or(lr / 10.0),
            damping: self.entropy.damping,
            // MOA2C always uses the plain bonus.
            schedule: if fixed { Schedule::Fixed } else { self.entropy.schedule },
            h_min,
            h_max,
            fixed_lambda: self.entropy.fixed_lambda,
        })
    }

    fn fresh_state(&self, net: &Network, params: ParamTree) -> Result<State> {
        let c = &self.cfg;
        let k = net.spec.num_objectives;
        let adam = |lr| AdamConfig {
            weight_decay: c.critic_weight_decay,
            ..AdamConfig::with_lr(lr)
        };
        let opt = if net.arch.shared_trunk {
            Optimizers::Joint(AdamState::new(&params, adam(c.lr)))
        } else {
            Optimizers::Split {
                actor: AdamState::for_entries(&params, adam(c.lr), |e| e.owner == Owner::Actor),
                critic: AdamState::for_entries(&params, adam(c.lr / c.critic_ratio), |e| e.owner == Owner::Critic),
            }
        };
        Ok(State {
            params,
            popart: if c.popart { PopArtStats::new(k, c.popart_step) } else { PopArtStats::identity(k) },
            opt,
            ctrl: self.controller(c.lr)?,
            beta_c: c.beta_init,
        })
    }

    fn restore(&self, net: &Network, ck: Checkpoint) -> Result<(State, u64, u64)> {
        let (_, fresh) = Network::build(net.arch.clone(), net.spec, &mut rng::stream(self.seed, &[tag::INIT]))?;
        fresh.check_same_layout(&ck.params)?;
        let missing = |what: &str| Error::Config(format!("checkpoint has no `{what}` record"));
        let opt = if net.arch.shared_trunk {
            Optimizers::Joint(ck.optimizer("joint").ok_or_else(|| missing("joint"))?.clone())
        } else {
            Optimizers::Split {
                actor: ck.optimizer("actor").ok_or_else(|| missing("actor"))?.clone(),
                critic: ck.optimizer("critic").ok_or_else(|| missing("critic"))?.clone(),
            }
        };
        let aux = |name: &str| ck.aux(name).ok_or_else(|| missing(name));
        let popart = PopArtStats::from_tensor(aux("popart")?)?;
        let mut ctrl = self.controller(self.cfg.lr)?;
        ctrl.lambda = aux("lambda")?.item();
        let beta_c = aux("beta_c")?.item();
        let progress = aux("progress")?.data().to_vec();
        if progress.len() != 2 {
            return Err(Error::Config("bad checkpoint progress record".into()));
        }
        let state = State {
            params: ck.params,
            popart,
            opt,
            ctrl,
            beta_c,
        };
        Ok((state, progress[0] as u64, progress[1] as u64))
    }

    fn to_checkpoint(state: &State, iteration: u64, env_steps: u64) -> Checkpoint {
        let mut ck = Checkpoint::new(state.params.clone());
        match &state.opt {
            Optimizers::Joint(o) => ck.optimizers.push(("joint".into(), o.clone())),
            Optimizers::Split { actor, critic } => {
                ck.optimizers.push(("actor".into(), actor.clone()));
                ck.optimizers.push(("critic".into(), critic.clone()));
            }
        }
        ck.aux.push(("popart".into(), state.popart.to_tensor()));
        ck.aux.push(("lambda".into(), Tensor::scalar(state.ctrl.lambda)));
        ck.aux.push(("beta_c".into(), Tensor::scalar(state.beta_c)));
        ck.aux.push(("progress".into(), Tensor::vector(vec![iteration as f64, env_steps as f64])));
        ck
    }

    pub fn run(mut self) -> Result<TrainOutput> {
        self.cfg.validate()?;
        let spec = self.env.spec();
        let (net, init) = Network::build(self.arch.clone(), spec, &mut rng::stream(self.seed, &[tag::INIT]))?;
        let (mut state, mut iteration, mut env_steps) = match self.resume.take() {
            Some(ck) => self.restore(&net, ck)?,
            None => (self.fresh_state(&net, init)?, 0, 0),
        };
        let cfg = self.cfg.clone();
        let mut collector = Collector::new(self.env, cfg.num_trajectories, self.seed).with_gamma(cfg.gamma);
        let mut log = MetricsLog::default();
        let mut report = TrainReport::default();
        let mut discard = DiscardState::new();
        let mut good = state.clone();
        let mut last_return = f64::NAN;
        let total = cfg.total_steps.max(1) as f64;

        while env_steps < cfg.total_steps {
            let snapshot = state.clone();
            let batch = {
                let model = Model {
                    net: &net,
                    params: &state.params,
                    popart: &state.popart,
                };
                collector.collect(&model, cfg.rollout_len, iteration).map_err(diverged)?
            };
            env_steps += batch.num_steps() as u64;
            let u = env_steps as f64 / total;
            let mean_return = if batch.episodes.is_empty() {
                last_return
            } else {
                let s: f64 = batch
                    .episodes
                    .iter()
                    .map(|e| e.alpha.as_slice().iter().zip(&e.discounted_return).map(|(a, g)| a * g).sum::<f64>())
                    .sum();
                s / batch.episodes.len() as f64
            };

            let stats = match self.algo {
                Algo::Moppo => moppo_iteration(&net, &cfg, &mut state, &batch, (self.seed, iteration), u, &mut report).map_err(diverged)?,
                Algo::Moa2c => a2c_iteration(&net, &cfg, &mut state, &batch).map_err(diverged)?,
            };
            let entropy_after = if stats.non_finite {
                f64::NAN
            } else {
                mean_entropy(&net, &state.params, &batch).map_err(diverged)?
            };
            let actor_norm = stats.actor_norm / stats.updates.max(1) as f64;
            let critic_norm = stats.critic_norm / stats.critic_updates.max(1) as f64;

            let action = if stats.non_finite || !entropy_after.is_finite() {
                if !cfg.discard {
                    return Err(Error::Training(format!("non-finite update in iteration {iteration}")));
                }
                if discard.force_discard() {
                    DiscardAction::DiscardStep
                } else {
                    DiscardAction::ResetToCheckpoint
                }
            } else if cfg.discard {
                let prev = if last_return.is_finite() { last_return } else { f64::NEG_INFINITY };
                let now = if mean_return.is_finite() { mean_return } else { f64::NEG_INFINITY };
                check_discard(&mut discard, entropy_after, batch.mean_entropy, now, prev, actor_norm)
            } else {
                DiscardAction::Accept
            };
            let discarded = match action {
                DiscardAction::Accept => false,
                DiscardAction::DiscardStep => {
                    state = snapshot;
                    report.discards += 1;
                    true
                }
                DiscardAction::ResetToCheckpoint => {
                    report.resets += 1;
                    if report.resets > cfg.max_resets {
                        return Err(Error::Training(format!(
                            "training collapsed {} times (limit {}); last at iteration {iteration}",
                            report.resets, cfg.max_resets
                        )));
                    }
                    state = good.clone();
                    discard.after_reset();
                    true
                }
            };
            if !discarded
                && (iteration + 1) % cfg.checkpoint_every as u64 == 0
                && entropy_after.abs() >= NEAR_ZERO
                && actor_norm >= NEAR_ZERO
            {
                good = state.clone();
                if let Some(f) = self.on_checkpoint.as_mut() {
                    f(iteration + 1, &Self::to_checkpoint(&state, iteration + 1, env_steps))?;
                }
            }

            let row = MetricsRow {
                iteration,
                env_steps,
                // Nothing to average before the first episode ends.
                mean_scalarized_return: if mean_return.is_finite() { mean_return } else { 0.0 },
                entropy: stats.entropy / stats.updates.max(1) as f64,
                lambda: if state.ctrl.schedule == Schedule::Fixed { state.ctrl.fixed_lambda } else { state.ctrl.lambda },
                beta_c: state.beta_c,
                actor_grad_norm: actor_norm,
                critic_grad_norm: critic_norm,
                discarded,
            };
            if let Some(f) = self.on_iteration.as_mut() {
                f(&row);
            }
            log.push(row);
            if mean_return.is_finite() {
                last_return = mean_return;
            }
            iteration += 1;
        }

        let checkpoint = Self::to_checkpoint(&state, iteration, env_steps);
        Ok(TrainOutput {
            net,
            params: state.params,
            popart: state.popart,
            log,
            report,
            checkpoint,
        })
    }
}

/// Numeric blow-ups inside the loop are training failures, not bad input.
fn diverged(e: Error) -> Error {
    match e {
        Error::Nd(crate::ndgrad::NdError::NonFinite(what)) => Error::Training(format!("non-finite value produced by {what}")),
        e => e,
    }
}

/// Rebuilds the network stored in a training checkpoint for evaluation.
///
/// Fails when the checkpoint was written for another architecture or
/// environment shape.
pub fn load_model(arch: &ArchConfig, spec: crate::envs::EnvSpec, checkpoint: &Checkpoint) -> Result<(Network, ParamTree, PopArtStats)> {
    let (net, fresh) = Network::build(arch.clone(), spec, &mut rng::stream(0, &[tag::INIT]))?;
    fresh.check_same_layout(&checkpoint.params)?;
    let popart = match checkpoint.aux("popart") {
        Some(t) => PopArtStats::from_tensor(t)?,
        None => PopArtStats::identity(spec.num_objectives),
    };
    if popart.k() != spec.num_objectives {
        return Err(Error::DimensionMismatch {
            expected: spec.num_objectives,
            got: popart.k(),
        });
    }
    Ok((net, checkpoint.params.clone(), popart))
}

/// MOPPO with the default entropy settings.
pub fn train_moppo(config: &TrainConfig, env: &dyn Environment, arch: &ArchConfig, seed: u64) -> Result<TrainOutput> {
    Trainer::new(Algo::Moppo, env, arch.clone(), config.clone(), seed).run()
}

/// MOA2C with the default entropy bonus.
pub fn train_moa2c(config: &TrainConfig, env: &dyn Environment, arch: &ArchConfig, seed: u64) -> Result<TrainOutput> {
    Trainer::new(Algo::Moa2c, env, arch.clone(), config.clone(), seed).run()
}

fn mean_entropy(net: &Network, params: &ParamTree, batch: &TrajectoryBatch) -> Result<f64> {
    let mut g = Graph::new(params);
    let logits = net.forward(&mut g, &batch.states(), &batch.alphas(), true, false)?.logits.unwrap();
    let t = policy_terms(&mut g, logits, &vec![0; batch.num_steps()])?;
    Ok(g.value(t.entropy).item())
}

/// PopArt update, targets and scalar advantages for one epoch.
fn prepare_epoch(net: &Network, cfg: &TrainConfig, state: &mut State, batch: &TrajectoryBatch) -> Result<(Tensor, Vec<f64>)> {
    let q = {
        let model = Model {
            net,
            params: &state.params,
            popart: &state.popart,
        };
        batch_reward_to_go(batch, cfg.gamma, &model)?
    };
    if cfg.popart {
        popart_update(&mut state.popart, &mut net.critic_head(&mut state.params), &q)?;
    }
    let model = Model {
        net,
        params: &state.params,
        popart: &state.popart,
    };
    let (_, adv) = batch_advantages(batch, &q, &model, &state.popart.sigma)?;
    let k = net.spec.num_objectives;
    let mut targets = Vec::with_capacity(q.len() * k);
    for row in &q {
        targets.extend(state.popart.normalize(row));
    }
    Ok((Tensor::matrix(q.len(), k, targets), adv))
}

fn rows_of(t: &Tensor, idx: &[usize]) -> Tensor {
    let c = t.cols();
    let mut d = Vec::with_capacity(idx.len() * c);
    for &i in idx {
        d.extend(t.row(i));
    }
    Tensor::matrix(idx.len(), c, d)
}

/// Applies the gradients already accumulated in `params`.
fn apply(params: &mut ParamTree, opt: &mut AdamState, max_norm: f64) -> bool {
    clip_global_norm(params, max_norm);
    adam_step(params, opt).is_ok()
}

fn split_chunks(n: usize, m: usize) -> Vec<std::ops::Range<usize>> {
    (0..m).map(|i| i * n / m..(i + 1) * n / m).filter(|r| !r.is_empty()).collect()
}

fn moppo_iteration(
    net: &Network,
    cfg: &TrainConfig,
    state: &mut State,
    batch: &TrajectoryBatch,
    (seed, iteration): (u64, u64),
    u: f64,
    report: &mut TrainReport,
) -> Result<UpdateStats> {
    let flat = Flat::new(batch, net.spec.state_dim, net.spec.num_objectives);
    let n = flat.len();
    let mut st = UpdateStats::default();
    let chunks = split_chunks(n, cfg.minibatches);
    for epoch in 0..cfg.epochs {
        let (targets, adv) = prepare_epoch(net, cfg, state, batch)?;
        let shuffled = |salt: u64| {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng::stream(seed, &[tag::MINIBATCH, iteration, epoch as u64, salt]));
            perm
        };
        let perm = shuffled(0);

        if !net.arch.shared_trunk {
            // Separate trunks: F critic passes on their own optimizer first.
            for f in 0..cfg.critic_epochs {
                let cperm = shuffled(f as u64 + 1);
                for c in &chunks {
                    let idx = &cperm[c.clone()];
                    let (s, a) = flat.rows(idx);
                    let gc = {
                        let mut g = Graph::new(&state.params);
                        let v = net.forward(&mut g, &s, &a, false, true)?.value.unwrap();
                        let l = squared_error(&mut g, v, &rows_of(&targets, idx))?;
                        let l = g.scale(l, 1.0 / idx.len() as f64)?;
                        g.backward_scalar(l)?
                    };
                    st.critic_norm += gc.norm();
                    st.critic_updates += 1;
                    let Optimizers::Split { critic, .. } = &mut state.opt else { unreachable!() };
                    state.params.accumulate(&gc, 1.0);
                    if !gc.is_finite() || !apply(&mut state.params, critic, cfg.max_grad_norm) {
                        state.params.zero_grads();
                        st.non_finite = true;
                        return Ok(st);
                    }
                }
            }
        }

        for (ci, c) in chunks.iter().enumerate() {
            let idx = &perm[c.clone()];
            let m = idx.len() as f64;
            let (s, a) = flat.rows(idx);
            let actions = pick(&flat.actions, idx);
            let old = pick(&flat.old_log_probs, idx);
            let mb_adv = pick(&adv, idx);
            let shared = net.arch.shared_trunk;
            let (ga, gc, h_hat, target, lambda_before) = {
                let mut g = Graph::new(&state.params);
                let heads = net.forward(&mut g, &s, &a, true, shared)?;
                let terms = policy_terms(&mut g, heads.logits.unwrap(), &actions)?;
                if epoch == 0 && ci == 0 {
                    let dev = g
                        .value(terms.log_probs)
                        .data()
                        .iter()
                        .zip(&old)
                        .map(|(lp, o)| ((lp - o).exp() - 1.0).abs())
                        .fold(0.0, f64::max);
                    report.max_first_ratio_dev = report.max_first_ratio_dev.max(dev);
                }
                let h_hat = g.value(terms.entropy).item();
                let target = state.ctrl.target(u);
                let lambda_before = state.ctrl.lambda;
                let coef = state.ctrl.step(h_hat, target);
                let obj = ppo_objective(&mut g, terms.log_probs, &old, &mb_adv, cfg.clip_eps)?;
                let obj = g.scale(obj, 1.0 / m)?;
                let ent = g.scale(terms.entropy, coef)?;
                let total = g.add(obj, ent)?;
                let la = g.scale(total, -1.0)?;
                let ga = g.backward_scalar(la)?;
                let gc = match heads.value {
                    Some(v) => {
                        let l = squared_error(&mut g, v, &rows_of(&targets, idx))?;
                        let l = g.scale(l, 1.0 / m)?;
                        Some(g.backward_scalar(l)?)
                    }
                    None => None,
                };
                (ga, gc, h_hat, target, lambda_before)
            };
            report.entropy_trace.push(EntropyTracePoint {
                iteration,
                entropy: h_hat,
                target,
                lambda_before,
                lambda_after: state.ctrl.lambda,
            });
            st.entropy += h_hat;
            st.updates += 1;
            if !step_actor(cfg, state, &mut st, ga, gc) {
                return Ok(st);
            }
        }
    }
    Ok(st)
}

/// Applies one actor update (combined with the critic for shared trunks).
/// Returns false when the update was non-finite.
fn step_actor(cfg: &TrainConfig, state: &mut State, st: &mut UpdateStats, ga: Gradients, gc: Option<Gradients>) -> bool {
    let na = ga.norm();
    st.actor_norm += na;
    let ok = match (&mut state.opt, gc) {
        (Optimizers::Joint(opt), Some(gc)) => {
            let nc = gc.norm();
            st.critic_norm += nc;
            st.critic_updates += 1;
            state.beta_c = update_beta(state.beta_c, na, nc, cfg.critic_ratio, cfg.beta_delta);
            state.params.accumulate(&ga, 1.0);
            state.params.accumulate(&gc, state.beta_c);
            ga.is_finite() && gc.is_finite() && apply(&mut state.params, opt, cfg.max_grad_norm)
        }
        (Optimizers::Split { actor, .. }, None) => {
            state.params.accumulate(&ga, 1.0);
            ga.is_finite() && apply(&mut state.params, actor, cfg.max_grad_norm)
        }
        _ => unreachable!("optimizer layout follows the trunk layout"),
    };
    if !ok {
        state.params.zero_grads();
        st.non_finite = true;
    }
    ok
}

fn a2c_iteration(net: &Network, cfg: &TrainConfig, state: &mut State, batch: &TrajectoryBatch) -> Result<UpdateStats> {
    let flat = Flat::new(batch, net.spec.state_dim, net.spec.num_objectives);
    let n = flat.len() as f64;
    let all: Vec<usize> = (0..flat.len()).collect();
    let (s, a) = flat.rows(&all);
    let mut st = UpdateStats::default();
    let shared = net.arch.shared_trunk;
    for _ in 0..cfg.epochs {
        let (targets, adv) = prepare_epoch(net, cfg, state, batch)?;
        if !shared {
            for _ in 0..cfg.critic_epochs {
                let gc = {
                    let mut g = Graph::new(&state.params);
                    let v = net.forward(&mut g, &s, &a, false, true)?.value.unwrap();
                    let l = squared_error(&mut g, v, &targets)?;
                    let l = g.scale(l, 1.0 / n)?;
                    g.backward_scalar(l)?
                };
                st.critic_norm += gc.norm();
                st.critic_updates += 1;
                let Optimizers::Split { critic, .. } = &mut state.opt else { unreachable!() };
                state.params.accumulate(&gc, 1.0);
                if !gc.is_finite() || !apply(&mut state.params, critic, cfg.max_grad_norm) {
                    state.params.zero_grads();
                    st.non_finite = true;
                    return Ok(st);
                }
            }
        }
        let weights: Vec<f64> = adv
            .iter()
            .zip(&flat.times)
            .map(|(a, &t)| cfg.gamma.powi(t as i32) * a)
            .collect();
        let (ga, gc, h_hat) = {
            let mut g = Graph::new(&state.params);
            let heads = net.forward(&mut g, &s, &a, true, shared)?;
            let terms = policy_terms(&mut g, heads.logits.unwrap(), &flat.actions)?;
            let h_hat = g.value(terms.entropy).item();
            let coef = state.ctrl.step(h_hat, state.ctrl.h_max);
            let obj = weighted_log_prob(&mut g, terms.log_probs, &weights)?;
            let obj = g.scale(obj, 1.0 / n)?;
            let ent = g.scale(terms.entropy, coef)?;
            let total = g.add(obj, ent)?;
            let la = g.scale(total, -1.0)?;
            let ga = g.backward_scalar(la)?;
            let gc = match heads.value {
                Some(v) => {
                    let l = squared_error(&mut g, v, &targets)?;
                    let l = g.scale(l, 1.0 / n)?;
                    Some(g.backward_scalar(l)?)
                }
                None => None,
            };
            (ga, gc, h_hat)
        };
        st.entropy += h_hat;
        st.updates += 1;
        if !step_actor(cfg, state, &mut st, ga, gc) {
            return Ok(st);
        }
    }
    Ok(st)
}
