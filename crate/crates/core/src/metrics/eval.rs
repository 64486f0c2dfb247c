use serde::{Deserialize, Serialize};

use super::hv::{hypervolume, pareto_indices};
use crate::envs::{DstMap, Environment};
use crate::error::{Error, Result};
use crate::momdp::{sample_action, sample_weight, Policy, WeightVector};
use crate::ndgrad::Tensor;
use crate::rng::{self, tag, Rng};

/// Hypervolume reference for Minecart-class environments.
pub const MINECART_REFERENCE: [f64; 3] = [0.0, 0.0, -200.0];

/// Which weights to evaluate and how.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalProtocol {
    /// Equally spaced weights for K = 2.
    pub grid_size: usize,
    /// Uniform simplex samples for K ≥ 3.
    pub samples: usize,
    /// Episodes per weight.
    pub episodes: usize,
    pub gamma: f64,
    pub seed: u64,
}

impl Default for EvalProtocol {
    fn default() -> Self {
        Self {
            grid_size: 101,
            samples: 64,
            episodes: 10,
            gamma: 0.99,
            seed: 0,
        }
    }
}

impl EvalProtocol {
    pub fn validate(&self) -> Result<()> {
        if self.grid_size == 0 || self.samples == 0 || self.episodes == 0 {
            return Err(Error::Config("eval grid_size, samples and episodes must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config("eval gamma must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// The evaluation weights. For K = 2, `α₁` runs from 0 to 1.
    pub fn weights(&self, k: usize) -> Vec<WeightVector> {
        if k == 2 {
            let m = self.grid_size;
            (0..m)
                .map(|i| {
                    let a = if m == 1 { 0.5 } else { i as f64 / (m - 1) as f64 };
                    WeightVector::new(vec![a, 1.0 - a]).expect("grid weight on the simplex")
                })
                .collect()
        } else {
            let mut r = rng::stream(self.seed, &[tag::EVAL, u64::MAX]);
            (0..self.samples).map(|_| sample_weight(k, &mut r)).collect()
        }
    }
}

/// Mean returns per evaluated weight.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub alphas: Vec<WeightVector>,
    /// Mean discounted return (protocol γ) per weight.
    pub returns: Vec<Vec<f64>>,
    /// Mean undiscounted return per weight.
    pub undiscounted: Vec<Vec<f64>>,
}

impl Evaluation {
    /// Same weights with the γ = 1 returns in place of the discounted ones.
    pub fn undiscounted_view(&self) -> Evaluation {
        Evaluation {
            alphas: self.alphas.clone(),
            returns: self.undiscounted.clone(),
            undiscounted: self.undiscounted.clone(),
        }
    }

    /// Mean over weights of `αᵀĴ(α)`.
    pub fn expected_utility(&self) -> f64 {
        let n = self.alphas.len().max(1) as f64;
        self.alphas.iter().zip(&self.returns).map(|(a, j)| utility(a, j)).sum::<f64>() / n
    }

    /// Largest utility regret against a reference front over the weights.
    pub fn max_utility_loss(&self, reference_front: &[Vec<f64>]) -> Result<f64> {
        max_utility_loss_of(&self.alphas, &self.returns, reference_front)
    }

    /// Nondominated returns, each tagged with the weight that produced it.
    pub fn front(&self) -> ParetoFront {
        let keep = pareto_indices(&self.returns);
        ParetoFront {
            points: keep.iter().map(|&i| self.returns[i].clone()).collect(),
            alphas: keep.iter().map(|&i| Some(self.alphas[i].clone())).collect(),
        }
    }

    /// Front file: `alpha_1..alpha_K,ret_1..ret_K`, one row per weight.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        write_front_csv(w, &self.alphas, &self.returns)
    }
}

/// A set of nondominated points with the weights that produced them.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParetoFront {
    pub points: Vec<Vec<f64>>,
    pub alphas: Vec<Option<WeightVector>>,
}

impl ParetoFront {
    pub fn from_points(points: &[Vec<f64>]) -> Self {
        let keep = pareto_indices(points);
        Self {
            points: keep.iter().map(|&i| points[i].clone()).collect(),
            alphas: vec![None; keep.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn hypervolume(&self, reference: &[f64]) -> Result<f64> {
        hypervolume(&self.points, reference)
    }
}

pub fn utility(alpha: &WeightVector, j: &[f64]) -> f64 {
    alpha.as_slice().iter().zip(j).map(|(a, x)| a * x).sum()
}

/// `max_α (max_{p ∈ reference} αᵀp − αᵀĴ(α))`.
pub fn max_utility_loss_of(alphas: &[WeightVector], returns: &[Vec<f64>], reference_front: &[Vec<f64>]) -> Result<f64> {
    if reference_front.is_empty() {
        return Err(Error::Config("maximum utility loss needs a nonempty reference front".into()));
    }
    if alphas.is_empty() {
        return Err(Error::Config("maximum utility loss needs at least one weight".into()));
    }
    Ok(alphas
        .iter()
        .zip(returns)
        .map(|(a, j)| {
            let best = reference_front.iter().map(|p| utility(a, p)).fold(f64::NEG_INFINITY, f64::max);
            best - utility(a, j)
        })
        .fold(f64::NEG_INFINITY, f64::max))
}

pub fn write_front_csv<W: std::io::Write>(w: W, alphas: &[WeightVector], returns: &[Vec<f64>]) -> Result<()> {
    let k = alphas.first().map_or(returns.first().map_or(0, Vec::len), WeightVector::k);
    let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    let csv_err = |e: csv::Error| Error::Csv(e.to_string());
    let mut header: Vec<String> = (1..=k).map(|i| format!("alpha_{i}")).collect();
    header.extend((1..=k).map(|i| format!("ret_{i}")));
    out.write_record(&header).map_err(csv_err)?;
    for (a, j) in alphas.iter().zip(returns) {
        let rec: Vec<String> = a.as_slice().iter().chain(j).map(|x| format!("{x:?}")).collect();
        out.write_record(&rec).map_err(csv_err)?;
    }
    out.flush().map_err(|e| Error::io("front file", e))
}

/// Contents of a front file.
#[derive(Clone, Debug, PartialEq)]
pub struct FrontTable {
    /// Number of objectives, from the header.
    pub k: usize,
    pub alphas: Vec<WeightVector>,
    pub returns: Vec<Vec<f64>>,
}

/// Parses a front file. Errors name the offending line.
pub fn read_front_csv<R: std::io::Read>(r: R) -> Result<FrontTable> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let header = rd.headers().map_err(|e| Error::Csv(format!("line 1: {e}")))?.clone();
    let n = header.len();
    let k = n / 2;
    let expect: Vec<String> = (1..=k)
        .map(|i| format!("alpha_{i}"))
        .chain((1..=k).map(|i| format!("ret_{i}")))
        .collect();
    if n == 0 || n % 2 != 0 || header.iter().ne(expect.iter().map(String::as_str)) {
        return Err(Error::Csv(format!("line 1: expected header {}", expect.join(","))));
    }
    let (mut alphas, mut returns) = (Vec::new(), Vec::new());
    for (i, rec) in rd.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Csv(format!("line {line}: {e}")))?;
        let vals: Vec<f64> = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Csv(format!("line {line}: {e}")))?;
        if vals.len() != n {
            return Err(Error::Csv(format!("line {line}: expected {n} fields, got {}", vals.len())));
        }
        let a = WeightVector::new(vals[..k].to_vec()).map_err(|e| Error::Csv(format!("line {line}: {e}")))?;
        alphas.push(a);
        returns.push(vals[k..].to_vec());
    }
    Ok(FrontTable { k, alphas, returns })
}

/// Runs `episodes` rollouts per protocol weight with the stochastic policy,
/// all in lockstep so each step is one batched policy call. Episode `e` of
/// weight `i` draws from the stream `[EVAL, i, e]`.
pub fn evaluate_policy(policy: &dyn Policy, env: &dyn Environment, protocol: &EvalProtocol) -> Result<Evaluation> {
    protocol.validate()?;
    let spec = env.spec();
    let alphas = protocol.weights(spec.num_objectives);
    let e = protocol.episodes;
    struct Run {
        env: Box<dyn Environment>,
        rng: Rng,
        state: Vec<f64>,
        ret: Vec<f64>,
        raw: Vec<f64>,
        discount: f64,
        steps: usize,
        done: bool,
    }
    let mut runs: Vec<Run> = Vec::with_capacity(alphas.len() * e);
    for i in 0..alphas.len() {
        for ep in 0..e {
            let mut rng = rng::stream(protocol.seed, &[tag::EVAL, i as u64, ep as u64]);
            let mut env = env.boxed_clone();
            let state = env.reset(&mut rng);
            runs.push(Run {
                env,
                rng,
                state,
                ret: vec![0.0; spec.num_objectives],
                raw: vec![0.0; spec.num_objectives],
                discount: 1.0,
                steps: 0,
                done: false,
            });
        }
    }
    let limit = spec.max_episode_steps.max(1);
    loop {
        let active: Vec<usize> = (0..runs.len()).filter(|&r| !runs[r].done).collect();
        if active.is_empty() {
            break;
        }
        let states: Vec<&[f64]> = active.iter().map(|&r| runs[r].state.as_slice()).collect();
        let ws: Vec<&[f64]> = active.iter().map(|&r| alphas[r / e].as_slice()).collect();
        let probs = policy.action_probs(&Tensor::from_rows(&states)?, &Tensor::from_rows(&ws)?)?;
        for (row, &r) in active.iter().enumerate() {
            let run = &mut runs[r];
            let (action, _) = sample_action(probs.row(row), &mut run.rng);
            let step = run.env.step(action)?;
            for i in 0..spec.num_objectives {
                run.ret[i] += run.discount * step.reward[i];
                run.raw[i] += step.reward[i];
            }
            run.discount *= protocol.gamma;
            run.steps += 1;
            run.done = step.terminal || step.truncated || run.steps >= limit;
            run.state = step.state;
        }
    }
    let mean = |pick: fn(&Run) -> &Vec<f64>, i: usize| -> Vec<f64> {
        let mut m = vec![0.0; spec.num_objectives];
        for run in &runs[i * e..(i + 1) * e] {
            for (acc, x) in m.iter_mut().zip(pick(run)) {
                *acc += x;
            }
        }
        m.iter().map(|x| x / e as f64).collect()
    };
    Ok(Evaluation {
        returns: (0..alphas.len()).map(|i| mean(|r| &r.ret, i)).collect(),
        undiscounted: (0..alphas.len()).map(|i| mean(|r| &r.raw, i)).collect(),
        alphas,
    })
}

/// Mean over protocol weights of `αᵀĴ(α)`.
pub fn expected_utility(policy: &dyn Policy, env: &dyn Environment, protocol: &EvalProtocol) -> Result<f64> {
    Ok(evaluate_policy(policy, env, protocol)?.expected_utility())
}

/// Worst utility regret of the policy against `reference_front`.
pub fn max_utility_loss(
    policy: &dyn Policy,
    env: &dyn Environment,
    protocol: &EvalProtocol,
    reference_front: &[Vec<f64>],
) -> Result<f64> {
    evaluate_policy(policy, env, protocol)?.max_utility_loss(reference_front)
}

/// Evaluates the policy and keeps the nondominated returns.
pub fn extract_front(policy: &dyn Policy, env: &dyn Environment, protocol: &EvalProtocol) -> Result<ParetoFront> {
    Ok(evaluate_policy(policy, env, protocol)?.front())
}

/// The exact Pareto front where one is known (Deep Sea Treasure).
pub fn true_pareto_front(env: &dyn Environment, gamma: f64) -> Result<Vec<Vec<f64>>> {
    match env.dst_map() {
        Some(map) => Ok(map.oracle_points(gamma)),
        None => Err(Error::Unsupported(
            "no exact Pareto front is known for this environment; pass a reference front file".into(),
        )),
    }
}

/// Hypervolume reference point: from the map for DST, `(0, 0, −200)` for
/// three objectives, otherwise an error.
pub fn reference_point(env: &dyn Environment, gamma: f64) -> Result<Vec<f64>> {
    if let Some(map) = env.dst_map() {
        return Ok(map.hv_reference(gamma));
    }
    match env.spec().num_objectives {
        3 => Ok(MINECART_REFERENCE.to_vec()),
        k => Err(Error::Unsupported(format!("no default hypervolume reference for {k} objectives"))),
    }
}

/// The optimal deterministic policy for Deep Sea Treasure: for weight α it
/// heads for the treasure whose oracle point maximizes `αᵀp` along a
/// shortest path.
#[derive(Clone, Debug)]
pub struct DstOraclePolicy {
    map: DstMap,
    points: Vec<Vec<f64>>,
    /// `dist[t][cell]`: steps from `cell` to treasure `t`.
    dist: Vec<Vec<usize>>,
}

impl DstOraclePolicy {
    pub fn new(map: &DstMap, gamma: f64) -> Self {
        let cells = map.rows * map.cols;
        let is_treasure = |r: usize, c: usize| map.treasures.iter().any(|t| t.row == r && t.col == c);
        let dist = map
            .treasures
            .iter()
            .map(|t| {
                let mut d = vec![usize::MAX; cells];
                d[t.row * map.cols + t.col] = 0;
                let mut changed = true;
                while changed {
                    changed = false;
                    for r in 0..map.rows {
                        for c in 0..map.cols {
                            if !map.passable(r, c) || is_treasure(r, c) {
                                continue;
                            }
                            let best = (0..4)
                                .map(|a| d[map.step_from(r, c, a).0 * map.cols + map.step_from(r, c, a).1])
                                .min()
                                .unwrap();
                            if best != usize::MAX && best + 1 < d[r * map.cols + c] {
                                d[r * map.cols + c] = best + 1;
                                changed = true;
                            }
                        }
                    }
                }
                d
            })
            .collect();
        let points = map
            .treasures
            .iter()
            .zip(map.treasure_distances())
            .map(|(t, dd)| match dd {
                Some(d) => {
                    let fuel: f64 = (0..d).map(|j| gamma.powi(j as i32)).sum();
                    vec![t.value * gamma.powi(d as i32 - 1), map.fuel_cost * fuel]
                }
                None => vec![f64::NEG_INFINITY, f64::NEG_INFINITY],
            })
            .collect();
        Self {
            map: map.clone(),
            points,
            dist,
        }
    }

    fn action(&self, cell: usize, alpha: &[f64]) -> usize {
        let target = (0..self.points.len())
            .max_by(|&a, &b| {
                let ua: f64 = alpha.iter().zip(&self.points[a]).map(|(w, x)| w * x).sum();
                let ub: f64 = alpha.iter().zip(&self.points[b]).map(|(w, x)| w * x).sum();
                ua.total_cmp(&ub).then(b.cmp(&a))
            })
            .unwrap();
        let (r, c) = (cell / self.map.cols, cell % self.map.cols);
        (0..4)
            .min_by_key(|&a| {
                let (nr, nc) = self.map.step_from(r, c, a);
                self.dist[target][nr * self.map.cols + nc]
            })
            .unwrap()
    }
}

impl Policy for DstOraclePolicy {
    fn action_probs(&self, states: &Tensor, alphas: &Tensor) -> Result<Tensor> {
        let n = states.rows();
        let mut out = Tensor::zeros(&[n, 4]);
        for i in 0..n {
            let cell = states
                .row(i)
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(j, _)| j)
                .unwrap_or(0);
            out.row_mut(i)[self.action(cell, alphas.row(i))] = 1.0;
        }
        Ok(out)
    }
}
