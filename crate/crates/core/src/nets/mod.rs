//! Weight-conditioned actor-critic networks.
//!
//! Parameter naming. `P` is `trunk` when the trunk is shared, otherwise
//! `actor` and `critic` each get their own copy:
//!
//! ```text
//! multi-body    P.body{i}.{w,b}          one body per objective
//! merge         P.state.{w,b}, P.alpha.{w,b}
//! hypernet(-obs) P.hyper.{w,b}            first hypernetwork layer
//! all           P.mlp{l}.{w,b}           the MLP after the conditioning stage
//! heads         actor.head.{w,b}, critic.head.{w,b}          (non-hyper)
//!               actor.gen.{w,b},  critic.gen.{w,b}           (hyper, generates the heads)
//! ```
//!
//! Weights are stored `[out, in]`.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::envs::EnvSpec;
use crate::error::{Error, Result};
use crate::momdp::{CriticHead, PopArtStats};
use crate::ndgrad::{Graph, Owner, ParamTree, Tensor, Var};
use crate::rng::Rng;

/// How far a weight row may stray from the simplex before forward rejects it.
pub const ALPHA_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArchKind {
    MultiBody,
    Merge,
    Hypernet,
    HypernetObs,
}

impl ArchKind {
    pub const ALL: [ArchKind; 4] = [ArchKind::MultiBody, ArchKind::Merge, ArchKind::Hypernet, ArchKind::HypernetObs];

    pub fn is_hyper(self) -> bool {
        matches!(self, ArchKind::Hypernet | ArchKind::HypernetObs)
    }

    pub fn name(self) -> &'static str {
        match self {
            ArchKind::MultiBody => "multi-body",
            ArchKind::Merge => "merge",
            ArchKind::Hypernet => "hypernet",
            ArchKind::HypernetObs => "hypernet-obs",
        }
    }

    /// Default hidden width: 256 for multi-body and merge, 64 for hypernets.
    pub fn default_hidden(self) -> usize {
        if self.is_hyper() {
            64
        } else {
            256
        }
    }
}

impl std::str::FromStr for ArchKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s || k.name().replace('-', "_") == s)
            .ok_or_else(|| Error::Config(format!("unknown arch `{s}` (expected multi-body, merge, hypernet or hypernet-obs)")))
    }
}

impl std::fmt::Display for ArchKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchConfig {
    pub kind: ArchKind,
    pub shared_trunk: bool,
    pub hidden_dim: usize,
    /// Width of the features fed to the heads.
    pub feature_dim: usize,
    /// Linear+ReLU layers after the conditioning stage.
    pub mlp_depth: usize,
}

impl ArchConfig {
    pub fn new(kind: ArchKind, shared_trunk: bool) -> Self {
        let h = kind.default_hidden();
        Self {
            kind,
            shared_trunk,
            hidden_dim: h,
            feature_dim: h,
            mlp_depth: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 || self.feature_dim == 0 || self.mlp_depth == 0 {
            return Err(Error::Config("arch hidden_dim, feature_dim and mlp_depth must be positive".into()));
        }
        Ok(())
    }
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self::new(ArchKind::MultiBody, true)
    }
}

/// Graph nodes produced by one forward pass.
pub struct Heads {
    /// `[n, |A|]`, present when the actor was requested.
    pub logits: Option<Var>,
    /// Normalized critic output `[n, K]`, present when requested.
    pub value: Option<Var>,
    /// Features entering the actor head.
    pub actor_features: Option<Var>,
}

/// Evaluated outputs for a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct ActorCriticOutput {
    pub action_probs: Tensor,
    pub normalized_value: Tensor,
    pub unnormalized_value: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub arch: ArchConfig,
    pub spec: EnvSpec,
}

fn glorot(rng: &mut Rng, out: usize, inp: usize, scale: f64) -> Tensor {
    let a = (6.0 / (out + inp) as f64).sqrt();
    Tensor::matrix(out, inp, (0..out * inp).map(|_| scale * rng.gen_range(-a..a)).collect())
}

impl Network {
    /// Builds the network and its freshly initialized parameters.
    pub fn build(arch: ArchConfig, spec: EnvSpec, rng: &mut Rng) -> Result<(Self, ParamTree)> {
        arch.validate()?;
        let net = Self { arch, spec };
        let mut p = ParamTree::new();
        let trunks: &[(&str, Owner)] = if net.arch.shared_trunk {
            &[("trunk", Owner::Shared)]
        } else {
            &[("actor", Owner::Actor), ("critic", Owner::Critic)]
        };
        for &(ns, owner) in trunks {
            net.build_trunk(&mut p, ns, owner, rng)?;
        }
        let (f, na, k) = (net.arch.feature_dim, spec.num_actions, spec.num_objectives);
        let mut lin = |p: &mut ParamTree, name: &str, out: usize, inp: usize, scale: f64, owner: Owner| -> Result<()> {
            p.insert(&format!("{name}.w"), glorot(rng, out, inp, scale), owner)?;
            p.insert(&format!("{name}.b"), Tensor::zeros(&[out]), owner)?;
            Ok(())
        };
        if net.arch.kind.is_hyper() {
            let hh = net.arch.hidden_dim;
            lin(&mut p, "actor.gen", na * (f + 1), hh, 0.01, Owner::Actor)?;
            lin(&mut p, "critic.gen", k * (f + 1), hh, 0.01, Owner::Critic)?;
        } else {
            lin(&mut p, "actor.head", na, f, 0.01, Owner::Actor)?;
            lin(&mut p, "critic.head", k, f, 1.0, Owner::Critic)?;
        }
        Ok((net, p))
    }

    fn build_trunk(&self, p: &mut ParamTree, ns: &str, owner: Owner, rng: &mut Rng) -> Result<()> {
        let (ds, k, h, f) = (self.spec.state_dim, self.spec.num_objectives, self.arch.hidden_dim, self.arch.feature_dim);
        let mut lin = |p: &mut ParamTree, name: String, out: usize, inp: usize| -> Result<()> {
            p.insert(&format!("{name}.w"), glorot(rng, out, inp, 1.0), owner)?;
            p.insert(&format!("{name}.b"), Tensor::zeros(&[out]), owner)?;
            Ok(())
        };
        let mlp_in = match self.arch.kind {
            ArchKind::MultiBody => {
                for i in 0..k {
                    lin(p, format!("{ns}.body{i}"), h, ds)?;
                }
                h
            }
            ArchKind::Merge => {
                lin(p, format!("{ns}.state"), h, ds)?;
                lin(p, format!("{ns}.alpha"), h, k)?;
                h
            }
            ArchKind::Hypernet => {
                lin(p, format!("{ns}.hyper"), h, k)?;
                ds
            }
            ArchKind::HypernetObs => {
                lin(p, format!("{ns}.hyper"), h, k + ds)?;
                ds
            }
        };
        let depth = self.arch.mlp_depth;
        for l in 0..depth {
            let inp = if l == 0 { mlp_in } else { h };
            let out = if l + 1 == depth { f } else { h };
            lin(p, format!("{ns}.mlp{l}"), out, inp)?;
        }
        Ok(())
    }

    fn check_inputs(&self, states: &Tensor, alphas: &Tensor) -> Result<()> {
        let (ds, k) = (self.spec.state_dim, self.spec.num_objectives);
        if states.shape().len() != 2 || states.cols() != ds {
            return Err(Error::DimensionMismatch { expected: ds, got: states.cols() });
        }
        if alphas.shape().len() != 2 || alphas.cols() != k || alphas.rows() != states.rows() {
            return Err(Error::DimensionMismatch { expected: k, got: alphas.cols() });
        }
        for i in 0..alphas.rows() {
            let r = alphas.row(i);
            if r.iter().any(|&a| a < -ALPHA_TOL) || (r.iter().sum::<f64>() - 1.0).abs() > ALPHA_TOL {
                return Err(Error::InvalidWeights(format!("row {i} {r:?} is off the simplex")));
            }
        }
        Ok(())
    }

    fn affine(g: &mut Graph<'_>, x: Var, name: &str) -> Result<Var> {
        let w = g.param(&format!("{name}.w"))?;
        let b = g.param(&format!("{name}.b"))?;
        Ok(g.affine(x, w, b)?)
    }

    /// The conditioning stage before the MLP, plus the hypernet code `h`.
    pub(crate) fn condition(&self, g: &mut Graph<'_>, ns: &str, s: Var, a: Var) -> Result<(Var, Option<Var>)> {
        let k = self.spec.num_objectives;
        let mut hyper = None;
        let x = match self.arch.kind {
            ArchKind::MultiBody => {
                let mut bodies = Vec::with_capacity(k);
                for i in 0..k {
                    let z = Self::affine(g, s, &format!("{ns}.body{i}"))?;
                    bodies.push(g.relu(z)?);
                }
                g.weighted_sum(a, &bodies)?
            }
            ArchKind::Merge => {
                let zs = Self::affine(g, s, &format!("{ns}.state"))?;
                let za = Self::affine(g, a, &format!("{ns}.alpha"))?;
                let ss = g.sigmoid(zs)?;
                let sa = g.sigmoid(za)?;
                g.mul(ss, sa)?
            }
            ArchKind::Hypernet | ArchKind::HypernetObs => {
                let input = if self.arch.kind == ArchKind::HypernetObs { g.concat(a, s)? } else { a };
                let z = Self::affine(g, input, &format!("{ns}.hyper"))?;
                hyper = Some(g.relu(z)?);
                s
            }
        };
        Ok((x, hyper))
    }

    /// Trunk features `[n, F]` and, for hypernets, the hidden code `h`.
    fn trunk(&self, g: &mut Graph<'_>, ns: &str, s: Var, a: Var) -> Result<(Var, Option<Var>)> {
        let (mut x, hyper) = self.condition(g, ns, s, a)?;
        for l in 0..self.arch.mlp_depth {
            let z = Self::affine(g, x, &format!("{ns}.mlp{l}"))?;
            x = g.relu(z)?;
        }
        Ok((x, hyper))
    }

    fn head(&self, g: &mut Graph<'_>, who: &str, feat: Var, hyper: Option<Var>, out: usize) -> Result<Var> {
        match hyper {
            None => Self::affine(g, feat, &format!("{who}.head")),
            Some(h) => {
                let gen = Self::affine(g, h, &format!("{who}.gen"))?;
                Ok(g.per_sample_linear(feat, gen, out)?)
            }
        }
    }

    /// Records the forward pass on `g`. `states: [n, d_s]`, `alphas: [n, K]`.
    pub fn forward(&self, g: &mut Graph<'_>, states: &Tensor, alphas: &Tensor, actor: bool, critic: bool) -> Result<Heads> {
        self.check_inputs(states, alphas)?;
        let s = g.input(states.clone())?;
        let a = g.input(alphas.clone())?;
        let (na, k) = (self.spec.num_actions, self.spec.num_objectives);
        let mut heads = Heads {
            logits: None,
            value: None,
            actor_features: None,
        };
        if self.arch.shared_trunk {
            let (f, h) = self.trunk(g, "trunk", s, a)?;
            heads.actor_features = Some(f);
            if actor {
                heads.logits = Some(self.head(g, "actor", f, h, na)?);
            }
            if critic {
                heads.value = Some(self.head(g, "critic", f, h, k)?);
            }
        } else {
            if actor {
                let (f, h) = self.trunk(g, "actor", s, a)?;
                heads.actor_features = Some(f);
                heads.logits = Some(self.head(g, "actor", f, h, na)?);
            }
            if critic {
                let (f, h) = self.trunk(g, "critic", s, a)?;
                heads.value = Some(self.head(g, "critic", f, h, k)?);
            }
        }
        Ok(heads)
    }

    /// Full evaluation: probabilities plus normalized and unnormalized values.
    pub fn evaluate(&self, params: &ParamTree, popart: &PopArtStats, states: &Tensor, alphas: &Tensor) -> Result<ActorCriticOutput> {
        let mut g = Graph::new(params);
        let h = self.forward(&mut g, states, alphas, true, true)?;
        let probs = g.softmax(h.logits.unwrap())?;
        let norm = g.value(h.value.unwrap()).clone();
        Ok(ActorCriticOutput {
            action_probs: g.value(probs).clone(),
            unnormalized_value: denormalize_rows(&norm, popart),
            normalized_value: norm,
        })
    }

    /// The parameters producing the normalized critic output, for PopArt.
    pub fn critic_head<'a>(&self, params: &'a mut ParamTree) -> ParamCriticHead<'a> {
        let hyper = self.arch.kind.is_hyper();
        ParamCriticHead {
            params,
            prefix: if hyper { "critic.gen" } else { "critic.head" },
            generated: hyper.then_some(self.arch.feature_dim),
        }
    }
}

pub(crate) fn denormalize_rows(norm: &Tensor, popart: &PopArtStats) -> Tensor {
    let mut out = norm.clone();
    let k = out.cols();
    for row in out.data_mut().chunks_mut(k) {
        for i in 0..k {
            row[i] = popart.sigma[i] * row[i] + popart.mu[i];
        }
    }
    out
}

/// ART rescale target inside a [`ParamTree`].
///
/// For linear heads row `i` of `critic.head.w` and entry `i` of the bias
/// produce output `i`. For hypernets the generator rows `i·F..(i+1)·F`
/// produce the weights of output `i` and row `K·F + i` produces its bias.
pub struct ParamCriticHead<'a> {
    params: &'a mut ParamTree,
    prefix: &'static str,
    generated: Option<usize>,
}

impl CriticHead for ParamCriticHead<'_> {
    fn preserve(&mut self, old_mu: &[f64], old_sigma: &[f64], new_mu: &[f64], new_sigma: &[f64]) -> Result<()> {
        let k = old_mu.len();
        let w_name = format!("{}.w", self.prefix);
        let b_name = format!("{}.b", self.prefix);
        // (rows of output i, bias row of output i)
        let groups: Vec<(std::ops::Range<usize>, usize)> = match self.generated {
            None => (0..k).map(|i| (i..i + 1, i)).collect(),
            Some(f) => (0..k).map(|i| (i * f..(i + 1) * f, k * f + i)).collect(),
        };
        let is_gen = self.generated.is_some();
        for (i, (rows, bias_row)) in groups.into_iter().enumerate() {
            let s = old_sigma[i] / new_sigma[i];
            let shift = (old_mu[i] - new_mu[i]) / new_sigma[i];
            let w = self.params.value_mut(&w_name)?;
            for r in rows.clone() {
                w.row_mut(r).iter_mut().for_each(|x| *x *= s);
            }
            if is_gen {
                w.row_mut(bias_row).iter_mut().for_each(|x| *x *= s);
            }
            let b = self.params.value_mut(&b_name)?.data_mut();
            if is_gen {
                for r in rows {
                    b[r] *= s;
                }
            }
            b[bias_row] = s * b[bias_row] + shift;
        }
        Ok(())
    }
}

/// A borrowed network snapshot usable as a rollout policy and critic.
#[derive(Clone, Copy)]
pub struct Model<'a> {
    pub net: &'a Network,
    pub params: &'a ParamTree,
    pub popart: &'a PopArtStats,
}

impl crate::momdp::Policy for Model<'_> {
    fn action_probs(&self, states: &Tensor, alphas: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new(self.params);
        let h = self.net.forward(&mut g, states, alphas, true, false)?;
        let p = g.softmax(h.logits.unwrap())?;
        Ok(g.value(p).clone())
    }
}

impl crate::momdp::Critic for Model<'_> {
    fn values(&self, states: &Tensor, alphas: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new(self.params);
        let h = self.net.forward(&mut g, states, alphas, false, true)?;
        Ok(denormalize_rows(g.value(h.value.unwrap()), self.popart))
    }
}

#[cfg(test)]
mod tests;
