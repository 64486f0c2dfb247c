use super::{NdError, Owner, ParamEntry, ParamTree, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled weight decay, applied to critic-owned entries only.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

/// Adam moments for a subset of a [`ParamTree`]'s entries.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub(crate) t: u64,
    pub(crate) entries: Vec<usize>,
    pub(crate) m: Vec<Tensor>,
    pub(crate) v: Vec<Tensor>,
}

impl AdamState {
    /// Optimizer over every entry of `params`.
    pub fn new(params: &ParamTree, config: AdamConfig) -> Self {
        Self::for_entries(params, config, |_| true)
    }

    /// Optimizer over the entries selected by `filter`.
    pub fn for_entries(params: &ParamTree, config: AdamConfig, filter: impl Fn(&ParamEntry) -> bool) -> Self {
        assert!(config.beta1 > 0.0 && config.beta1 < 1.0, "beta1 must lie in (0,1)");
        assert!(config.beta2 > 0.0 && config.beta2 < 1.0, "beta2 must lie in (0,1)");
        let entries: Vec<usize> = params
            .entries()
            .iter()
            .enumerate()
            .filter(|(_, e)| filter(e))
            .map(|(i, _)| i)
            .collect();
        let m = entries
            .iter()
            .map(|&i| Tensor::zeros(params.entry(i).value.shape()))
            .collect::<Vec<_>>();
        let v = m.clone();
        Self {
            config,
            t: 0,
            entries,
            m,
            v,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn entry_indices(&self) -> &[usize] {
        &self.entries
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }
}

/// One bias-corrected Adam update of the entries owned by `state`.
///
/// On success all gradients in the tree are zeroed and the tree's step count
/// advances. A non-finite gradient rejects the whole step and leaves values,
/// gradients and moments untouched.
pub fn adam_step(params: &mut ParamTree, state: &mut AdamState) -> Result<(), NdError> {
    for &i in &state.entries {
        if !params.entry(i).grad.is_finite() {
            return Err(NdError::NonFinite(format!(
                "gradient of `{}`",
                params.entry(i).name
            )));
        }
    }
    let c = state.config;
    state.t += 1;
    let bc1 = 1.0 - c.beta1.powi(state.t as i32);
    let bc2 = 1.0 - c.beta2.powi(state.t as i32);
    for (slot, &i) in state.entries.iter().enumerate() {
        let entry = params.entry_mut(i);
        let decay = if entry.owner == Owner::Critic {
            c.lr * c.weight_decay
        } else {
            0.0
        };
        let m = state.m[slot].data_mut();
        let v = state.v[slot].data_mut();
        let g = entry.grad.data();
        let p = entry.value.data_mut();
        for j in 0..p.len() {
            m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g[j];
            v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g[j] * g[j];
            let mh = m[j] / bc1;
            let vh = v[j] / bc2;
            p[j] -= decay * p[j] + c.lr * mh / (vh.sqrt() + c.eps);
        }
    }
    params.zero_grads();
    params.bump_step_count();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tree(value: f64, grad: f64, owner: Owner) -> ParamTree {
        let mut t = ParamTree::new();
        t.insert("w", Tensor::scalar(value), owner).unwrap();
        t.entry_mut(0).grad.data_mut()[0] = grad;
        t
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = tree(1.0, 1.0, Owner::Actor);
        let mut s = AdamState::new(&p, AdamConfig::with_lr(0.1));
        adam_step(&mut p, &mut s).unwrap();
        // m̂ = 1, v̂ = 1, so the step is 0.1 / (1 + 1e-8).
        let expected = 1.0 - 0.1 / (1.0 + 1e-8);
        assert!((p.entry(0).value.item() - expected).abs() < 1e-15);
        assert_eq!(p.entry(0).grad.item(), 0.0);
        assert_eq!(p.step_count(), 1);
    }

    #[test]
    fn zero_grad_leaves_parameter() {
        let mut p = tree(2.5, 0.0, Owner::Actor);
        let mut s = AdamState::new(&p, AdamConfig::with_lr(0.1));
        adam_step(&mut p, &mut s).unwrap();
        assert_eq!(p.entry(0).value.item(), 2.5);
    }

    #[test]
    fn identical_inputs_give_identical_updates() {
        let mut a = tree(0.3, -0.7, Owner::Shared);
        let mut b = a.clone();
        let mut sa = AdamState::new(&a, AdamConfig::with_lr(0.01));
        let mut sb = sa.clone();
        for _ in 0..5 {
            a.entry_mut(0).grad.data_mut()[0] = 0.2;
            b.entry_mut(0).grad.data_mut()[0] = 0.2;
            adam_step(&mut a, &mut sa).unwrap();
            adam_step(&mut b, &mut sb).unwrap();
        }
        assert_eq!(a.entry(0).value.item().to_bits(), b.entry(0).value.item().to_bits());
    }

    #[test]
    fn non_finite_grad_rejects_step() {
        let mut p = tree(1.0, f64::INFINITY, Owner::Actor);
        let mut s = AdamState::new(&p, AdamConfig::with_lr(0.1));
        assert!(adam_step(&mut p, &mut s).is_err());
        assert_eq!(p.entry(0).value.item(), 1.0);
        assert_eq!(s.steps(), 0);
    }

    #[test]
    fn weight_decay_only_on_critic_entries() {
        let cfg = AdamConfig {
            lr: 0.1,
            weight_decay: 0.01,
            ..AdamConfig::default()
        };
        let mut actor = tree(1.0, 0.0, Owner::Actor);
        let mut critic = tree(1.0, 0.0, Owner::Critic);
        let mut sa = AdamState::new(&actor, cfg);
        let mut sc = AdamState::new(&critic, cfg);
        adam_step(&mut actor, &mut sa).unwrap();
        adam_step(&mut critic, &mut sc).unwrap();
        assert_eq!(actor.entry(0).value.item(), 1.0);
        assert!((critic.entry(0).value.item() - 0.999).abs() < 1e-15);
    }

    #[test]
    fn subset_optimizer_skips_other_entries() {
        let mut p = ParamTree::new();
        p.insert("a", Tensor::scalar(1.0), Owner::Actor).unwrap();
        p.insert("c", Tensor::scalar(1.0), Owner::Critic).unwrap();
        p.entry_mut(0).grad.data_mut()[0] = 1.0;
        p.entry_mut(1).grad.data_mut()[0] = 1.0;
        let mut s = AdamState::for_entries(&p, AdamConfig::with_lr(0.1), |e| e.owner == Owner::Actor);
        adam_step(&mut p, &mut s).unwrap();
        assert!(p.entry(0).value.item() < 1.0);
        assert_eq!(p.entry(1).value.item(), 1.0);
    }
}
