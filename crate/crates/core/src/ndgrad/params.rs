use std::collections::HashMap;

use super::{NdError, Tensor};

/// Which part of an actor-critic model an entry belongs to.
///
/// `Shared` entries feed both heads (shared trunks). Weight decay and the
/// separate optimizers of non-shared training key off this tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Owner {
    Actor,
    Critic,
    Shared,
}

impl Owner {
    pub(crate) fn code(self) -> u8 {
        match self {
            Owner::Actor => 0,
            Owner::Critic => 1,
            Owner::Shared => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Owner::Actor),
            1 => Some(Owner::Critic),
            2 => Some(Owner::Shared),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamEntry {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    pub owner: Owner,
}

/// Named parameter arrays with their gradients, in insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamTree {
    entries: Vec<ParamEntry>,
    index: HashMap<String, usize>,
    step_count: u64,
}

impl ParamTree {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor, owner: Owner) -> Result<usize, NdError> {
        if self.index.contains_key(name) {
            return Err(NdError::DuplicateParameter(name.to_string()));
        }
        if !value.is_finite() {
            return Err(NdError::NonFinite(format!("parameter `{name}`")));
        }
        let idx = self.entries.len();
        let grad = Tensor::zeros(value.shape());
        self.entries.push(ParamEntry {
            name: name.to_string(),
            value,
            grad,
            owner,
        });
        self.index.insert(name.to_string(), idx);
        Ok(idx)
    }

    pub fn index_of(&self, name: &str) -> Result<usize, NdError> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| NdError::UnknownParameter(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Result<&ParamEntry, NdError> {
        Ok(&self.entries[self.index_of(name)?])
    }

    pub fn value(&self, name: &str) -> Result<&Tensor, NdError> {
        Ok(&self.get(name)?.value)
    }

    pub fn value_mut(&mut self, name: &str) -> Result<&mut Tensor, NdError> {
        let i = self.index_of(name)?;
        Ok(&mut self.entries[i].value)
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn entry(&self, idx: usize) -> &ParamEntry {
        &self.entries[idx]
    }

    pub fn entry_mut(&mut self, idx: usize) -> &mut ParamEntry {
        &mut self.entries[idx]
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_parameters(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub(crate) fn set_step_count(&mut self, n: u64) {
        self.step_count = n;
    }

    pub(crate) fn bump_step_count(&mut self) {
        self.step_count += 1;
    }

    pub fn zero_grads(&mut self) {
        for e in &mut self.entries {
            e.grad.fill(0.0);
        }
    }

    /// Adds `scale * grads` into the stored gradients.
    pub fn accumulate(&mut self, grads: &Gradients, scale: f64) {
        assert_eq!(grads.len(), self.entries.len(), "gradient set from another tree");
        for (e, g) in self.entries.iter_mut().zip(&grads.grads) {
            if let Some(g) = g {
                e.grad.add_scaled(g, scale);
            }
        }
    }

    /// Global L2 norm of the stored gradients.
    pub fn grad_norm(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.grad.norm_sq())
            .sum::<f64>()
            .sqrt()
    }

    /// Copies values (not gradients) from another tree with identical layout.
    pub fn copy_values_from(&mut self, other: &ParamTree) -> Result<(), NdError> {
        self.check_same_layout(other)?;
        for (a, b) in self.entries.iter_mut().zip(&other.entries) {
            a.value.data_mut().copy_from_slice(b.value.data());
        }
        Ok(())
    }

    pub fn check_same_layout(&self, other: &ParamTree) -> Result<(), NdError> {
        if self.entries.len() != other.entries.len() {
            return Err(NdError::LayoutMismatch(format!(
                "{} entries vs {}",
                self.entries.len(),
                other.entries.len()
            )));
        }
        for (a, b) in self.entries.iter().zip(&other.entries) {
            if a.name != b.name || a.value.shape() != b.value.shape() {
                return Err(NdError::LayoutMismatch(format!(
                    "`{}` {:?} vs `{}` {:?}",
                    a.name,
                    a.value.shape(),
                    b.name,
                    b.value.shape()
                )));
            }
        }
        Ok(())
    }
}

/// Gradients produced by one backward pass, indexed like the tree they came from.
///
/// Entries the graph never touched stay `None`.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn empty(num_entries: usize) -> Self {
        Self {
            grads: vec![None; num_entries],
        }
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn get(&self, idx: usize) -> Option<&Tensor> {
        self.grads[idx].as_ref()
    }

    pub fn by_name<'a>(&'a self, params: &ParamTree, name: &str) -> Option<&'a Tensor> {
        params.index_of(name).ok().and_then(|i| self.get(i))
    }

    /// Indices of entries that received a gradient.
    pub fn touched(&self) -> impl Iterator<Item = usize> + '_ {
        self.grads
            .iter()
            .enumerate()
            .filter_map(|(i, g)| g.as_ref().map(|_| i))
    }

    pub(crate) fn set_entry(&mut self, idx: usize, g: Tensor) {
        match &mut self.grads[idx] {
            Some(acc) => acc.add_scaled(&g, 1.0),
            slot @ None => *slot = Some(g),
        }
    }

    pub fn norm(&self) -> f64 {
        self.grads
            .iter()
            .flatten()
            .map(|g| g.norm_sq())
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.grads.iter().flatten().all(|g| g.is_finite())
    }

    pub fn scale(&mut self, s: f64) {
        for g in self.grads.iter_mut().flatten() {
            g.scale_in_place(s);
        }
    }

    /// `self += s * other`.
    pub fn add_scaled(&mut self, other: &Gradients, s: f64) {
        assert_eq!(self.grads.len(), other.grads.len());
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            if let Some(b) = b {
                match a {
                    Some(a) => a.add_scaled(b, s),
                    None => {
                        let mut t = b.clone();
                        t.scale_in_place(s);
                        *a = Some(t);
                    }
                }
            }
        }
    }

    /// Flattens all gradients into one vector, with zeros for untouched entries.
    pub fn flatten(&self, params: &ParamTree) -> Vec<f64> {
        let mut out = Vec::with_capacity(params.num_parameters());
        for (i, e) in params.entries().iter().enumerate() {
            match &self.grads[i] {
                Some(g) => out.extend_from_slice(g.data()),
                None => out.extend(std::iter::repeat(0.0).take(e.value.len())),
            }
        }
        out
    }
}

/// Rescales all stored gradients so their global L2 norm is at most
/// `max_norm`. Returns the norm before clipping.
pub fn clip_global_norm(params: &mut ParamTree, max_norm: f64) -> f64 {
    assert!(max_norm > 0.0, "max_norm must be positive");
    let norm = params.grad_norm();
    if norm > max_norm {
        let s = max_norm / norm;
        for e in &mut params.entries {
            e.grad.scale_in_place(s);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tree_with_grad(g: &[f64]) -> ParamTree {
        let mut t = ParamTree::new();
        t.insert("w", Tensor::vector(vec![0.0; g.len()]), Owner::Actor)
            .unwrap();
        t.entries[0].grad.data_mut().copy_from_slice(g);
        t
    }

    #[test]
    fn clip_below_threshold_is_noop() {
        let mut t = tree_with_grad(&[3.0, 4.0]);
        assert_eq!(clip_global_norm(&mut t, 10.0), 5.0);
        assert_eq!(t.entries()[0].grad.data(), &[3.0, 4.0]);
    }

    #[test]
    fn clip_scales_to_max_norm() {
        let mut t = tree_with_grad(&[3.0, 4.0]);
        assert_eq!(clip_global_norm(&mut t, 1.0), 5.0);
        let g = t.entries()[0].grad.data();
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn clip_zero_grads() {
        let mut t = tree_with_grad(&[0.0, 0.0]);
        assert_eq!(clip_global_norm(&mut t, 0.5), 0.0);
        assert_eq!(t.entries()[0].grad.data(), &[0.0, 0.0]);
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut t = ParamTree::new();
        t.insert("a", Tensor::scalar(1.0), Owner::Shared).unwrap();
        assert!(matches!(
            t.insert("a", Tensor::scalar(1.0), Owner::Shared),
            Err(NdError::DuplicateParameter(_))
        ));
    }

    proptest::proptest! {
        #[test]
        fn clip_never_increases_norm(
            g in proptest::collection::vec(-100.0f64..100.0, 1..20),
            max_norm in 1e-3f64..50.0,
        ) {
            let mut t = tree_with_grad(&g);
            let before = t.grad_norm();
            clip_global_norm(&mut t, max_norm);
            let after = t.grad_norm();
            proptest::prop_assert!(after <= before + 1e-12);
            proptest::prop_assert!(after <= max_norm + 1e-12);
        }
    }
}
