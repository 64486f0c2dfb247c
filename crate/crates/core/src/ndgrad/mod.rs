//! Minimal reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! The pieces:
//!
//! - [`Tensor`]: row-major data plus shape.
//! - [`ParamTree`]: named parameters with gradients, tagged by [`Owner`].
//! - [`Graph`]: an eagerly evaluated tape; `backward` returns [`Gradients`].
//! - [`AdamState`] / [`adam_step`] and [`clip_global_norm`].
//! - [`Checkpoint`]: a versioned, bit-exact binary container.
//!
//! ```
//! use dmorl::ndgrad::{Graph, Owner, ParamTree, Tensor};
//!
//! let mut params = ParamTree::new();
//! params.insert("x", Tensor::scalar(3.0), Owner::Actor).unwrap();
//! let mut g = Graph::new(&params);
//! let x = g.param("x").unwrap();
//! let y = g.square(x).unwrap();
//! let grads = g.backward_scalar(y).unwrap();
//! assert_eq!(grads.get(0).unwrap().item(), 6.0);
//! ```

mod checkpoint;
mod graph;
mod optim;
mod params;
mod tensor;

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use graph::{Graph, Var};
pub use optim::{adam_step, AdamConfig, AdamState};
pub use params::{clip_global_norm, Gradients, Owner, ParamEntry, ParamTree};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NdError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("invalid shape {shape:?}: {reason}")]
    InvalidShape { shape: Vec<usize>, reason: String },
    #[error("non-finite value produced by {0}")]
    NonFinite(String),
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
    #[error("duplicate parameter `{0}`")]
    DuplicateParameter(String),
    #[error("node {0} is not on this graph (backward before forward?)")]
    UnknownNode(usize),
    #[error("parameter layout mismatch: {0}")]
    LayoutMismatch(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// Central finite-difference gradient of `f` with respect to every scalar
/// in `params`, using step `h`. Test oracle; `f` is evaluated `2 * n` times.
pub fn finite_difference(
    params: &ParamTree,
    h: f64,
    mut f: impl FnMut(&ParamTree) -> f64,
) -> Vec<f64> {
    let mut work = params.clone();
    let mut out = Vec::with_capacity(params.num_parameters());
    for e in 0..work.len() {
        for j in 0..work.entry(e).value.len() {
            let orig = work.entry(e).value.data()[j];
            work.entry_mut(e).value.data_mut()[j] = orig + h;
            let up = f(&work);
            work.entry_mut(e).value.data_mut()[j] = orig - h;
            let down = f(&work);
            work.entry_mut(e).value.data_mut()[j] = orig;
            out.push((up - down) / (2.0 * h));
        }
    }
    out
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, or the absolute difference norm when both
/// vectors are below `floor`.
pub fn relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(floor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tree(rng: &mut ChaCha8Rng, shapes: &[(&str, Vec<usize>)]) -> ParamTree {
        let mut p = ParamTree::new();
        for (name, shape) in shapes {
            let n = shape.iter().product();
            let data = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            p.insert(name, Tensor::new(shape.clone(), data).unwrap(), Owner::Shared)
                .unwrap();
        }
        p
    }

    /// Every op composed into one scalar: matmul, linear, bias, relu,
    /// sigmoid, softmax, log-softmax, mul, weighted-sum, log, square, mean,
    /// row-dot, concat, clamp, minimum, exp, gather and per-sample linear.
    fn composite<'a>(p: &'a ParamTree, x: &Tensor, w: &Tensor) -> Result<(Var, Graph<'a>), NdError> {
        let mut g = Graph::new(p);
        let x = g.input(x.clone())?;
        let wts = g.input(w.clone())?;
        let a = g.param("a")?;
        let b = g.param("b")?;
        let m = g.param("m")?;
        let gen = g.param("gen")?;
        let h1 = g.affine(x, a, b)?;
        let r = g.relu(h1)?;
        let s = g.sigmoid(h1)?;
        let ws = g.weighted_sum(wts, &[r, s])?;
        let mm = g.matmul(ws, m)?;
        let prod = g.mul(mm, mm)?;
        let sm = g.softmax(prod)?;
        let lg = g.log(sm)?;
        let ls = g.log_softmax(mm)?;
        let both = g.add(lg, ls)?;
        let cat = g.concat(both, x)?;
        let e = g.exp(mm)?;
        let cl = g.clamp(e, 0.5, 1.5)?;
        let mn = g.minimum(e, cl)?;
        let d = g.row_dot(mn, mm)?;
        let psl = g.per_sample_linear(cat, gen, 1)?;
        let ga = g.gather(psl, &vec![0; psl_rows(&g, psl)])?;
        let sq = g.square(ga)?;
        let diff = g.sub(sq, d)?;
        let sc = g.scale(diff, 0.3)?;
        let mean = g.mean(sc)?;
        let sr = g.sum_rows(cat)?;
        let s2 = g.sum(sr)?;
        let s3 = g.scale(s2, 0.01)?;
        let out = g.add(mean, s3)?;
        Ok((out, g))
    }

    fn psl_rows(g: &Graph<'_>, v: Var) -> usize {
        g.value(v).rows()
    }

    #[test]
    fn composite_graph_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let n = 3;
            let (din, hid, out) = (4, 5, 3);
            let cat_w = out + din;
            let p = random_tree(
                &mut rng,
                &[
                    ("a", vec![hid, din]),
                    ("b", vec![hid]),
                    ("m", vec![hid, out]),
                    ("gen", vec![n, cat_w + 1]),
                ],
            );
            let x = Tensor::matrix(n, din, (0..n * din).map(|_| rng.gen_range(-2.0..2.0)).collect());
            let w = Tensor::matrix(n, 2, (0..n * 2).map(|_| rng.gen_range(0.0..1.0)).collect());
            let (out_var, g) = composite(&p, &x, &w).unwrap();
            let analytic = g.backward_scalar(out_var).unwrap().flatten(&p);
            let numeric = finite_difference(&p, 1e-5, |q| {
                let (o, g) = composite(q, &x, &w).unwrap();
                g.value(o).item()
            });
            let err = relative_error(&analytic, &numeric, 1e-8);
            assert!(err < 1e-4, "relative error {err}");
        }
    }

    proptest::proptest! {
        #[test]
        fn softmax_is_a_distribution(v in proptest::collection::vec(-50.0f64..50.0, 1..12)) {
            let p = ParamTree::new();
            let mut g = Graph::new(&p);
            let x = g.input(Tensor::vector(v)).unwrap();
            let s = g.softmax(x).unwrap();
            let d = g.value(s).data();
            proptest::prop_assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            proptest::prop_assert!(d.iter().all(|&q| q > 0.0));
        }
    }
}
