use crate::error::{Error, Result};
use crate::ndgrad::Tensor;

pub const SIGMA_MIN: f64 = 1e-4;

/// Per-objective running statistics of value targets.
///
/// The critic head predicts normalized values `n`; the unnormalized
/// prediction is `σ ⊙ n + μ`.
#[derive(Clone, Debug, PartialEq)]
pub struct PopArtStats {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_size: f64,
    /// Updates applied so far.
    pub updates: u64,
}

impl PopArtStats {
    pub fn new(k: usize, step_size: f64) -> Self {
        assert!((0.0..=1.0).contains(&step_size), "PopArt step size must lie in [0, 1]");
        Self {
            mu: vec![0.0; k],
            sigma: vec![1.0; k],
            second_moment: vec![1.0; k],
            step_size,
            updates: 0,
        }
    }

    /// Statistics that never move: μ = 0, σ = 1. Used when PopArt is off.
    pub fn identity(k: usize) -> Self {
        Self::new(k, 0.0)
    }

    pub fn k(&self) -> usize {
        self.mu.len()
    }

    pub fn normalize(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(self.mu.iter().zip(&self.sigma))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }

    pub fn denormalize(&self, n: &[f64]) -> Vec<f64> {
        n.iter()
            .zip(self.mu.iter().zip(&self.sigma))
            .map(|(x, (m, s))| s * x + m)
            .collect()
    }

    /// Packs (μ, σ, ν, step, updates) into one tensor for checkpoints.
    pub fn to_tensor(&self) -> Tensor {
        let mut d = self.mu.clone();
        d.extend(&self.sigma);
        d.extend(&self.second_moment);
        d.push(self.step_size);
        d.push(self.updates as f64);
        Tensor::vector(d)
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let d = t.data();
        if d.len() < 5 || (d.len() - 2) % 3 != 0 {
            return Err(Error::Config(format!("bad PopArt record of length {}", d.len())));
        }
        let k = (d.len() - 2) / 3;
        Ok(Self {
            mu: d[..k].to_vec(),
            sigma: d[k..2 * k].to_vec(),
            second_moment: d[2 * k..3 * k].to_vec(),
            step_size: d[3 * k],
            updates: d[3 * k + 1] as u64,
        })
    }
}

/// Whatever produces the normalized critic output. `preserve` must change
/// the head so that `σ_new ⊙ head'(x) + μ_new = σ_old ⊙ head(x) + μ_old`
/// for every input `x`.
pub trait CriticHead {
    fn preserve(&mut self, old_mu: &[f64], old_sigma: &[f64], new_mu: &[f64], new_sigma: &[f64]) -> Result<()>;
}

/// A plain final linear layer: `weight: [K, F]`, `bias: [K]`.
pub struct LinearCriticHead<'a> {
    pub weight: &'a mut Tensor,
    pub bias: &'a mut Tensor,
}

impl CriticHead for LinearCriticHead<'_> {
    fn preserve(&mut self, old_mu: &[f64], old_sigma: &[f64], new_mu: &[f64], new_sigma: &[f64]) -> Result<()> {
        let k = self.bias.len();
        if self.weight.rows() != k || old_mu.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: old_mu.len(),
            });
        }
        for i in 0..k {
            let s = old_sigma[i] / new_sigma[i];
            for w in self.weight.row_mut(i) {
                *w *= s;
            }
            let b = &mut self.bias.data_mut()[i];
            *b = (old_sigma[i] * *b + old_mu[i] - new_mu[i]) / new_sigma[i];
        }
        Ok(())
    }
}

/// One PopArt step on a batch of vector targets: EMA of the first and
/// second moments, then the ART rescale of the head.
///
/// The `n`-th update uses the rate `max(step_size, 1/n)`, so the statistics
/// are a plain running mean of the batch moments until that mean has seen
/// `1/step_size` batches. The initial μ = 0, σ = 1 is thereby forgotten
/// after the first batch.
pub fn popart_update(stats: &mut PopArtStats, head: &mut dyn CriticHead, targets: &[Vec<f64>]) -> Result<()> {
    assert!(!targets.is_empty(), "popart_update needs targets");
    let k = stats.k();
    let n = targets.len() as f64;
    let mut mean = vec![0.0; k];
    let mut sq = vec![0.0; k];
    for t in targets {
        if t.len() != k {
            return Err(Error::DimensionMismatch { expected: k, got: t.len() });
        }
        for i in 0..k {
            mean[i] += t[i] / n;
            sq[i] += t[i] * t[i] / n;
        }
    }
    if stats.step_size == 0.0 {
        return Ok(());
    }
    stats.updates += 1;
    let beta = stats.step_size.max(1.0 / stats.updates as f64);
    let old_mu = stats.mu.clone();
    let old_sigma = stats.sigma.clone();
    for i in 0..k {
        stats.mu[i] = (1.0 - beta) * stats.mu[i] + beta * mean[i];
        stats.second_moment[i] = (1.0 - beta) * stats.second_moment[i] + beta * sq[i];
        let var = stats.second_moment[i] - stats.mu[i] * stats.mu[i];
        stats.sigma[i] = var.max(SIGMA_MIN * SIGMA_MIN).sqrt();
    }
    head.preserve(&old_mu, &old_sigma, &stats.mu, &stats.sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng as _;

    fn predict(w: &Tensor, b: &Tensor, s: &PopArtStats, x: &[f64]) -> Vec<f64> {
        let n: Vec<f64> = (0..b.len())
            .map(|i| w.row(i).iter().zip(x).map(|(a, c)| a * c).sum::<f64>() + b.data()[i])
            .collect();
        s.denormalize(&n)
    }

    #[test]
    fn art_preserves_predictions() {
        let mut r = rng::stream(3, &[]);
        let mut w = Tensor::matrix(2, 3, (0..6).map(|_| r.gen_range(-1.0..1.0)).collect());
        let mut b = Tensor::vector(vec![0.3, -0.2]);
        let mut s = PopArtStats::new(2, 0.3);
        for _ in 0..50 {
            let x: Vec<f64> = (0..3).map(|_| r.gen_range(-2.0..2.0)).collect();
            let before = predict(&w, &b, &s, &x);
            let targets: Vec<Vec<f64>> = (0..4).map(|_| vec![r.gen_range(-50.0..50.0), r.gen_range(-5.0..0.0)]).collect();
            popart_update(&mut s, &mut LinearCriticHead { weight: &mut w, bias: &mut b }, &targets).unwrap();
            let after = predict(&w, &b, &s, &x);
            for (p, q) in before.iter().zip(&after) {
                assert!((p - q).abs() < 1e-8, "{p} vs {q}");
            }
        }
    }

    #[test]
    fn constant_targets_converge() {
        let mut w = Tensor::matrix(2, 1, vec![1.0, 1.0]);
        let mut b = Tensor::vector(vec![0.0, 0.0]);
        let mut s = PopArtStats::new(2, 0.5);
        for _ in 0..200 {
            popart_update(&mut s, &mut LinearCriticHead { weight: &mut w, bias: &mut b }, &[vec![5.0, -3.0]]).unwrap();
        }
        assert!((s.mu[0] - 5.0).abs() < 1e-9 && (s.mu[1] + 3.0).abs() < 1e-9);
        assert_eq!(s.sigma, vec![SIGMA_MIN, SIGMA_MIN]);
    }

    #[test]
    fn first_update_adopts_batch_statistics() {
        let mut w = Tensor::matrix(1, 1, vec![1.0]);
        let mut b = Tensor::vector(vec![0.0]);
        let mut s = PopArtStats::new(1, 0.001);
        let targets = [vec![10.0], vec![20.0]];
        popart_update(&mut s, &mut LinearCriticHead { weight: &mut w, bias: &mut b }, &targets).unwrap();
        assert!((s.mu[0] - 15.0).abs() < 1e-12);
        assert!((s.sigma[0] - 5.0).abs() < 1e-12);
        // Second update averages the two batches equally.
        popart_update(&mut s, &mut LinearCriticHead { weight: &mut w, bias: &mut b }, &[vec![25.0]]).unwrap();
        assert!((s.mu[0] - 20.0).abs() < 1e-12);
    }

    #[test]
    fn zero_step_size_is_a_no_op() {
        let mut w = Tensor::matrix(2, 1, vec![1.0, 2.0]);
        let mut b = Tensor::vector(vec![0.5, 0.0]);
        let mut s = PopArtStats::new(2, 0.0);
        let before = (s.clone(), w.clone(), b.clone());
        popart_update(&mut s, &mut LinearCriticHead { weight: &mut w, bias: &mut b }, &[vec![100.0, 7.0]]).unwrap();
        assert_eq!((s, w, b), before);
    }

    #[test]
    fn tensor_round_trip() {
        let mut s = PopArtStats::new(3, 0.001);
        s.mu = vec![1.0, 2.0, 3.0];
        s.updates = 17;
        assert_eq!(PopArtStats::from_tensor(&s.to_tensor()).unwrap(), s);
    }
}
