use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Tolerance on `Σα = 1` for constructed weight vectors.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// A point on the weight simplex Δ_K.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        Self::with_tolerance(alpha, SIMPLEX_TOL)
    }

    /// Accepts `alpha` if every entry is ≥ −tol and the sum is within `tol`
    /// of 1. Tiny negative entries are clamped to zero.
    pub fn with_tolerance(mut alpha: Vec<f64>, tol: f64) -> Result<Self> {
        if alpha.len() < 2 {
            return Err(Error::InvalidWeights(format!("need K >= 2, got {}", alpha.len())));
        }
        if alpha.iter().any(|a| !a.is_finite() || *a < -tol) {
            return Err(Error::InvalidWeights(format!("{alpha:?} has a negative or non-finite entry")));
        }
        let s: f64 = alpha.iter().sum();
        if (s - 1.0).abs() > tol {
            return Err(Error::InvalidWeights(format!("{alpha:?} sums to {s}")));
        }
        for a in &mut alpha {
            *a = a.max(0.0);
        }
        Ok(Self(alpha))
    }

    pub fn uniform(k: usize) -> Self {
        Self(vec![1.0 / k as f64; k])
    }

    /// The `i`-th vertex of the simplex.
    pub fn corner(k: usize, i: usize) -> Self {
        let mut a = vec![0.0; k];
        a[i] = 1.0;
        Self(a)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn k(&self) -> usize {
        self.0.len()
    }
}

impl std::ops::Index<usize> for WeightVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Uniform draw from Δ_K: the spacings of K−1 sorted uniforms on [0, 1].
pub fn sample_weight(k: usize, rng: &mut Rng) -> WeightVector {
    assert!(k >= 2, "sample_weight needs K >= 2");
    let mut cuts: Vec<f64> = (0..k - 1).map(|_| rng.gen::<f64>()).collect();
    cuts.sort_by(|a, b| a.total_cmp(b));
    let mut alpha = Vec::with_capacity(k);
    let mut prev = 0.0;
    for c in cuts {
        alpha.push(c - prev);
        prev = c;
    }
    alpha.push(1.0 - prev);
    WeightVector(alpha)
}

/// `αᵀv`.
pub fn scalarize(alpha: &WeightVector, v: &[f64]) -> Result<f64> {
    if v.len() != alpha.k() {
        return Err(Error::DimensionMismatch {
            expected: alpha.k(),
            got: v.len(),
        });
    }
    Ok(alpha.0.iter().zip(v).map(|(a, x)| a * x).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn scalarize_examples() {
        let w = |v: Vec<f64>| WeightVector::new(v).unwrap();
        assert_eq!(scalarize(&w(vec![0.5, 0.5]), &[2.0, -1.0]).unwrap(), 0.5);
        assert_eq!(scalarize(&w(vec![1.0, 0.0]), &[3.0, 7.0]).unwrap(), 3.0);
        assert!((scalarize(&w(vec![0.2, 0.3, 0.5]), &[1.0, 1.0, 1.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(
            scalarize(&w(vec![0.5, 0.5]), &[1.0]),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn rejects_off_simplex() {
        assert!(WeightVector::new(vec![0.5, 0.6]).is_err());
        assert!(WeightVector::new(vec![1.5, -0.5]).is_err());
        assert!(WeightVector::new(vec![1.0]).is_err());
    }

    #[test]
    fn k2_mean_is_half() {
        let mut r = rng::stream(11, &[]);
        let n = 100_000;
        let m: f64 = (0..n).map(|_| sample_weight(2, &mut r)[0]).sum::<f64>() / n as f64;
        assert!((m - 0.5).abs() < 0.01, "{m}");
    }

    /// P(α₁ > 1/2) under Dirichlet(1,1,1) is (1/2)² = 1/4. Cross-checked
    /// against rejection sampling from the unit square.
    #[test]
    fn k3_tail_probability() {
        let mut r = rng::stream(12, &[]);
        let n = 100_000;
        let hits = (0..n).filter(|_| sample_weight(3, &mut r)[0] > 0.5).count();
        let p = hits as f64 / n as f64;
        assert!((p - 0.25).abs() < 0.01, "{p}");

        let mut r = rng::stream(13, &[]);
        let (mut acc, mut hit) = (0, 0);
        while acc < n {
            let (x, y): (f64, f64) = (r.gen(), r.gen());
            if x + y <= 1.0 {
                acc += 1;
                if x > 0.5 {
                    hit += 1;
                }
            }
        }
        let q = hit as f64 / n as f64;
        assert!((p - q).abs() < 0.015, "{p} vs rejection {q}");
    }

    proptest::proptest! {
        #[test]
        fn samples_are_on_the_simplex(seed in 0u64..10_000, k in 2usize..7) {
            let mut r = rng::stream(seed, &[]);
            let w = sample_weight(k, &mut r);
            proptest::prop_assert!((w.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            proptest::prop_assert!(w.as_slice().iter().all(|&a| a >= 0.0));
            proptest::prop_assert!(WeightVector::new(w.as_slice().to_vec()).is_ok());
        }
    }
}
