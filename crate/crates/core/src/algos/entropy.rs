use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    Linear,
    Cosine,
    Custom,
    /// Plain entropy bonus with a constant coefficient; no target.
    Fixed,
}

impl std::str::FromStr for Schedule {
    type Err = crate::Error;
    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "linear" => Ok(Self::Linear),
            "cosine" => Ok(Self::Cosine),
            "custom" => Ok(Self::Custom),
            "fixed" => Ok(Self::Fixed),
            _ => Err(crate::Error::Config(format!(
                "unknown entropy schedule `{s}` (expected linear, cosine, custom or fixed)"
            ))),
        }
    }
}

/// Target entropy at training progress `u` (clamped to [0, 1]). Every
/// schedule starts at `h_max` and ends at `h_min`; `Fixed` returns `h_max`.
pub fn entropy_target(schedule: Schedule, u: f64, h_min: f64, h_max: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    let span = h_max - h_min;
    match schedule {
        Schedule::Linear => h_max - span * u,
        Schedule::Cosine => span * (std::f64::consts::PI * u / 2.0).cos() + h_min,
        Schedule::Custom => span * (0.5 - (std::f64::consts::PI * (1.0 - u).powf(1.3)).cos() / 2.0) + h_min,
        Schedule::Fixed => h_max,
    }
}

/// MDMM state for holding policy entropy at a scheduled target.
#[derive(Clone, Debug, PartialEq)]
pub struct EntropyController {
    /// Lagrange multiplier; may go negative.
    pub lambda: f64,
    pub eta_tilde: f64,
    pub damping: f64,
    pub schedule: Schedule,
    pub h_min: f64,
    pub h_max: f64,
    /// Coefficient used by the `Fixed` schedule.
    pub fixed_lambda: f64,
}

impl EntropyController {
    pub fn target(&self, u: f64) -> f64 {
        entropy_target(self.schedule, u, self.h_min, self.h_max)
    }

    /// Coefficient multiplying ∇Ĥ for this step: `λ + c(H_target − Ĥ)`,
    /// then `λ ← λ + η̃(H_target − Ĥ)`. With the `Fixed` schedule the
    /// coefficient is `fixed_lambda` and λ does not move.
    pub fn step(&mut self, h_hat: f64, h_target: f64) -> f64 {
        if self.schedule == Schedule::Fixed {
            return self.fixed_lambda;
        }
        let gap = h_target - h_hat;
        let coef = self.lambda + self.damping * gap;
        self.lambda += self.eta_tilde * gap;
        coef
    }
}

/// `g = (λ + c(H_target − Ĥ))·∇Ĥ` and the updated λ, on explicit gradients.
pub fn entropy_step(
    ctrl: &mut EntropyController,
    h_hat: f64,
    h_target: f64,
    entropy_grads: &crate::ndgrad::Gradients,
) -> (crate::ndgrad::Gradients, f64) {
    let coef = ctrl.step(h_hat, h_target);
    let mut g = entropy_grads.clone();
    g.scale(coef);
    (g, ctrl.lambda)
}
