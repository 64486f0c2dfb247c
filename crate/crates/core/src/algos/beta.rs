/// Actor gradients smaller than this leave β_c untouched.
pub const MIN_ACTOR_NORM: f64 = 1e-12;

/// Moving average of the critic loss coefficient for a shared trunk:
/// `β_c ← δ·C·‖g_c‖/‖g_a‖ + (1 − δ)·β_c`.
pub fn update_beta(beta_c: f64, grad_actor_norm: f64, grad_critic_norm: f64, ratio: f64, delta: f64) -> f64 {
    if !(grad_actor_norm >= MIN_ACTOR_NORM) || !grad_critic_norm.is_finite() || !grad_actor_norm.is_finite() {
        return beta_c;
    }
    delta * ratio * grad_critic_norm / grad_actor_norm + (1.0 - delta) * beta_c
}
