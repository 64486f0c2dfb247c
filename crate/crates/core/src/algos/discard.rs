use std::collections::VecDeque;

/// Iterations during which no step is ever discarded.
pub const WARMUP: usize = 30;
/// Trailing window for the entropy-change statistics and the budget.
pub const WINDOW: usize = 100;
/// Discards allowed per trailing window (5%).
pub const BUDGET: usize = 5;
/// Consecutive near-zero iterations that trigger a reset.
pub const COLLAPSE_STEPS: usize = 200;
pub const NEAR_ZERO: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DiscardAction {
    Accept,
    DiscardStep,
    ResetToCheckpoint,
}

/// Bookkeeping for the step-discarding heuristics.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DiscardState {
    /// |ΔH| of accepted iterations, newest last.
    abs_changes: VecDeque<f64>,
    /// 1 for each discarded iteration in the trailing window.
    recent: VecDeque<bool>,
    near_zero_run: usize,
    iterations: usize,
}

impl DiscardState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn discards_in_window(&self) -> usize {
        self.recent.iter().filter(|d| **d).count()
    }

    pub fn budget_left(&self) -> bool {
        self.discards_in_window() < BUDGET
    }

    pub fn near_zero_run(&self) -> usize {
        self.near_zero_run
    }

    /// Records a discard decided outside [`check_discard`] (a non-finite
    /// update). Returns `false` when the budget is already spent.
    pub fn force_discard(&mut self) -> bool {
        if !self.budget_left() {
            return false;
        }
        self.push(true);
        true
    }

    /// Forget collapse statistics after a reset.
    pub fn after_reset(&mut self) {
        self.near_zero_run = 0;
    }

    fn push(&mut self, discarded: bool) {
        self.iterations += 1;
        self.recent.push_back(discarded);
        if self.recent.len() > WINDOW {
            self.recent.pop_front();
        }
    }
}

/// Decides what to do with the iteration just taken.
pub fn check_discard(
    state: &mut DiscardState,
    entropy_now: f64,
    entropy_prev: f64,
    mean_reward_now: f64,
    mean_reward_prev: f64,
    actor_grad_norm: f64,
) -> DiscardAction {
    if entropy_now.abs() < NEAR_ZERO || actor_grad_norm < NEAR_ZERO {
        state.near_zero_run += 1;
    } else {
        state.near_zero_run = 0;
    }
    if state.near_zero_run >= COLLAPSE_STEPS {
        state.push(false);
        return DiscardAction::ResetToCheckpoint;
    }

    let dh = entropy_now - entropy_prev;
    let n = state.abs_changes.len();
    let mut drop = false;
    if state.iterations >= WARMUP && n >= 2 && dh < 0.0 && mean_reward_now <= mean_reward_prev {
        let mean = state.abs_changes.iter().sum::<f64>() / n as f64;
        let var = state.abs_changes.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        drop = dh.abs() > mean + 3.0 * var.sqrt();
    }
    if drop && state.budget_left() {
        state.push(true);
        return DiscardAction::DiscardStep;
    }
    state.abs_changes.push_back(dh.abs());
    if state.abs_changes.len() > WINDOW {
        state.abs_changes.pop_front();
    }
    state.push(false);
    DiscardAction::Accept
}

#[cfg(test)]
mod tests {
    use super::*;

    fn warm(s: &mut DiscardState) {
        for i in 0..WARMUP + 10 {
            let wiggle = if i % 2 == 0 { 0.01 } else { -0.01 };
            check_discard(s, 1.0 + wiggle, 1.0, i as f64, i as f64 - 1.0, 1.0);
        }
    }

    #[test]
    fn steady_entropy_rising_reward_accepts() {
        let mut s = DiscardState::new();
        for i in 0..100 {
            assert_eq!(check_discard(&mut s, 1.0, 1.0, i as f64, i as f64 - 1.0, 0.3), DiscardAction::Accept);
        }
    }

    #[test]
    fn sharp_entropy_drop_with_flat_reward_discards() {
        let mut s = DiscardState::new();
        warm(&mut s);
        assert_eq!(check_discard(&mut s, 0.9, 1.0, 5.0, 5.0, 0.3), DiscardAction::DiscardStep);
        // The same drop with rising reward is fine.
        assert_eq!(check_discard(&mut s, 0.9, 1.0, 6.0, 5.0, 0.3), DiscardAction::Accept);
    }

    #[test]
    fn no_discards_during_warmup() {
        let mut s = DiscardState::new();
        for _ in 0..3 {
            check_discard(&mut s, 1.0, 1.0, 0.0, 0.0, 1.0);
        }
        assert_eq!(check_discard(&mut s, 0.0, 1.0, 0.0, 0.0, 1.0), DiscardAction::Accept);
    }

    #[test]
    fn collapse_resets() {
        let mut s = DiscardState::new();
        for i in 0..COLLAPSE_STEPS - 1 {
            assert_ne!(check_discard(&mut s, 0.0, 0.0, 1.0, 1.0, 0.5), DiscardAction::ResetToCheckpoint, "{i}");
        }
        assert_eq!(check_discard(&mut s, 0.0, 0.0, 1.0, 1.0, 0.5), DiscardAction::ResetToCheckpoint);
    }

    #[test]
    fn budget_caps_discards() {
        let mut s = DiscardState::new();
        warm(&mut s);
        let mut discarded = 0;
        for _ in 0..50 {
            if check_discard(&mut s, 0.5, 1.0, 0.0, 0.0, 1.0) == DiscardAction::DiscardStep {
                discarded += 1;
            }
        }
        assert_eq!(discarded, BUDGET);
    }

    proptest::proptest! {
        #[test]
        fn never_more_than_budget_per_window(
            seq in proptest::collection::vec((0.0f64..2.0, 0.0f64..2.0, -1.0f64..1.0), 50..400)
        ) {
            let mut s = DiscardState::new();
            let mut log = Vec::new();
            for (h, hp, dr) in seq {
                log.push(check_discard(&mut s, h, hp, dr, 0.0, 1.0) == DiscardAction::DiscardStep);
                let lo = log.len().saturating_sub(WINDOW);
                proptest::prop_assert!(log[lo..].iter().filter(|d| **d).count() <= BUDGET);
            }
        }
    }
}
