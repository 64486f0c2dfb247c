//! The critic-loss weight β_c and the step-discarding safeguards in
//! isolation.

use dmorl::algos::{check_discard, update_beta, DiscardAction, DiscardState};

fn main() {
    let mut beta = 1.0;
    for _ in 0..8000 {
        beta = update_beta(beta, 0.5, 2.0, 0.1, 0.001);
    }
    println!("beta_c after 8000 updates: {beta:.4} (fixed point 0.1 * 2.0 / 0.5 = 0.4)");

    let mut state = DiscardState::new();
    let mut h = 1.0;
    let mut counts = [0usize; 3];
    for it in 0..400 {
        // Small jitter, and a sharp entropy drop every 20 iterations.
        let jitter = 0.01 * ((it * 7919 % 13) as f64 / 13.0 - 0.5);
        let drop = if it % 20 == 19 { 0.5 } else { 0.0 };
        let action = check_discard(&mut state, h + jitter - drop, h, 1.0, 1.0, 0.3);
        counts[match action {
            DiscardAction::Accept => 0,
            DiscardAction::DiscardStep => 1,
            DiscardAction::ResetToCheckpoint => 2,
        }] += 1;
        if action == DiscardAction::Accept {
            h = (h + jitter - drop).max(0.5);
        }
    }
    println!("accepted {}, discarded {}, resets {}", counts[0], counts[1], counts[2]);
    println!("discards in the last 100 iterations: {}", state.discards_in_window());
}
