//! Target-entropy schedules and the multiplier update that chases them.

use dmorl::algos::{entropy_target, EntropyController, Schedule};

fn main() {
    let (h_min, h_max) = (0.4, 6f64.ln());
    println!("    u   linear  cosine  custom");
    for i in 0..=10 {
        let u = i as f64 / 10.0;
        println!(
            "{u:5.1}  {:6.3}  {:6.3}  {:6.3}",
            entropy_target(Schedule::Linear, u, h_min, h_max),
            entropy_target(Schedule::Cosine, u, h_min, h_max),
            entropy_target(Schedule::Custom, u, h_min, h_max)
        );
    }

    // Entropy stuck above the target pushes λ down, eventually negative.
    let mut ctrl = EntropyController {
        lambda: 0.01,
        eta_tilde: 1e-2,
        damping: 0.01,
        schedule: Schedule::Linear,
        h_min,
        h_max,
        fixed_lambda: 0.01,
    };
    for step in 0..5 {
        let coef = ctrl.step(1.5, 1.0);
        println!("step {step}: entropy-gradient coefficient {coef:+.4}, lambda now {:+.4}", ctrl.lambda);
    }
}
