//! MOA2C with separate actor and critic trunks on Deep Sea Treasure.
//!
//! ```text
//! cargo run --release --example train_moa2c -- [seed] [steps]
//! ```

use dmorl::algos::{train_moa2c, TrainConfig};
use dmorl::envs::{Dst, DstMap};
use dmorl::metrics::{evaluate_policy, hypervolume, reference_point, true_pareto_front, EvalProtocol};
use dmorl::nets::{ArchConfig, ArchKind, Model};

fn main() -> dmorl::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let steps: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(100_000);

    let env = Dst::new(DstMap::default())?;
    let cfg = TrainConfig {
        total_steps: steps,
        ..TrainConfig::default()
    };
    let out = train_moa2c(&cfg, &env, &ArchConfig::new(ArchKind::Merge, false), seed)?;
    let last = out.log.rows.last().expect("at least one iteration");
    println!("{} iterations, final entropy {:.3}, return {:.3}", out.log.len(), last.entropy, last.mean_scalarized_return);

    let model = Model {
        net: &out.net,
        params: &out.params,
        popart: &out.popart,
    };
    let protocol = EvalProtocol::default();
    let eval = evaluate_policy(&model, &env, &protocol)?;
    let reference = reference_point(&env, protocol.gamma)?;
    let best = hypervolume(&true_pareto_front(&env, protocol.gamma)?, &reference)?;
    println!("hypervolume {:.1}% of the exact front", 100.0 * eval.front().hypervolume(&reference)? / best);
    Ok(())
}
