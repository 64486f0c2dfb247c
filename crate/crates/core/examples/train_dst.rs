//! Train MOPPO on Deep Sea Treasure and compare the recovered front with the
//! exact one.
//!
//! ```text
//! cargo run --release --example train_dst -- [seed] [steps]
//! ```

use dmorl::algos::{Algo, EntropyConfig, Schedule, TrainConfig, Trainer};
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
    let entropy = EntropyConfig {
        schedule: Schedule::Custom,
        ..EntropyConfig::default()
    };
    let start = std::time::Instant::now();
    let out = Trainer::new(Algo::Moppo, &env, ArchConfig::new(ArchKind::MultiBody, true), cfg, seed)
        .entropy(entropy)
        .on_iteration(|row| {
            if row.iteration % 50 == 0 {
                println!(
                    "iter {:4}  steps {:6}  return {:8.3}  entropy {:.3}  lambda {:+.4}",
                    row.iteration, row.env_steps, row.mean_scalarized_return, row.entropy, row.lambda
                );
            }
        })
        .run()?;
    println!("trained in {:.1?}", start.elapsed());

    let model = Model {
        net: &out.net,
        params: &out.params,
        popart: &out.popart,
    };
    let protocol = EvalProtocol::default();
    let eval = evaluate_policy(&model, &env, &protocol)?;
    let reference = reference_point(&env, protocol.gamma)?;
    let truth = true_pareto_front(&env, protocol.gamma)?;
    let hv = eval.front().hypervolume(&reference)?;
    let best = hypervolume(&truth, &reference)?;
    println!("front: {} points", eval.front().len());
    for p in &eval.front().points {
        println!("  ({:7.3}, {:7.3})", p[0], p[1]);
    }
    println!("hypervolume {hv:.3} of {best:.3} ({:.1}%)", 100.0 * hv / best);
    println!("expected utility {:.3}", eval.expected_utility());
    println!("max utility loss {:.3}", eval.max_utility_loss(&truth)?);
    Ok(())
}
