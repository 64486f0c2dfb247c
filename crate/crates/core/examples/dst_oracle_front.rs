//! The exact Pareto front of Deep Sea Treasure, and the oracle policy that
//! attains it when evaluated on the weight grid.

use dmorl::envs::{Dst, DstMap};
use dmorl::metrics::{evaluate_policy, hypervolume, reference_point, true_pareto_front, DstOraclePolicy, EvalProtocol};

fn main() -> dmorl::Result<()> {
    let map = DstMap::default();
    let env = Dst::new(map.clone())?;
    let gamma = 0.99;

    let front = true_pareto_front(&env, gamma)?;
    let reference = reference_point(&env, gamma)?;
    println!("reference point {reference:?}");
    for (p, d) in front.iter().zip(map.treasure_distances()) {
        println!("  treasure {:7.3} after {:2} steps -> fuel {:8.3}", p[0], d.unwrap_or(0), p[1]);
    }
    println!("oracle hypervolume {:.4}", hypervolume(&front, &reference)?);

    let oracle = DstOraclePolicy::new(&map, gamma);
    let protocol = EvalProtocol {
        episodes: 1,
        ..EvalProtocol::default()
    };
    let eval = evaluate_policy(&oracle, &env, &protocol)?;
    println!(
        "oracle policy: {} front points, hypervolume {:.4}, max utility loss {:.2e}",
        eval.front().len(),
        eval.front().hypervolume(&reference)?,
        eval.max_utility_loss(&front)?
    );
    Ok(())
}
