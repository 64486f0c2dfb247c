//! Collect a lockstep batch on Deep Sea Treasure with an untrained network,
//! then compute reward-to-go targets and scalarized advantages.

use dmorl::envs::{Dst, DstMap, Environment};
use dmorl::momdp::{batch_advantages, batch_reward_to_go, Collector, PopArtStats};
use dmorl::nets::{ArchConfig, Model, Network};
use dmorl::rng;

fn main() -> dmorl::Result<()> {
    let env = Dst::new(DstMap::default())?;
    let (net, params) = Network::build(ArchConfig::default(), env.spec(), &mut rng::stream(0, &[rng::tag::INIT]))?;
    let popart = PopArtStats::identity(2);
    let model = Model {
        net: &net,
        params: &params,
        popart: &popart,
    };

    let mut collector = Collector::new(&env, 8, 7).with_gamma(0.99);
    for iteration in 0..3 {
        let batch = collector.collect(&model, 32, iteration)?;
        let q = batch_reward_to_go(&batch, 0.99, &model)?;
        let (_, adv) = batch_advantages(&batch, &q, &model, &popart.sigma)?;
        let mean_adv = adv.iter().sum::<f64>() / adv.len() as f64;
        println!(
            "iteration {iteration}: {} transitions, {} finished episodes, mean entropy {:.3}, mean advantage {mean_adv:+.3}",
            batch.num_steps(),
            batch.episodes.len(),
            batch.mean_entropy
        );
        let first = &batch.trajectories[0];
        println!("  slot 0: alpha {:?}, segment starts at step {}", first.alpha.as_slice(), first.start_step);
    }
    Ok(())
}
