//! Drive the stochastic Minecart with uniformly random actions and report
//! the vector return.

use dmorl::envs::{make_env, EnvConfig};
use dmorl::momdp::{discounted_return, rollout, Policy, WeightVector};
use dmorl::ndgrad::Tensor;
use dmorl::rng;

struct Uniform(usize);

impl Policy for Uniform {
    fn action_probs(&self, states: &Tensor, _alphas: &Tensor) -> dmorl::Result<Tensor> {
        Ok(Tensor::full(&[states.rows(), self.0], 1.0 / self.0 as f64))
    }
}

fn main() -> dmorl::Result<()> {
    let mut env = make_env("minecart", &EnvConfig::default())?;
    let spec = env.spec();
    println!("{spec:?}");
    let alpha = WeightVector::uniform(spec.num_objectives);
    for seed in 0..3 {
        let traj = rollout(env.as_mut(), &Uniform(spec.num_actions), &alpha, spec.max_episode_steps, &mut rng::stream(seed, &[]))?;
        let ret = discounted_return(&traj.rewards(), 1.0);
        println!(
            "seed {seed}: {} steps, truncated {}, return (ore1 {:.3}, ore2 {:.3}, fuel {:.3})",
            traj.len(),
            traj.is_truncated(),
            ret[0],
            ret[1],
            ret[2]
        );
    }
    Ok(())
}
