//! Build each actor-critic architecture with and without a shared trunk and
//! run one batch through it.

use dmorl::envs::{make_env, EnvConfig};
use dmorl::momdp::{sample_weight, PopArtStats};
use dmorl::ndgrad::Tensor;
use dmorl::nets::{ArchConfig, ArchKind, Network};
use dmorl::rng;

fn main() -> dmorl::Result<()> {
    let env = make_env("minecart", &EnvConfig::default())?;
    let spec = env.spec();
    let mut r = rng::stream(1, &[]);
    let mut states = Vec::new();
    let mut alphas = Vec::new();
    for _ in 0..4 {
        let mut e = env.boxed_clone();
        states.push(e.reset(&mut r));
        alphas.push(sample_weight(spec.num_objectives, &mut r).as_slice().to_vec());
    }
    let (states, alphas) = (Tensor::from_rows(&states)?, Tensor::from_rows(&alphas)?);

    for kind in ArchKind::ALL {
        for shared in [true, false] {
            let arch = ArchConfig::new(kind, shared);
            let (net, params) = Network::build(arch, spec, &mut rng::stream(0, &[rng::tag::INIT]))?;
            let out = net.evaluate(&params, &PopArtStats::identity(spec.num_objectives), &states, &alphas)?;
            println!(
                "{:13} shared={:5} params {:7}  probs[0] {:?}",
                kind.name(),
                shared,
                params.num_parameters(),
                out.action_probs.row(0).iter().map(|p| format!("{p:.3}")).collect::<Vec<_>>()
            );
        }
    }
    Ok(())
}
