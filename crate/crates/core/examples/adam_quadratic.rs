//! Minimize a badly scaled quadratic with Adam and global-norm clipping.

use dmorl::ndgrad::{adam_step, clip_global_norm, AdamConfig, AdamState, Graph, Owner, ParamTree, Tensor};

fn main() -> dmorl::Result<()> {
    let mut p = ParamTree::new();
    p.insert("x", Tensor::vector(vec![5.0, -3.0]), Owner::Actor)?;
    let mut opt = AdamState::new(&p, AdamConfig::with_lr(0.05));
    // f(x) = 100 x₀² + x₁²
    let scale = Tensor::vector(vec![100.0, 1.0]);

    for step in 0..=400 {
        let grads = {
            let mut g = Graph::new(&p);
            let x = g.param("x")?;
            let sq = g.square(x)?;
            let s = g.input(scale.clone())?;
            let weighted = g.mul(sq, s)?;
            let f = g.sum(weighted)?;
            if step % 100 == 0 {
                println!("step {step:3}  f = {:.6}  x = {:?}", g.value(f).item(), g.value(x).data());
            }
            g.backward_scalar(f)?
        };
        p.accumulate(&grads, 1.0);
        clip_global_norm(&mut p, 10.0);
        adam_step(&mut p, &mut opt)?;
    }
    Ok(())
}
