//! Save parameters and optimizer state to a checkpoint file and read them
//! back bit for bit.

use dmorl::ndgrad::{AdamConfig, AdamState, Checkpoint, Owner, ParamTree, Tensor};

fn main() -> dmorl::Result<()> {
    let mut params = ParamTree::new();
    params.insert("actor.w", Tensor::matrix(2, 2, vec![0.1, -0.2, 1.0 / 3.0, 1e-300]), Owner::Actor)?;
    params.insert("critic.b", Tensor::vector(vec![f64::MIN_POSITIVE, -0.0]), Owner::Critic)?;

    let mut ck = Checkpoint::new(params.clone());
    ck.optimizers.push(("joint".into(), AdamState::new(&params, AdamConfig::with_lr(3e-4))));
    ck.aux.push(("note".into(), Tensor::scalar(42.0)));

    let dir = tempfile::tempdir().map_err(|e| dmorl::Error::Unsupported(e.to_string()))?;
    let path = dir.path().join("model.ckpt");
    ck.save(&path)?;
    let back = Checkpoint::load(&path)?;

    println!("{} bytes on disk", std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0));
    println!("identical after reload: {}", back == ck);
    println!("aux note = {}", back.aux("note").map_or(f64::NAN, |t| t.item()));
    Ok(())
}
