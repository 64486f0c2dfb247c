//! Build a small two-layer network on the tape, take its gradient and check
//! it against central finite differences.

use dmorl::ndgrad::{finite_difference, relative_error, Graph, Owner, ParamTree, Tensor};

fn loss(params: &ParamTree, x: &Tensor, y: &Tensor) -> dmorl::Result<(f64, Vec<f64>)> {
    let mut g = Graph::new(params);
    let x = g.input(x.clone())?;
    let (w1, b1) = (g.param("w1")?, g.param("b1")?);
    let (w2, b2) = (g.param("w2")?, g.param("b2")?);
    let h = g.affine(x, w1, b1)?;
    let h = g.sigmoid(h)?;
    let out = g.affine(h, w2, b2)?;
    let target = g.input(y.clone())?;
    let err = g.sub(out, target)?;
    let sq = g.square(err)?;
    let l = g.mean(sq)?;
    let value = g.value(l).item();
    let grads = g.backward_scalar(l)?;
    Ok((value, grads.flatten(params)))
}

fn main() -> dmorl::Result<()> {
    let mut p = ParamTree::new();
    p.insert("w1", Tensor::matrix(4, 3, (0..12).map(|i| (i as f64 * 0.37).sin()).collect()), Owner::Shared)?;
    p.insert("b1", Tensor::vector(vec![0.1, -0.2, 0.05, 0.0]), Owner::Shared)?;
    p.insert("w2", Tensor::matrix(2, 4, (0..8).map(|i| (i as f64 * 0.91).cos()).collect()), Owner::Actor)?;
    p.insert("b2", Tensor::vector(vec![0.0, 0.3]), Owner::Actor)?;

    let x = Tensor::matrix(5, 3, (0..15).map(|i| i as f64 / 7.0 - 1.0).collect());
    let y = Tensor::matrix(5, 2, (0..10).map(|i| (i % 3) as f64).collect());

    let (value, analytic) = loss(&p, &x, &y)?;
    let numeric = finite_difference(&p, 1e-6, |q| loss(q, &x, &y).unwrap().0);
    println!("loss {value:.6}, {} parameters", p.num_parameters());
    println!("relative error vs finite differences: {:.2e}", relative_error(&analytic, &numeric, 1e-12));
    Ok(())
}
