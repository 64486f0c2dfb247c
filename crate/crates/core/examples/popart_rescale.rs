//! PopArt: track target statistics and rescale the critic head so its
//! unnormalized predictions do not move.

use dmorl::momdp::{popart_update, LinearCriticHead, PopArtStats};
use dmorl::ndgrad::Tensor;

fn predict(w: &Tensor, b: &Tensor, s: &PopArtStats, x: &[f64]) -> Vec<f64> {
    (0..s.k())
        .map(|i| {
            let n: f64 = w.row(i).iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + b.data()[i];
            s.sigma[i] * n + s.mu[i]
        })
        .collect()
}

fn main() -> dmorl::Result<()> {
    let mut w = Tensor::matrix(2, 3, vec![0.5, -0.1, 0.2, 0.0, 0.3, -0.4]);
    let mut b = Tensor::vector(vec![0.1, -0.2]);
    let mut stats = PopArtStats::new(2, 0.001);
    let x = [1.0, 2.0, -1.0];

    for round in 0..4 {
        let targets: Vec<Vec<f64>> = (0..16).map(|i| vec![100.0 + i as f64 * round as f64, -50.0 + 0.5 * i as f64]).collect();
        let before = predict(&w, &b, &stats, &x);
        popart_update(&mut stats, &mut LinearCriticHead { weight: &mut w, bias: &mut b }, &targets)?;
        let after = predict(&w, &b, &stats, &x);
        println!(
            "round {round}: mu {:?} sigma {:?}  prediction change {:.1e}",
            stats.mu.iter().map(|m| format!("{m:.2}")).collect::<Vec<_>>(),
            stats.sigma.iter().map(|s| format!("{s:.3}")).collect::<Vec<_>>(),
            before.iter().zip(&after).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        );
    }
    Ok(())
}
