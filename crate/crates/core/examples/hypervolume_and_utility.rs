//! Pareto filtering, exact hypervolume in 2 to 4 objectives, expected
//! utility and maximum utility loss on hand-made data.

use dmorl::metrics::{hypervolume, max_utility_loss_of, pareto_filter, utility};
use dmorl::momdp::WeightVector;

fn main() -> dmorl::Result<()> {
    let pts = vec![vec![1.0, 2.0], vec![2.0, 1.0], vec![0.5, 0.5], vec![1.0, 2.0]];
    let front = pareto_filter(&pts);
    println!("front {front:?}");
    println!("hv 2d = {}", hypervolume(&front, &[0.0, 0.0])?);

    let cube = vec![vec![1.0, 1.0, 1.0], vec![2.0, 0.5, 0.5]];
    println!("hv 3d = {}", hypervolume(&cube, &[0.0, 0.0, 0.0])?);
    let four = vec![vec![1.0, 1.0, 1.0, 1.0], vec![0.5, 2.0, 1.0, 1.0]];
    println!("hv 4d = {}", hypervolume(&four, &[0.0; 4])?);
    println!("hv 5d = {:?}", hypervolume(&[vec![1.0; 5]], &[0.0; 5]).map_err(|e| e.to_string()));

    let alphas: Vec<WeightVector> = (0..=4).map(|i| WeightVector::new(vec![i as f64 / 4.0, 1.0 - i as f64 / 4.0])).collect::<Result<_, _>>()?;
    let achieved = vec![vec![1.0, 2.0], vec![1.0, 2.0], vec![1.5, 1.5], vec![2.0, 1.0], vec![2.0, 1.0]];
    let eu = alphas.iter().zip(&achieved).map(|(a, j)| utility(a, j)).sum::<f64>() / alphas.len() as f64;
    println!("expected utility {eu:.4}");
    println!("max utility loss {:.4}", max_utility_loss_of(&alphas, &achieved, &front)?);
    Ok(())
}
