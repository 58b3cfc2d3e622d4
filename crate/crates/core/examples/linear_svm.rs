//! The one-vs-rest linear SVM on its own: a 4-class toy problem.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use voxmesh::classify::{evaluate, train, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let centers = [[4.0, 0.0], [0.0, 4.0], [-4.0, 0.0], [0.0, -4.0]];
    let n = 200;
    let mut x = Array2::zeros((n, 2));
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % 4;
        x[[i, 0]] = centers[c][0] + rng.random_range(-1.0..1.0);
        x[[i, 1]] = centers[c][1] + rng.random_range(-1.0..1.0);
        y.push(c);
    }
    let model = train(x.view(), &y, 4, &TrainConfig::default())?;
    let report = evaluate(&model, x.view(), &y)?;
    println!("accuracy {}", report.accuracy);
    println!("epochs per class {:?}", model.epochs);
    for row in &report.confusion {
        println!("  {row:?}");
    }
    Ok(())
}
