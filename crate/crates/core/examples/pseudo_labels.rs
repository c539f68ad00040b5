//! Cluster a blob mixture and keep only confident pseudo-labels.

use icpl::clustering::{generate_pseudo_labels, KMeansConfig};
use icpl::evaluation::{ari, nmi};
use icpl::rng::seeded;
use ndarray::Array2;
use rand_distr::{Distribution, Normal};

fn main() -> icpl::Result<()> {
    let centers = [[0.0, 0.0], [4.0, 0.0], [2.0, 3.5]];
    let noise = Normal::new(0.0, 0.9).unwrap();
    let mut rng = seeded(1);
    let mut rows = Vec::new();
    let mut truth = Vec::new();
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..60 {
            rows.extend(center.iter().map(|v| v + noise.sample(&mut rng)));
            truth.push(c);
        }
    }
    let x = Array2::from_shape_vec((truth.len(), 2), rows).unwrap();

    println!("{:>6} {:>10} {:>8} {:>8}", "alpha", "selected", "nmi", "ari");
    for alpha in [0.4, 0.6, 0.7, 0.8] {
        let pl = generate_pseudo_labels(&x, 3, alpha, KMeansConfig::default(), &mut seeded(2))?;
        let idx = pl.selected_indices();
        let pred: Vec<usize> = idx.iter().map(|&i| pl.pseudo_labels[i]).collect();
        let real: Vec<usize> = idx.iter().map(|&i| truth[i]).collect();
        println!(
            "{alpha:>6.2} {:>10.3} {:>8.3} {:>8.3}",
            pl.selected_fraction(),
            nmi(&pred, &real)?,
            ari(&pred, &real)?
        );
    }
    Ok(())
}
