//! Clustering agreement metrics on a few labelings.

use icpl::evaluation::{ari, cluster_accuracy, nmi};

fn main() -> icpl::Result<()> {
    let truth = [0, 0, 0, 1, 1, 1, 2, 2, 2];
    let cases: [(&str, [usize; 9]); 4] = [
        ("identical", truth),
        ("renamed", [5, 5, 5, 3, 3, 3, 9, 9, 9]),
        ("one mistake", [0, 0, 1, 1, 1, 1, 2, 2, 2]),
        ("merged", [0, 0, 0, 0, 0, 0, 1, 1, 1]),
    ];
    println!("{:<12} {:>7} {:>7} {:>9}", "labeling", "nmi", "ari", "accuracy");
    for (name, pred) in cases {
        println!(
            "{name:<12} {:>7.3} {:>7.3} {:>9.1}",
            nmi(&pred, &truth)?,
            ari(&pred, &truth)?,
            cluster_accuracy(&pred, &truth)?
        );
    }
    Ok(())
}
