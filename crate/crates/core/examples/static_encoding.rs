//! Why evaluation fixes the unit-to-class mapping per task.
//!
//! A model that swaps the units of an old and a new task looks perfect under
//! cluster accuracy, which re-matches units to classes globally, and scores
//! zero under the static encoding.

use icpl::assignment::{contingency, extend_encoding, EncodingTable};
use icpl::evaluation::{cluster_accuracy, top1_static};

fn main() -> icpl::Result<()> {
    let mut table = EncodingTable::new();
    table.append_identity(&[0, 1], &[3, 7])?;

    // Task 2 clusters: unit 2 gathered class 5, unit 3 gathered class 1.
    let assigned = [2, 2, 2, 3, 3, 3, 3];
    let truth = [5, 5, 1, 1, 1, 1, 5];
    let counts = contingency(&assigned, &truth, &[2, 3], &[1, 5])?;
    extend_encoding(&mut table, &counts, &[2, 3], &[1, 5])?;
    println!("encoding: {:?}", table.entries());

    let truth = [3, 7, 5, 1];
    let faithful = [0, 1, 2, 3];
    let swapped = [2, 3, 0, 1];
    for (name, pred) in [("faithful", faithful), ("swapped", swapped)] {
        println!(
            "{name:>9}: static top-1 {:>6.1}  cluster accuracy {:>6.1}",
            top1_static(&pred, &table, &truth)?,
            cluster_accuracy(&pred, &truth)?
        );
    }
    Ok(())
}
