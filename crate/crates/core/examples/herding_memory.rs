//! Fill a fixed exemplar budget across tasks and watch older classes shrink.

use icpl::memory::{herding_select, ClassSamples, ExemplarMemory};
use icpl::rng::seeded;
use ndarray::Array2;
use rand::Rng;

fn class(id: usize, rng: &mut icpl::rng::Rng) -> ClassSamples {
    let x = Array2::from_shape_fn((30, 4), |_| rng.random_range(-1.0..1.0) + id as f64);
    ClassSamples {
        class: id,
        samples: x.clone(),
        embeddings: x,
    }
}

fn main() -> icpl::Result<()> {
    let mut rng = seeded(4);
    let first = class(0, &mut rng);
    println!("herding order of class 0: {:?}", herding_select(&first.embeddings, 8)?);

    let mut memory = ExemplarMemory::new(24);
    memory.rebalance(vec![first, class(1, &mut rng)])?;
    for task in 0..3 {
        if task > 0 {
            let next = memory.classes().max().unwrap() + 1;
            memory.rebalance(vec![class(next, &mut rng), class(next + 1, &mut rng)])?;
        }
        let sizes: Vec<String> = memory
            .classes()
            .map(|c| format!("{c}:{}", memory.exemplars(c).unwrap().len()))
            .collect();
        println!("after task {}: {} exemplars [{}]", task + 1, memory.len(), sizes.join(" "));
    }
    Ok(())
}
