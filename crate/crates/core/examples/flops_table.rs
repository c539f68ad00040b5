//! Training-cost comparison of a supervised and an unsupervised step,
//! then the same estimate for a small MLP.

use icpl::flops::{FlopsModel, PerSampleCost};
use icpl::nncore::{Model, NetworkSpec};
use icpl::rng::seeded;

fn main() -> icpl::Result<()> {
    print!("{}", FlopsModel::cifar_step().evaluate());

    let model = Model::new(NetworkSpec::new(16, vec![64], 32), 10, &mut seeded(0))?;
    let cost = PerSampleCost::of(&model);
    // One desk task: 160 new samples, 480 replayed exemplars, and an
    // unsupervised step that keeps about 97% of the new samples.
    let (new, replayed) = (160.0, 480.0);
    let desk = FlopsModel {
        samples: new,
        embed_dim: 32.0,
        clusters: 2.0,
        training_gflops_per_image: cost.training_gflops,
        inference_gflops_per_image: cost.inference_gflops,
        epochs: 60,
        n_supervised: new + replayed,
        n_unsupervised: 0.97 * new + replayed,
        ..FlopsModel::cifar_step()
    };
    println!("\ndesk MLP ({} parameters):", model.parameter_count());
    print!("{}", desk.evaluate());
    Ok(())
}
