//! Rescale new-class classifier rows to the old rows' mean norm.

use icpl::nncore::{Model, NetworkSpec};
use icpl::rng::seeded;
use icpl::strategies::{block_norms, weight_align};
use ndarray::s;

fn main() -> icpl::Result<()> {
    let mut model = Model::new(NetworkSpec::new(8, vec![16], 8), 6, &mut seeded(3))?;
    // New classes trained on more data tend to end up with larger rows.
    model.classifier.weights.slice_mut(s![4.., ..]).mapv_inplace(|v| v * 2.0);
    let (old, new) = block_norms(&model, 4);
    println!("before: old {old:.4} new {new:.4}");
    let gamma = weight_align(&mut model, 4)?;
    let (old, new) = block_norms(&model, 4);
    println!("gamma {gamma:.4}; after: old {old:.4} new {new:.4}");
    Ok(())
}
