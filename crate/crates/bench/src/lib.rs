//! Shared fixtures for the benchmark targets.

use padic_dbn::{DbnModel, DeepLayer, ModelKind, TreeGroup};

/// A reproducible random convolutional model with an optional layer stack.
pub fn fixture_model(p: u64, l: u32, layers: usize, seed: u64) -> DbnModel {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let group = TreeGroup::new(p, l).expect("valid group");
    let mut model = DbnModel::random(group, ModelKind::Conv, 1.0, &mut rng);
    let n = group.order() as usize;
    for _ in 0..layers {
        let w_eff: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        model
            .push_layer(DeepLayer::new(w_eff, rng.gen_range(-4.0..0.0), 1, 1))
            .expect("layer fits");
    }
    model
}

// Re-exported so the bench target and any external harness agree on the
// crate under test.
pub use padic_dbn;
