#![allow(dead_code)]

use gnp_core::{Activation, Batch, InitScheme, ModelSpec, Tensor};

/// Deterministic, formula-defined batch: `x[n][k] = cos(1.7 n + k)`,
/// labels cycling through the classes.
pub fn formula_batch(n: usize, d: usize, classes: usize) -> Batch {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..d).map(|k| (1.7 * i as f64 + k as f64).cos()).collect())
        .collect();
    Batch::new(Tensor::from_rows(&rows).unwrap(), (0..n).map(|i| i % classes).collect()).unwrap()
}

pub fn mlp(sizes: &[usize], act: Activation, seed: u64) -> ModelSpec {
    ModelSpec::mlp(sizes.to_vec(), act, InitScheme::Glorot, seed)
}
