mod common;

use common::{formula_batch, mlp};
use gnp_core::flatness::{double_well_experiment, local_lipschitz, top_eig_power, Basin, DoubleWell};
use gnp_core::model::{init_params, ModelLoss};
use gnp_core::oracle::QuadraticProblem;
use gnp_core::{Activation, GnpConfig, Objective, ParamVector};

#[test]
fn lipschitz_estimate_approaches_gradient_norm() {
    let spec = mlp(&[2, 6, 2], Activation::Tanh, 3);
    let batch = formula_batch(16, 2, 2);
    let obj = ModelLoss::new(&spec, &batch);
    let theta = init_params(&spec).unwrap();
    let gnorm = obj.grad(&theta).unwrap().l2_norm();
    let mut gaps = Vec::new();
    for rho in [1e-2, 1e-3, 1e-4] {
        let est = local_lipschitz(&obj, &theta, rho, 32, 0).unwrap();
        gaps.push((est - gnorm).abs() / gnorm);
    }
    assert!(gaps[2] < 1e-3, "{gaps:?}");
    assert!(gaps[2] <= gaps[0], "{gaps:?}");
}

#[test]
fn power_iteration_on_quadratics() {
    let eigs = [5.0, 4.0, 2.0, 1.0, -0.5, 0.1];
    let q = QuadraticProblem::with_spectrum(&eigs, 8, Some(vec![0.3; 6])).unwrap();
    let theta = ParamVector::from_vec(vec![0.1, -0.4, 0.2, 0.0, 1.0, 0.5]);
    let a = top_eig_power(&q, &theta, 100, 1).unwrap();
    let b = top_eig_power(&q, &theta, 100, 2).unwrap();
    assert!((a - 5.0).abs() / 5.0 < 1e-3, "{a}");
    assert!((a - b).abs() / a < 1e-2);
}

#[test]
fn power_iteration_seed_invariance_on_mlp() {
    let spec = mlp(&[2, 8, 2], Activation::Tanh, 5);
    let batch = formula_batch(24, 2, 2);
    let obj = ModelLoss::new(&spec, &batch);
    let theta = init_params(&spec).unwrap();
    let a = top_eig_power(&obj, &theta, 60, 10).unwrap();
    let b = top_eig_power(&obj, &theta, 60, 11).unwrap();
    assert!((a - b).abs() / a < 1e-2, "{a} vs {b}");
}

#[test]
fn gnp_moves_sharp_basin_starts_to_the_flat_basin() {
    let well = DoubleWell::default();
    let cfg = GnpConfig {
        lr: 0.01,
        ..GnpConfig::gnp(0.8, 0.3)
    };
    let grid: Vec<f64> = (0..=50).map(|i| -1.0 + 5.0 * i as f64 / 50.0).collect();
    let out = double_well_experiment(&well, &cfg, &grid, 3000);
    let sharp_starts = grid.iter().filter(|&&x| well.classify(x) == Basin::Sharp).count();
    assert!(sharp_starts > 0);
    assert_eq!(out.standard.sharp_count, sharp_starts);
    let converted = out
        .rows
        .chunks(2)
        .filter(|pair| pair[0].basin == Basin::Sharp && pair[1].basin == Basin::Flat)
        .count();
    assert!(converted >= 1, "{:?}", out.gnp);
    assert_eq!(out.gnp.diverged_count, 0);
}
