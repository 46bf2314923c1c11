//! Self-check suite: gradient checks, HVP order of accuracy, quadratic
//! exactness, the norm-gradient identity and the reduction identities.

use std::time::Instant;

use anyhow::Result;
use gnp_core::oracle::{
    appendix_identity_check, exact_penalized_gradient, fd_gradient, fd_hvp, max_coordinate_error, relative_error,
    FdSteps, QuadraticProblem,
};
use gnp_core::penalty::{combine_gradients, gnp_gradient_with, CombineFn};
use gnp_core::{
    generate_dataset, hvp_taylor, init_params, Activation, Batch, Coefficient, DatasetSpec, GnpConfig, InitScheme,
    ModelLoss, ModelSpec, Objective, ParamVector, Scheme, Tensor,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    /// Passes when measured ≤ tolerance.
    AtMost,
    /// Passes when measured ≥ tolerance.
    AtLeast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub tolerance: f64,
    pub comparison: Comparison,
    pub measured: f64,
    pub passed: bool,
}

impl Check {
    fn new(name: impl Into<String>, comparison: Comparison, tolerance: f64, measured: f64) -> Self {
        let passed = match comparison {
            Comparison::AtMost => measured <= tolerance,
            Comparison::AtLeast => measured >= tolerance,
        };
        Self {
            name: name.into(),
            tolerance,
            comparison,
            measured,
            passed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
    pub passed: bool,
    pub elapsed_ms: u64,
}

impl VerifyReport {
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn formula_batch(n: usize, d: usize, classes: usize) -> Batch {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..d).map(|k| (1.7 * i as f64 + k as f64).cos()).collect())
        .collect();
    Batch::new(
        Tensor::from_rows(&rows).expect("rectangular rows"),
        (0..n).map(|i| i % classes).collect(),
    )
    .expect("labels match rows")
}

fn gradient_fixtures() -> Result<Vec<(String, ModelSpec, Batch)>> {
    let moons = generate_dataset(&DatasetSpec::two_moons(40, 0.2, 0))?.0;
    Ok(vec![
        (
            "tanh_2_3_2".into(),
            ModelSpec::mlp(vec![2, 3, 2], Activation::Tanh, InitScheme::Glorot, 0),
            formula_batch(8, 2, 2),
        ),
        (
            "relu_3_5_4_3".into(),
            ModelSpec::mlp(vec![3, 5, 4, 3], Activation::Relu, InitScheme::He, 1),
            formula_batch(12, 3, 3),
        ),
        (
            "tanh_2_8_8_2".into(),
            ModelSpec::mlp(vec![2, 8, 8, 2], Activation::Tanh, InitScheme::Glorot, 2),
            formula_batch(16, 2, 2),
        ),
        (
            "linear_4_3".into(),
            ModelSpec::mlp(vec![4, 3], Activation::Tanh, InitScheme::Glorot, 3),
            formula_batch(5, 4, 3),
        ),
        (
            "moons_2_16_2".into(),
            ModelSpec::mlp(vec![2, 16, 2], Activation::Tanh, InitScheme::Glorot, 5),
            moons,
        ),
    ])
}

fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let cov: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    cov / var
}

fn lambda_cfg(lambda: f64, r: f64) -> GnpConfig {
    GnpConfig {
        scheme: Scheme::Gnp,
        coefficient: Coefficient::Lambda(lambda),
        r,
        ..GnpConfig::default()
    }
}

/// Number of coordinates whose bit patterns differ.
fn bit_mismatches(a: &ParamVector, b: &ParamVector) -> usize {
    a.values()
        .iter()
        .zip(b.values())
        .filter(|(x, y)| x.to_bits() != y.to_bits())
        .count()
        + a.len().abs_diff(b.len())
}

/// Runs every check with the default gradient combination.
pub fn run_verify() -> Result<VerifyReport> {
    run_verify_with(combine_gradients)
}

/// Runs every check, using `combine` wherever the penalized gradient is formed.
pub fn run_verify_with(combine: CombineFn) -> Result<VerifyReport> {
    let start = Instant::now();
    let mut checks = Vec::new();

    for (name, spec, batch) in gradient_fixtures()? {
        let params = init_params(&spec)?;
        let obj = ModelLoss::new(&spec, &batch);
        let g = obj.grad(&params)?;
        let fd = fd_gradient(|p| obj.loss(p), &params, 1e-6)?;
        let err = max_coordinate_error(&g, &fd, 1e-4)?;
        checks.push(Check::new(
            format!("gradient_check/{name}"),
            Comparison::AtMost,
            1e-5,
            err,
        ));
    }

    // Forward-difference HVP: error should shrink linearly with r.
    let spec = ModelSpec::mlp(vec![2, 5, 2], Activation::Tanh, InitScheme::Glorot, 21);
    let batch = formula_batch(10, 2, 2);
    let obj = ModelLoss::new(&spec, &batch);
    let theta = init_params(&spec)?;
    let v = obj.grad(&theta)?;
    let v = v.scale(1.0 / v.l2_norm());
    let reference = fd_hvp(&obj, &theta, &v, 1e-4)?;
    let rs = [0.1, 0.05, 0.02, 0.01];
    let errs = rs
        .iter()
        .map(|&r| Ok(hvp_taylor(&obj, &theta, &v, r)?.sub(&reference)?.l2_norm()))
        .collect::<Result<Vec<f64>>>()?;
    checks.push(Check::new(
        "hvp_order_of_accuracy",
        Comparison::AtLeast,
        0.8,
        loglog_slope(&rs, &errs),
    ));

    let quadratics = vec![
        (QuadraticProblem::diagonal(&[1.0, 4.0]), vec![1.0, 1.0]),
        (
            QuadraticProblem::with_spectrum(&[3.0, 1.5, 0.7, 0.2, 0.05], 11, Some(vec![0.1, -0.2, 0.3, 0.0, 1.0]))?,
            vec![0.5, 0.4, -1.0, 2.0, 0.3],
        ),
        (
            QuadraticProblem::with_spectrum(&[4.0, -1.0, 2.5, 0.5, -0.3, 1.0, 0.1, 3.3], 12, None)?,
            vec![1.0, -1.0, 0.5, 0.25, -0.5, 2.0, 0.0, 0.7],
        ),
    ];
    let mut worst: f64 = 0.0;
    for (q, theta) in &quadratics {
        let theta = ParamVector::from_vec(theta.clone());
        for lambda in [0.08, 0.01] {
            let exact = q.exact_penalized_gradient(&theta, lambda)?;
            for r in [0.2, 0.1, 0.05, 0.01] {
                let g = gnp_gradient_with(q, &theta, &lambda_cfg(lambda, r), combine)?.g;
                worst = worst.max(relative_error(&g, &exact)?);
            }
        }
    }
    checks.push(Check::new("quadratic_exactness", Comparison::AtMost, 1e-10, worst));

    let lambda = 0.01;
    let exact = exact_penalized_gradient(&obj, &theta, lambda, FdSteps::default())?;
    let errs = rs
        .iter()
        .map(|&r| {
            let g = gnp_gradient_with(&obj, &theta, &lambda_cfg(lambda, r), combine)?.g;
            Ok(relative_error(&g, &exact)?)
        })
        .collect::<Result<Vec<f64>>>()?;
    checks.push(Check::new(
        "first_order_consistency",
        Comparison::AtLeast,
        0.8,
        loglog_slope(&rs, &errs),
    ));

    let spec = ModelSpec::mlp(vec![3, 6, 6, 3], Activation::Tanh, InitScheme::Glorot, 4);
    let batch = formula_batch(12, 3, 3);
    let obj = ModelLoss::new(&spec, &batch);
    let base = init_params(&spec)?;
    let mut worst: f64 = 0.0;
    for shift in [0.0, 0.05, -0.1] {
        let theta = base.with_values(
            base.values()
                .iter()
                .enumerate()
                .map(|(i, v)| v + shift * ((i as f64) * 0.37).sin())
                .collect(),
        )?;
        worst = worst.max(appendix_identity_check(&obj, &theta, FdSteps::default())?.relative_error);
    }
    checks.push(Check::new("norm_gradient_identity", Comparison::AtMost, 1e-4, worst));

    let spec = ModelSpec::mlp(vec![2, 8, 2], Activation::Tanh, InitScheme::Glorot, 7);
    let batch = generate_dataset(&DatasetSpec::two_moons(64, 0.2, 1))?.0;
    let obj = ModelLoss::new(&spec, &batch);
    let theta = init_params(&spec)?;
    let r = 0.05;
    let standard = gnp_gradient_with(&obj, &theta, &GnpConfig::standard(), combine)?.g;
    let sam = gnp_gradient_with(&obj, &theta, &GnpConfig::sam(r), combine)?.g;
    let alpha0 = gnp_gradient_with(&obj, &theta, &GnpConfig::gnp(0.0, r), combine)?.g;
    let alpha1 = gnp_gradient_with(&obj, &theta, &GnpConfig::gnp(1.0, r), combine)?.g;
    checks.push(Check::new(
        "reduction_alpha0_standard",
        Comparison::AtMost,
        0.0,
        bit_mismatches(&alpha0, &standard) as f64,
    ));
    checks.push(Check::new(
        "reduction_alpha1_sam",
        Comparison::AtMost,
        0.0,
        bit_mismatches(&alpha1, &sam) as f64,
    ));

    let passed = checks.iter().all(|c| c.passed);
    Ok(VerifyReport {
        checks,
        passed,
        elapsed_ms: start.elapsed().as_millis() as u64,
    })
}
