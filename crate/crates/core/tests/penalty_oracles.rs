mod common;

use common::{formula_batch, mlp};
use gnp_core::model::{init_params, ModelLoss};
use gnp_core::oracle::{
    appendix_identity_check, exact_penalized_gradient, fd_hvp, relative_error, FdSteps, QuadraticProblem,
};
use gnp_core::{gnp_gradient, hvp_taylor, Activation, Coefficient, FnObjective, GnpConfig, ParamVector, Scheme};

fn lambda_cfg(lambda: f64, r: f64) -> GnpConfig {
    GnpConfig {
        scheme: Scheme::Gnp,
        coefficient: Coefficient::Lambda(lambda),
        r,
        ..GnpConfig::default()
    }
}

/// Least-squares slope of log(err) against log(r).
fn loglog_slope(rs: &[f64], errs: &[f64]) -> f64 {
    let xs: Vec<f64> = rs.iter().map(|r| r.ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    cov / var
}

#[test]
fn gnp_gradient_is_exact_on_quadratics() {
    let problems = [
        (QuadraticProblem::diagonal(&[1.0, 4.0]), vec![1.0, 1.0]),
        (
            QuadraticProblem::with_spectrum(&[3.0, 1.5, 0.7, 0.2, 0.05], 11, Some(vec![0.1, -0.2, 0.3, 0.0, 1.0]))
                .unwrap(),
            vec![0.5, 0.4, -1.0, 2.0, 0.3],
        ),
        (
            QuadraticProblem::with_spectrum(&[4.0, -1.0, 2.5, 0.5, -0.3, 1.0, 0.1, 3.3], 12, None).unwrap(),
            vec![1.0, -1.0, 0.5, 0.25, -0.5, 2.0, 0.0, 0.7],
        ),
    ];
    for (k, (q, theta)) in problems.iter().enumerate() {
        let theta = ParamVector::from_vec(theta.clone());
        for lambda in [0.08, 0.01] {
            let exact = q.exact_penalized_gradient(&theta, lambda).unwrap();
            for r in [0.2, 0.1, 0.05, 0.01] {
                let rep = gnp_gradient(q, &theta, &lambda_cfg(lambda, r)).unwrap();
                let err = relative_error(&rep.g, &exact).unwrap();
                assert!(err <= 1e-10, "problem {k}, lambda {lambda}, r {r}: {err:e}");
            }
        }
    }
    let q = &problems[0].0;
    let exact = q
        .exact_penalized_gradient(&ParamVector::from_vec(vec![1.0, 1.0]), 0.08)
        .unwrap();
    assert!((exact.values()[0] - 1.0194029).abs() < 2e-7);
    assert!((exact.values()[1] - 4.3104457).abs() < 2e-7);
}

#[test]
fn gnp_error_is_first_order_in_r() {
    let spec = mlp(&[2, 5, 2], Activation::Tanh, 21);
    let batch = formula_batch(10, 2, 2);
    let obj = ModelLoss::new(&spec, &batch);
    let theta = init_params(&spec).unwrap();
    let lambda = 0.01;
    let exact = exact_penalized_gradient(&obj, &theta, lambda, FdSteps::default()).unwrap();
    let rs = [0.1, 0.05, 0.02, 0.01];
    let errs: Vec<f64> = rs
        .iter()
        .map(|&r| {
            let g = gnp_gradient(&obj, &theta, &lambda_cfg(lambda, r)).unwrap().g;
            relative_error(&g, &exact).unwrap()
        })
        .collect();
    for w in errs.windows(2) {
        assert!(w[1] < w[0], "{errs:?}");
    }
    let slope = loglog_slope(&rs, &errs);
    assert!(slope >= 0.8, "slope {slope}, errors {errs:?}");
}

#[test]
fn taylor_hvp_error_halves_with_r() {
    // L = sum(x^4)/4 + x0 x1^2: smooth, non-quadratic.
    let quartic = FnObjective::new(
        |x: &[f64]| x.iter().map(|v| v.powi(4) / 4.0).sum::<f64>() + x[0] * x[1] * x[1],
        |x: &[f64]| {
            let mut g: Vec<f64> = x.iter().map(|v| v.powi(3)).collect();
            g[0] += x[1] * x[1];
            g[1] += 2.0 * x[0] * x[1];
            g
        },
    );
    let theta = ParamVector::from_vec(vec![0.8, -0.5, 1.2]);
    let v = ParamVector::from_vec(vec![0.6, 0.0, -0.8]);
    let reference = fd_hvp(&quartic, &theta, &v, 1e-4).unwrap();
    let errs: Vec<f64> = [0.1, 0.05, 0.025]
        .iter()
        .map(|&r| {
            let hv = hvp_taylor(&quartic, &theta, &v, r).unwrap();
            hv.sub(&reference).unwrap().l2_norm()
        })
        .collect();
    for w in errs.windows(2) {
        let ratio = w[0] / w[1];
        assert!((1.7..=2.3).contains(&ratio), "ratio {ratio}, errors {errs:?}");
    }
}

#[test]
fn norm_gradient_identity_on_small_mlp() {
    let spec = mlp(&[3, 6, 6, 3], Activation::Tanh, 4);
    assert!(spec.num_params().unwrap() <= 200);
    let batch = formula_batch(12, 3, 3);
    let obj = ModelLoss::new(&spec, &batch);
    let base = init_params(&spec).unwrap();
    for shift in [0.0, 0.05, -0.1] {
        let theta = base
            .with_values(
                base.values()
                    .iter()
                    .enumerate()
                    .map(|(i, v)| v + shift * ((i as f64) * 0.37).sin())
                    .collect(),
            )
            .unwrap();
        let check = appendix_identity_check(&obj, &theta, FdSteps::default()).unwrap();
        assert!(
            check.relative_error <= 1e-4,
            "shift {shift}: {:e}",
            check.relative_error
        );
    }
}
