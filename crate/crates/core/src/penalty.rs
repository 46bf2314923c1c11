//! Gradient-norm penalty: the penalized loss, the two-pass approximate
//! gradient, the finite-difference Hessian-vector product it rests on, and
//! the SGD update step with momentum, decoupled weight decay and schedules.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::Objective;
use crate::params::ParamVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Plain gradient: g = g1.
    Standard,
    /// Gradient at the perturbed point only: g = g2.
    Sam,
    /// g = (1 - alpha) g1 + alpha g2.
    Gnp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    Constant,
    Cosine,
}

/// The user-specified half of the (lambda, alpha) pair; the other half is
/// derived through alpha = lambda / r.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coefficient {
    Alpha(f64),
    Lambda(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnpConfig {
    pub scheme: Scheme,
    pub coefficient: Coefficient,
    /// Perturbation radius, also the step of the finite-difference HVP.
    pub r: f64,
    /// Norm order of the penalty term (logging only for p != 2).
    pub p: u32,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub schedule: Schedule,
    pub total_steps: u64,
    /// Below this gradient norm the perturbation is skipped.
    pub grad_floor: f64,
}

impl Default for GnpConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::Gnp,
            coefficient: Coefficient::Alpha(0.8),
            r: 0.05,
            p: 2,
            lr: 0.1,
            momentum: 0.0,
            weight_decay: 0.0,
            schedule: Schedule::Constant,
            total_steps: 1,
            grad_floor: 1e-12,
        }
    }
}

impl GnpConfig {
    pub fn standard() -> Self {
        Self {
            scheme: Scheme::Standard,
            coefficient: Coefficient::Alpha(0.0),
            ..Self::default()
        }
    }

    pub fn sam(r: f64) -> Self {
        Self {
            scheme: Scheme::Sam,
            coefficient: Coefficient::Alpha(1.0),
            r,
            ..Self::default()
        }
    }

    pub fn gnp(alpha: f64, r: f64) -> Self {
        Self {
            scheme: Scheme::Gnp,
            coefficient: Coefficient::Alpha(alpha),
            r,
            ..Self::default()
        }
    }

    /// Resolves an optional (alpha, lambda) pair. Giving both is an error;
    /// giving neither keeps `default_alpha`.
    pub fn coefficient_from(alpha: Option<f64>, lambda: Option<f64>, default_alpha: f64) -> Result<Coefficient> {
        match (alpha, lambda) {
            (Some(_), Some(_)) => Err(Error::Config("specify either alpha or lambda, not both".into())),
            (Some(a), None) => Ok(Coefficient::Alpha(a)),
            (None, Some(l)) => Ok(Coefficient::Lambda(l)),
            (None, None) => Ok(Coefficient::Alpha(default_alpha)),
        }
    }

    /// Balance coefficient actually applied by the scheme.
    pub fn alpha(&self) -> f64 {
        match self.scheme {
            Scheme::Standard => 0.0,
            Scheme::Sam => 1.0,
            Scheme::Gnp => match self.coefficient {
                Coefficient::Alpha(a) => a,
                Coefficient::Lambda(l) => l / self.r,
            },
        }
    }

    /// Penalty coefficient lambda = alpha * r.
    pub fn lambda(&self) -> f64 {
        match (self.scheme, self.coefficient) {
            (Scheme::Gnp, Coefficient::Lambda(l)) => l,
            _ => self.alpha() * self.r,
        }
    }

    /// Balance coefficients outside [0, 1] are allowed but experimental.
    pub fn is_experimental(&self) -> bool {
        !(0.0..=1.0).contains(&self.alpha())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.r > 0.0 && self.r.is_finite()) {
            return fail(format!("r must be positive, got {}", self.r));
        }
        if self.p < 1 {
            return fail("p must be >= 1".into());
        }
        if !self.alpha().is_finite() {
            return fail("alpha must be finite".into());
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return fail(format!("lr must be >= 0, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return fail(format!("momentum must lie in [0,1), got {}", self.momentum));
        }
        if !(self.weight_decay >= 0.0) {
            return fail(format!("weight_decay must be >= 0, got {}", self.weight_decay));
        }
        if !(self.grad_floor > 0.0) {
            return fail("grad_floor must be positive".into());
        }
        if self.schedule == Schedule::Cosine && self.total_steps == 0 {
            return fail("cosine schedule needs total_steps >= 1".into());
        }
        Ok(())
    }
}

/// Artifacts of one penalized-gradient evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientReport {
    pub g1: ParamVector,
    pub g2: ParamVector,
    pub g: ParamVector,
    pub loss_at_theta: f64,
    pub grad_norm: f64,
    pub perturbed_grad_norm: f64,
    pub penalized_loss: f64,
}

/// `(sum |g_i|^p)^(1/p)`.
pub fn grad_norm_lp(g: &ParamVector, p: u32) -> f64 {
    match p {
        1 => g.values().iter().fold(0.0, |acc, v| acc + v.abs()),
        2 => g.l2_norm(),
        _ => {
            let max = g.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if max == 0.0 {
                return 0.0;
            }
            let p = p as f64;
            let s = g.values().iter().fold(0.0, |acc, v| acc + (v.abs() / max).powf(p));
            max * s.powf(1.0 / p)
        }
    }
}

/// `L_S(theta) + lambda * ||grad L_S(theta)||_p`. Evaluated, never differentiated.
pub fn penalized_loss(obj: &impl Objective, params: &ParamVector, cfg: &GnpConfig) -> Result<f64> {
    let (loss, g) = obj.loss_and_grad(params)?;
    Ok(loss + cfg.lambda() * grad_norm_lp(&g, cfg.p))
}

/// `theta + r * g1 / ||g1||`, or `theta` unchanged when `||g1|| < grad_floor`.
pub fn perturb_point(params: &ParamVector, g1: &ParamVector, r: f64, grad_floor: f64) -> Result<ParamVector> {
    let norm = g1.l2_norm();
    if norm < grad_floor {
        params.check_compatible(g1)?;
        return Ok(params.clone());
    }
    params.axpy(r / norm, g1)
}

/// Forward-difference Hessian-vector product `(grad L(theta + r v) - grad L(theta)) / r`.
pub fn hvp_taylor(obj: &impl Objective, params: &ParamVector, v: &ParamVector, r: f64) -> Result<ParamVector> {
    if !(r > 0.0) {
        return Err(Error::Config(format!("r must be positive, got {r}")));
    }
    let g0 = obj.grad(params)?;
    let g1 = obj.grad(&params.axpy(r, v)?)?;
    Ok(g1.sub(&g0)?.scale(1.0 / r))
}

/// `(1 - alpha) g1 + alpha g2`, componentwise.
pub fn combine_gradients(alpha: f64, g1: &ParamVector, g2: &ParamVector) -> Result<ParamVector> {
    g1.zip_with(g2, |a, b| (1.0 - alpha) * a + alpha * b)
}

/// Signature of the final-gradient combination, so checks can be run
/// against alternative (e.g. deliberately broken) combiners.
pub type CombineFn = fn(f64, &ParamVector, &ParamVector) -> Result<ParamVector>;

/// Both gradient passes on the same objective (same batch). The perturbed
/// point is a constant: no differentiation flows through it.
pub fn gnp_gradient(obj: &impl Objective, params: &ParamVector, cfg: &GnpConfig) -> Result<GradientReport> {
    gnp_gradient_with(obj, params, cfg, combine_gradients)
}

pub fn gnp_gradient_with(
    obj: &impl Objective,
    params: &ParamVector,
    cfg: &GnpConfig,
    combine: CombineFn,
) -> Result<GradientReport> {
    let (loss, g1) = obj
        .loss_and_grad(params)
        .map_err(|e| rename_divergence(e, "first gradient pass (g1)"))?;
    if !loss.is_finite() || !g1.all_finite() {
        return Err(Error::divergence("first gradient pass (g1)"));
    }
    let grad_norm = g1.l2_norm();
    let penalized = loss + cfg.lambda() * grad_norm_lp(&g1, cfg.p);

    let (g2, g) = match cfg.scheme {
        Scheme::Standard => (g1.clone(), g1.clone()),
        Scheme::Sam | Scheme::Gnp => {
            let perturbed = perturb_point(params, &g1, cfg.r, cfg.grad_floor)?;
            let g2 = obj
                .grad(&perturbed)
                .map_err(|e| rename_divergence(e, "second gradient pass (g2)"))?;
            if !g2.all_finite() {
                return Err(Error::divergence("second gradient pass (g2)"));
            }
            let g = match cfg.scheme {
                Scheme::Sam => g2.clone(),
                _ => combine(cfg.alpha(), &g1, &g2)?,
            };
            (g2, g)
        }
    };
    Ok(GradientReport {
        perturbed_grad_norm: g2.l2_norm(),
        g1,
        g2,
        g,
        loss_at_theta: loss,
        grad_norm,
        penalized_loss: penalized,
    })
}

fn rename_divergence(e: Error, stage: &str) -> Error {
    match e {
        Error::Divergence { stage: inner, step } => Error::Divergence {
            stage: format!("{stage}: {inner}"),
            step,
        },
        other => other,
    }
}

/// Optimizer state carried between steps.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    pub params: ParamVector,
    pub velocity: ParamVector,
    pub step: u64,
}

impl OptimState {
    pub fn new(params: ParamVector) -> Self {
        let velocity = ParamVector::zeros(params.layout());
        Self {
            params,
            velocity,
            step: 0,
        }
    }
}

/// `eta_t = eta_max / 2 * (1 + cos(pi t / T))`, decaying to zero at `t = T`.
pub fn cosine_lr(step: u64, cfg: &GnpConfig) -> Result<f64> {
    if step > cfg.total_steps || cfg.total_steps == 0 {
        return Err(Error::ScheduleRange {
            step,
            total: cfg.total_steps,
        });
    }
    let frac = step as f64 / cfg.total_steps as f64;
    Ok(0.5 * cfg.lr * (1.0 + (PI * frac).cos()))
}

pub fn learning_rate(step: u64, cfg: &GnpConfig) -> Result<f64> {
    match cfg.schedule {
        Schedule::Constant => Ok(cfg.lr),
        Schedule::Cosine => cosine_lr(step, cfg),
    }
}

/// One optimizer step: penalized gradient, decoupled weight decay, momentum,
/// then `theta -= eta_t * velocity`.
pub fn train_step(state: &OptimState, obj: &impl Objective, cfg: &GnpConfig) -> Result<(OptimState, GradientReport)> {
    let report = gnp_gradient(obj, &state.params, cfg).map_err(|e| e.at_step(state.step))?;
    let lr = learning_rate(state.step, cfg)?;
    let total = if cfg.weight_decay != 0.0 {
        report.g.axpy(cfg.weight_decay, &state.params)?
    } else {
        report.g.clone()
    };
    let velocity = state.velocity.scale(cfg.momentum).add(&total)?;
    let params = state.params.axpy(-lr, &velocity)?;
    if !params.all_finite() {
        return Err(Error::Divergence {
            stage: "parameter update".into(),
            step: Some(state.step),
        });
    }
    Ok((
        OptimState {
            params,
            velocity,
            step: state.step + 1,
        },
        report,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::FnObjective;
    use crate::oracle::QuadraticProblem;
    use proptest::prelude::*;

    fn diag14() -> QuadraticProblem {
        QuadraticProblem::diagonal(&[1.0, 4.0])
    }

    #[test]
    fn lp_norms() {
        let z = ParamVector::from_vec(vec![0.0; 3]);
        for p in 1..5 {
            assert_eq!(grad_norm_lp(&z, p), 0.0);
        }
        let v = ParamVector::from_vec(vec![3.0, 4.0]);
        assert_eq!(grad_norm_lp(&v, 2), 5.0);
        assert_eq!(grad_norm_lp(&v, 1), 7.0);
        assert!((grad_norm_lp(&v, 3) - 91f64.cbrt()).abs() < 1e-12);
    }

    #[test]
    fn penalized_loss_cases() {
        let q = diag14();
        let theta = ParamVector::from_vec(vec![1.0, 1.0]);
        let plain = q.loss(&theta).unwrap();
        let cfg = GnpConfig {
            coefficient: Coefficient::Lambda(0.0),
            ..GnpConfig::default()
        };
        assert_eq!(penalized_loss(&q, &theta, &cfg).unwrap(), plain);

        let fixed = FnObjective::new(|_: &[f64]| 0.5, |_: &[f64]| vec![3.0, 4.0]);
        let cfg = GnpConfig {
            coefficient: Coefficient::Lambda(1.0),
            ..GnpConfig::default()
        };
        assert_eq!(penalized_loss(&fixed, &theta, &cfg).unwrap(), 5.5);

        let cfg = GnpConfig::gnp(0.8, 0.1);
        let expected = 2.5 + 0.08 * 17f64.sqrt();
        assert!((penalized_loss(&q, &theta, &cfg).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 2.8299).abs() < 1e-4);
    }

    #[test]
    fn lambda_alpha_relation() {
        let cfg = GnpConfig {
            coefficient: Coefficient::Lambda(0.08),
            r: 0.1,
            ..GnpConfig::default()
        };
        assert!((cfg.alpha() - 0.8).abs() < 1e-15);
        assert!(GnpConfig::coefficient_from(Some(0.8), Some(0.04), 0.8).is_err());
        assert_eq!(
            GnpConfig::coefficient_from(None, Some(0.04), 0.8).unwrap(),
            Coefficient::Lambda(0.04)
        );
        assert!(GnpConfig::gnp(-0.2, 0.05).is_experimental());
        assert!(GnpConfig::gnp(2.0, 0.05).is_experimental());
        assert!(!GnpConfig::gnp(0.8, 0.05).is_experimental());
    }

    #[test]
    fn invalid_configs() {
        assert!(GnpConfig::gnp(0.8, 0.0).validate().is_err());
        assert!(GnpConfig {
            momentum: 1.0,
            ..GnpConfig::default()
        }
        .validate()
        .is_err());
        assert!(GnpConfig {
            weight_decay: -1.0,
            ..GnpConfig::default()
        }
        .validate()
        .is_err());
        assert!(GnpConfig {
            p: 0,
            ..GnpConfig::default()
        }
        .validate()
        .is_err());
        assert!(GnpConfig::default().validate().is_ok());
    }

    #[test]
    fn perturbation_cases() {
        let theta = ParamVector::from_vec(vec![0.0, 0.0]);
        let zero = ParamVector::from_vec(vec![0.0, 0.0]);
        assert_eq!(perturb_point(&theta, &zero, 0.1, 1e-12).unwrap(), theta);
        let g = ParamVector::from_vec(vec![3.0, 4.0]);
        let p = perturb_point(&theta, &g, 0.1, 1e-12).unwrap();
        assert!((p.values()[0] - 0.06).abs() < 1e-16);
        assert!((p.values()[1] - 0.08).abs() < 1e-16);
        let tiny = ParamVector::from_vec(vec![1e-14, 0.0]);
        assert_eq!(perturb_point(&theta, &tiny, 0.1, 1e-12).unwrap(), theta);
    }

    proptest! {
        #[test]
        fn perturbation_has_length_r(
            theta in prop::collection::vec(-10.0f64..10.0, 1..20),
            seed_g in prop::collection::vec(-5.0f64..5.0, 20),
            r in 1e-3f64..1.0,
        ) {
            let n = theta.len();
            let t = ParamVector::from_vec(theta);
            let g = ParamVector::from_vec(seed_g[..n].to_vec());
            prop_assume!(g.l2_norm() >= 1e-6);
            let p = perturb_point(&t, &g, r, 1e-12).unwrap();
            let d = p.sub(&t).unwrap().l2_norm();
            prop_assert!((d - r).abs() <= 1e-12 * (1.0 + t.l2_norm()));
        }
    }

    #[test]
    fn taylor_hvp_exact_on_quadratics() {
        let q = diag14();
        let theta = ParamVector::from_vec(vec![0.3, -1.2]);
        let v = ParamVector::from_vec(vec![0.7, 0.5]);
        for r in [1.0, 0.1, 1e-3] {
            let hv = hvp_taylor(&q, &theta, &v, r).unwrap();
            assert!((hv.values()[0] - 0.7).abs() < 1e-12);
            assert!((hv.values()[1] - 2.0).abs() < 1e-12);
        }
        let zero = ParamVector::from_vec(vec![0.0, 0.0]);
        assert_eq!(hvp_taylor(&q, &theta, &zero, 0.1).unwrap().values(), &[0.0, 0.0]);
    }

    #[test]
    fn quadratic_gnp_matches_closed_form() {
        let q = diag14();
        let theta = ParamVector::from_vec(vec![1.0, 1.0]);
        let cfg = GnpConfig::gnp(0.8, 0.1);
        let rep = gnp_gradient(&q, &theta, &cfg).unwrap();
        assert_eq!(rep.g1.values(), &[1.0, 4.0]);
        let s = 17f64.sqrt();
        let expect_g2 = [1.0 + 0.1 / s, 4.0 * (1.0 + 0.4 / s)];
        let expect_g = [1.0 + 0.08 / s, 4.0 + 0.08 * 16.0 / s];
        for i in 0..2 {
            assert!((rep.g2.values()[i] - expect_g2[i]).abs() < 1e-12);
            assert!((rep.g.values()[i] - expect_g[i]).abs() < 1e-12);
        }
        assert!((rep.g2.values()[0] - 1.024254).abs() < 1e-6);
        assert!((rep.g2.values()[1] - 4.388057).abs() < 1e-6);
        assert!((rep.g.values()[0] - 1.019403).abs() < 1e-6);
        assert!((rep.g.values()[1] - 4.310446).abs() < 1e-6);
    }

    #[test]
    fn reduction_identities_bitwise() {
        let q = QuadraticProblem::new(vec![vec![2.0, 0.3], vec![0.3, 0.5]], Some(vec![0.1, -0.4])).unwrap();
        let theta = ParamVector::from_vec(vec![1.3, -0.7]);
        let std = gnp_gradient(&q, &theta, &GnpConfig::standard()).unwrap();
        let a0 = gnp_gradient(&q, &theta, &GnpConfig::gnp(0.0, 0.05)).unwrap();
        assert!(a0.g.bit_eq(&std.g));
        let sam = gnp_gradient(&q, &theta, &GnpConfig::sam(0.05)).unwrap();
        let a1 = gnp_gradient(&q, &theta, &GnpConfig::gnp(1.0, 0.05)).unwrap();
        assert!(a1.g.bit_eq(&sam.g));
        assert!(a1.g.bit_eq(&a1.g2));
    }

    #[test]
    fn combination_is_exact() {
        let q = diag14();
        let theta = ParamVector::from_vec(vec![0.4, 2.0]);
        for alpha in [0.0, 0.25, 0.8, 1.0, -0.2, 2.0] {
            let rep = gnp_gradient(&q, &theta, &GnpConfig::gnp(alpha, 0.05)).unwrap();
            let rebuilt = combine_gradients(alpha, &rep.g1, &rep.g2).unwrap();
            assert!(rep.g.bit_eq(&rebuilt));
            assert!(rep.grad_norm >= 0.0);
        }
    }

    #[test]
    fn zero_gradient_collapses_to_sgd() {
        let q = diag14();
        let theta = ParamVector::from_vec(vec![0.0, 0.0]);
        let rep = gnp_gradient(&q, &theta, &GnpConfig::gnp(0.8, 0.05)).unwrap();
        assert!(rep.g.all_finite());
        assert_eq!(rep.g.values(), &[0.0, 0.0]);
    }

    #[test]
    fn divergence_names_the_pass() {
        let blowup = FnObjective::new(
            |x: &[f64]| x[0] * x[0],
            |x: &[f64]| vec![if x[0] > 1.0 { f64::NAN } else { 2.0 * x[0] }],
        );
        let theta = ParamVector::from_vec(vec![0.99]);
        match gnp_gradient(&blowup, &theta, &GnpConfig::gnp(0.8, 0.05)) {
            Err(Error::Divergence { stage, .. }) => assert!(stage.contains("g2"), "{stage}"),
            other => panic!("expected divergence, got {other:?}"),
        }
        let theta = ParamVector::from_vec(vec![1.5]);
        match gnp_gradient(&blowup, &theta, &GnpConfig::gnp(0.8, 0.05)) {
            Err(Error::Divergence { stage, .. }) => assert!(stage.contains("g1"), "{stage}"),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn plain_sgd_step() {
        let q = diag14();
        let theta = ParamVector::from_vec(vec![1.0, 1.0]);
        let cfg = GnpConfig {
            lr: 0.1,
            ..GnpConfig::standard()
        };
        let (next, _) = train_step(&OptimState::new(theta), &q, &cfg).unwrap();
        assert_eq!(next.params.values(), &[1.0 - 0.1, 1.0 - 0.1 * 4.0]);
        assert_eq!(next.step, 1);
    }

    #[test]
    fn momentum_recurrence() {
        let constant = FnObjective::new(|x: &[f64]| 2.0 * x[0] - x[1], |_: &[f64]| vec![2.0, -1.0]);
        let cfg = GnpConfig {
            momentum: 0.9,
            lr: 0.01,
            ..GnpConfig::standard()
        };
        let s0 = OptimState::new(ParamVector::from_vec(vec![0.0, 0.0]));
        let (s1, _) = train_step(&s0, &constant, &cfg).unwrap();
        let (s2, _) = train_step(&s1, &constant, &cfg).unwrap();
        assert!((s2.velocity.values()[0] - 2.0 * 1.9).abs() < 1e-15);
        assert!((s2.velocity.values()[1] + 1.9).abs() < 1e-15);
    }

    #[test]
    fn weight_decay_is_decoupled() {
        let q = diag14();
        let theta = ParamVector::from_vec(vec![1.0, 1.0]);
        let cfg = GnpConfig {
            weight_decay: 0.5,
            lr: 0.1,
            ..GnpConfig::standard()
        };
        let (next, rep) = train_step(&OptimState::new(theta), &q, &cfg).unwrap();
        assert_eq!(rep.g1.values(), &[1.0, 4.0]);
        assert!((next.params.values()[0] - (1.0 - 0.1 * 1.5)).abs() < 1e-15);
        assert!((next.params.values()[1] - (1.0 - 0.1 * 4.5)).abs() < 1e-15);
    }

    #[test]
    fn penalized_loss_decreases_on_quadratic() {
        let q = diag14();
        let cfg = GnpConfig {
            lr: 0.02,
            ..GnpConfig::gnp(0.8, 0.1)
        };
        let mut state = OptimState::new(ParamVector::from_vec(vec![1.0, 1.0]));
        let mut last = penalized_loss(&q, &state.params, &cfg).unwrap();
        for _ in 0..100 {
            state = train_step(&state, &q, &cfg).unwrap().0;
            let now = penalized_loss(&q, &state.params, &cfg).unwrap();
            assert!(now < last, "{now} >= {last}");
            last = now;
        }
    }

    #[test]
    fn divergent_update_is_reported_with_step() {
        let q = diag14();
        let cfg = GnpConfig {
            lr: 1e200,
            ..GnpConfig::standard()
        };
        let s = OptimState::new(ParamVector::from_vec(vec![1e200, 1e200]));
        match train_step(&s, &q, &cfg) {
            Err(Error::Divergence { step, .. }) => assert_eq!(step, Some(0)),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn cosine_schedule_points() {
        let cfg = GnpConfig {
            lr: 0.4,
            total_steps: 100,
            schedule: Schedule::Cosine,
            ..GnpConfig::default()
        };
        assert_eq!(cosine_lr(0, &cfg).unwrap(), 0.4);
        assert_eq!(cosine_lr(100, &cfg).unwrap(), 0.0);
        assert!((cosine_lr(50, &cfg).unwrap() - 0.2).abs() < 1e-15);
        assert!(cosine_lr(101, &cfg).is_err());
        for t in 0..=100 {
            let lr = cosine_lr(t, &cfg).unwrap();
            assert!((0.0..=0.4).contains(&lr));
        }
    }
}
