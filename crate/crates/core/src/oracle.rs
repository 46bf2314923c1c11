//! Independent ground truth: central finite differences, closed-form
//! quadratics, the exact penalized gradient and the norm-gradient identity.
//!
//! Oracles here never call into the penalty module. Gradients of the loss
//! itself come from loss evaluations only; Hessian-vector products use
//! central differences of autodiff gradients, one order more accurate than
//! the forward difference they validate.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{Error, Result};
use crate::objective::Objective;
use crate::params::ParamVector;

/// Largest parameter count accepted by the O(n) oracles.
pub const MAX_ORACLE_PARAMS: usize = 2000;

/// Largest dense quadratic.
pub const MAX_QUADRATIC_DIM: usize = 64;

/// Default central-difference step for gradients.
pub const DEFAULT_GRAD_STEP: f64 = 1e-5;

/// Default central-difference step for Hessian-vector products.
pub const DEFAULT_HVP_STEP: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdSteps {
    pub grad: f64,
    pub hvp: f64,
}

impl Default for FdSteps {
    fn default() -> Self {
        Self {
            grad: DEFAULT_GRAD_STEP,
            hvp: DEFAULT_HVP_STEP,
        }
    }
}

fn guard(n: usize) -> Result<()> {
    if n > MAX_ORACLE_PARAMS {
        return Err(Error::OracleTooLarge(n, MAX_ORACLE_PARAMS));
    }
    Ok(())
}

/// Central differences per coordinate, with step `h * max(1, |theta_i|)`.
pub fn fd_gradient<F>(loss: F, params: &ParamVector, h: f64) -> Result<ParamVector>
where
    F: Fn(&ParamVector) -> Result<f64>,
{
    guard(params.len())?;
    let mut probe = params.clone();
    let mut out = vec![0.0; params.len()];
    for (i, slot) in out.iter_mut().enumerate() {
        let x = params.values()[i];
        let step = h * x.abs().max(1.0);
        probe.values_mut()[i] = x + step;
        let plus = loss(&probe)?;
        probe.values_mut()[i] = x - step;
        let minus = loss(&probe)?;
        probe.values_mut()[i] = x;
        *slot = (plus - minus) / (2.0 * step);
    }
    params.with_values(out)
}

/// `(grad L(theta + h v) - grad L(theta - h v)) / (2h)`.
pub fn fd_hvp(obj: &impl Objective, params: &ParamVector, v: &ParamVector, h: f64) -> Result<ParamVector> {
    let plus = obj.grad(&params.axpy(h, v)?)?;
    let minus = obj.grad(&params.axpy(-h, v)?)?;
    Ok(plus.sub(&minus)?.scale(1.0 / (2.0 * h)))
}

/// `grad L + lambda * H grad L / ||grad L||`, assembled from finite
/// differences.
pub fn exact_penalized_gradient(
    obj: &impl Objective,
    params: &ParamVector,
    lambda: f64,
    steps: FdSteps,
) -> Result<ParamVector> {
    let g = fd_gradient(|p| obj.loss(p), params, steps.grad)?;
    let norm = g.l2_norm();
    if norm == 0.0 {
        return Err(Error::ZeroGradient);
    }
    let hv = fd_hvp(obj, params, &g.scale(1.0 / norm), steps.hvp)?;
    g.axpy(lambda, &hv)
}

/// Both sides of `grad ||grad L|| = H grad L / ||grad L||`.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityCheck {
    /// Finite-difference gradient of the scalar map `theta -> ||grad L(theta)||`.
    pub lhs: ParamVector,
    /// Finite-difference HVP along the normalized gradient.
    pub rhs: ParamVector,
    pub relative_error: f64,
}

pub fn appendix_identity_check(obj: &impl Objective, params: &ParamVector, steps: FdSteps) -> Result<IdentityCheck> {
    let g = obj.grad(params)?;
    let norm = g.l2_norm();
    if norm == 0.0 {
        return Err(Error::ZeroGradient);
    }
    let lhs = fd_gradient(|p| Ok(obj.grad(p)?.l2_norm()), params, steps.grad)?;
    let rhs = fd_hvp(obj, params, &g.scale(1.0 / norm), steps.hvp)?;
    let relative_error = relative_error(&lhs, &rhs)?;
    Ok(IdentityCheck {
        lhs,
        rhs,
        relative_error,
    })
}

/// `||a - b|| / ||b||` (absolute when `b` is zero).
pub fn relative_error(a: &ParamVector, b: &ParamVector) -> Result<f64> {
    let diff = a.sub(b)?.l2_norm();
    let scale = b.l2_norm();
    Ok(if scale > 0.0 { diff / scale } else { diff })
}

/// Worst per-coordinate relative error, each coordinate measured against
/// `max(|a_i|, |b_i|, floor)`.
pub fn max_coordinate_error(a: &ParamVector, b: &ParamVector, floor: f64) -> Result<f64> {
    a.check_compatible(b)?;
    Ok(a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max))
}

/// `L(theta) = 1/2 (theta - c)^T A (theta - c)` with symmetric `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProblem {
    a: Vec<Vec<f64>>,
    center: Vec<f64>,
}

impl QuadraticProblem {
    pub fn new(a: Vec<Vec<f64>>, center: Option<Vec<f64>>) -> Result<Self> {
        let n = a.len();
        if n == 0 || n > MAX_QUADRATIC_DIM {
            return Err(Error::Shape(format!(
                "quadratic dimension {n} outside 1..={MAX_QUADRATIC_DIM}"
            )));
        }
        if a.iter().any(|row| row.len() != n) {
            return Err(Error::Shape("matrix is not square".into()));
        }
        for i in 0..n {
            for j in 0..i {
                if (a[i][j] - a[j][i]).abs() > 1e-12 {
                    return Err(Error::Shape(format!("matrix not symmetric at ({i},{j})")));
                }
            }
        }
        let center = center.unwrap_or_else(|| vec![0.0; n]);
        if center.len() != n {
            return Err(Error::Shape("center length differs from matrix size".into()));
        }
        Ok(Self { a, center })
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let n = d.len();
        let a = (0..n)
            .map(|i| (0..n).map(|j| if i == j { d[i] } else { 0.0 }).collect())
            .collect();
        Self::new(a, None).expect("diagonal is symmetric")
    }

    /// Random symmetric matrix `Q diag(eigs) Q^T` with a seeded orthogonal `Q`.
    pub fn with_spectrum(eigs: &[f64], seed: u64, center: Option<Vec<f64>>) -> Result<Self> {
        let n = eigs.len();
        let q = random_orthogonal(n, seed);
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..=i {
                let v: f64 = (0..n).map(|k| q[i][k] * eigs[k] * q[j][k]).sum();
                a[i][j] = v;
                a[j][i] = v;
            }
        }
        Self::new(a, center)
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    pub fn matrix(&self) -> &[Vec<f64>] {
        &self.a
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        self.a
            .iter()
            .map(|row| row.iter().zip(v).fold(0.0, |s, (x, y)| s + x * y))
            .collect()
    }

    fn offset(&self, theta: &[f64]) -> Vec<f64> {
        theta.iter().zip(&self.center).map(|(t, c)| t - c).collect()
    }

    /// Closed form `A d + lambda A (A d) / ||A d||` with `d = theta - c`.
    pub fn exact_penalized_gradient(&self, params: &ParamVector, lambda: f64) -> Result<ParamVector> {
        let g = self.matvec(&self.offset(params.values()));
        let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroGradient);
        }
        let hg = self.matvec(&g);
        params.with_values(g.iter().zip(&hg).map(|(gi, hi)| gi + lambda * hi / norm).collect())
    }

    /// `A^2 d / ||A d||`, the gradient of `||grad L||`.
    pub fn grad_norm_gradient(&self, params: &ParamVector) -> Result<ParamVector> {
        let g = self.matvec(&self.offset(params.values()));
        let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroGradient);
        }
        params.with_values(self.matvec(&g).iter().map(|v| v / norm).collect())
    }
}

impl Objective for QuadraticProblem {
    fn loss(&self, params: &ParamVector) -> Result<f64> {
        if params.len() != self.dim() {
            return Err(Error::Shape(format!(
                "{} parameters for a {}-dim quadratic",
                params.len(),
                self.dim()
            )));
        }
        let d = self.offset(params.values());
        let ad = self.matvec(&d);
        Ok(0.5 * d.iter().zip(&ad).fold(0.0, |s, (x, y)| s + x * y))
    }

    fn loss_and_grad(&self, params: &ParamVector) -> Result<(f64, ParamVector)> {
        let loss = self.loss(params)?;
        let g = self.matvec(&self.offset(params.values()));
        Ok((loss, params.with_values(g)?))
    }
}

/// Gram-Schmidt on a seeded uniform matrix.
fn random_orthogonal(n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Uniform::new(-1.0, 1.0);
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    while cols.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| dist.sample(&mut rng)).collect();
        for c in &cols {
            let d: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(c).for_each(|(a, b)| *a -= d * b);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            cols.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    // cols[k] is the k-th eigenvector; return row-major Q with Q[i][k].
    (0..n).map(|i| (0..n).map(|k| cols[k][i]).collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::FnObjective;

    fn half_sq() -> impl Objective {
        FnObjective::new(
            |x: &[f64]| 0.5 * x.iter().map(|v| v * v).sum::<f64>(),
            |x: &[f64]| x.to_vec(),
        )
    }

    #[test]
    fn fd_gradient_basic() {
        let obj = half_sq();
        let theta = ParamVector::from_vec(vec![1.0, 2.0]);
        let g = fd_gradient(|p| obj.loss(p), &theta, DEFAULT_GRAD_STEP).unwrap();
        assert!((g.values()[0] - 1.0).abs() < 1e-8);
        assert!((g.values()[1] - 2.0).abs() < 1e-8);

        let g = fd_gradient(|_| Ok(3.0), &theta, DEFAULT_GRAD_STEP).unwrap();
        assert!(g.values().iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn fd_gradient_cubic_accuracy() {
        let cubic = |p: &ParamVector| {
            let x = p.values();
            Ok(x[0].powi(3) - 2.0 * x[0] * x[1] + 0.5 * x[1].powi(2) + x[2])
        };
        let theta = ParamVector::from_vec(vec![0.7, -0.3, 0.2]);
        let g = fd_gradient(cubic, &theta, 1e-5).unwrap();
        let (x, y) = (0.7, -0.3);
        let exact = [3.0 * x * x - 2.0 * y, -2.0 * x + y, 1.0];
        for i in 0..3 {
            assert!((g.values()[i] - exact[i]).abs() <= 1e-8, "coordinate {i}");
        }
    }

    #[test]
    fn fd_gradient_size_guard() {
        let theta = ParamVector::from_vec(vec![0.0; MAX_ORACLE_PARAMS + 1]);
        assert!(matches!(
            fd_gradient(|_| Ok(0.0), &theta, 1e-5),
            Err(Error::OracleTooLarge(..))
        ));
    }

    #[test]
    fn fd_hvp_diagonal() {
        let q = QuadraticProblem::diagonal(&[1.0, 4.0]);
        let theta = ParamVector::from_vec(vec![0.5, -0.5]);
        let e1 = fd_hvp(&q, &theta, &ParamVector::from_vec(vec![1.0, 0.0]), 1e-4).unwrap();
        let e2 = fd_hvp(&q, &theta, &ParamVector::from_vec(vec![0.0, 1.0]), 1e-4).unwrap();
        assert!((e1.values()[0] - 1.0).abs() < 1e-10 && e1.values()[1].abs() < 1e-10);
        assert!(e2.values()[0].abs() < 1e-10 && (e2.values()[1] - 4.0).abs() < 1e-10);
        let zero = fd_hvp(&q, &theta, &ParamVector::from_vec(vec![0.0, 0.0]), 1e-4).unwrap();
        assert_eq!(zero.values(), &[0.0, 0.0]);
    }

    #[test]
    fn fd_hvp_random_symmetric() {
        let n = 12;
        let eigs: Vec<f64> = (0..n).map(|i| (i as f64) - 4.5).collect();
        let q = QuadraticProblem::with_spectrum(&eigs, 17, Some(vec![0.3; n])).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dist = Uniform::new(-1.0, 1.0);
        let theta = ParamVector::from_vec((0..n).map(|_| dist.sample(&mut rng)).collect());
        let v = ParamVector::from_vec((0..n).map(|_| dist.sample(&mut rng)).collect());
        let exact = theta.with_values(q.matvec(v.values())).unwrap();
        for h in [1e-2, 1e-4, 1.0] {
            let hv = fd_hvp(&q, &theta, &v, h).unwrap();
            assert!(relative_error(&hv, &exact).unwrap() < 1e-10, "h = {h}");
        }
    }

    #[test]
    fn spectrum_construction_is_symmetric_with_given_eigs() {
        let q = QuadraticProblem::with_spectrum(&[3.0, 1.0, -2.0], 1, None).unwrap();
        let a = q.matrix();
        let trace: f64 = (0..3).map(|i| a[i][i]).sum();
        assert!((trace - 2.0).abs() < 1e-12);
    }

    #[test]
    fn non_symmetric_rejected() {
        assert!(QuadraticProblem::new(vec![vec![1.0, 2.0], vec![0.0, 1.0]], None).is_err());
        assert!(QuadraticProblem::new(vec![vec![1.0; 65]; 65], None).is_err());
    }

    #[test]
    fn exact_gradient_closed_form() {
        let q = QuadraticProblem::diagonal(&[1.0, 4.0]);
        let theta = ParamVector::from_vec(vec![1.0, 1.0]);
        let g = q.exact_penalized_gradient(&theta, 0.08).unwrap();
        assert!((g.values()[0] - 1.0194029).abs() < 2e-7);
        assert!((g.values()[1] - 4.3104457).abs() < 2e-7);

        let fd = exact_penalized_gradient(&q, &theta, 0.08, FdSteps::default()).unwrap();
        assert!(relative_error(&fd, &g).unwrap() < 1e-9);

        let plain = exact_penalized_gradient(&q, &theta, 0.0, FdSteps::default()).unwrap();
        let fdg = fd_gradient(|p| q.loss(p), &theta, DEFAULT_GRAD_STEP).unwrap();
        assert_eq!(plain, fdg);
    }

    #[test]
    fn zero_gradient_is_an_error() {
        let q = QuadraticProblem::diagonal(&[1.0, 4.0]);
        let origin = ParamVector::from_vec(vec![0.0, 0.0]);
        assert_eq!(
            q.exact_penalized_gradient(&origin, 0.1).unwrap_err(),
            Error::ZeroGradient
        );
        assert_eq!(
            exact_penalized_gradient(&q, &origin, 0.1, FdSteps::default()).unwrap_err(),
            Error::ZeroGradient
        );
        assert_eq!(
            appendix_identity_check(&q, &origin, FdSteps::default()).unwrap_err(),
            Error::ZeroGradient
        );
    }

    #[test]
    fn identity_on_quadratic() {
        let q = QuadraticProblem::diagonal(&[1.0, 4.0]);
        let s = 17f64.sqrt();
        for c in [1.0, -2.0, 0.3] {
            let theta = ParamVector::from_vec(vec![c, c]);
            let check = appendix_identity_check(&q, &theta, FdSteps::default()).unwrap();
            assert!(check.relative_error < 1e-6, "c = {c}: {}", check.relative_error);
            let sign = c.signum();
            assert!((check.rhs.values()[0] - sign / s).abs() < 1e-6);
            assert!((check.rhs.values()[1] - sign * 16.0 / s).abs() < 1e-6);
            assert!((grad_norm(&q, &theta) - c.abs() * s).abs() < 1e-12);
        }
        let theta = ParamVector::from_vec(vec![1.0, 1.0]);
        let closed = q.grad_norm_gradient(&theta).unwrap();
        assert!((closed.values()[0] - 0.242536).abs() < 1e-6);
        assert!((closed.values()[1] - 3.880571).abs() < 1e-6);
    }

    fn grad_norm(q: &QuadraticProblem, theta: &ParamVector) -> f64 {
        q.grad(theta).unwrap().l2_norm()
    }
}
