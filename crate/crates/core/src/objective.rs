use crate::error::Result;
use crate::params::ParamVector;

/// A differentiable scalar function of a parameter vector.
///
/// Everything downstream (penalty gradients, oracles, probes) is written
/// against this trait so the same code path runs on neural-network losses and
/// on closed-form test problems.
pub trait Objective {
    fn loss(&self, params: &ParamVector) -> Result<f64>;

    fn loss_and_grad(&self, params: &ParamVector) -> Result<(f64, ParamVector)>;

    fn grad(&self, params: &ParamVector) -> Result<ParamVector> {
        Ok(self.loss_and_grad(params)?.1)
    }
}

impl<T: Objective + ?Sized> Objective for &T {
    fn loss(&self, params: &ParamVector) -> Result<f64> {
        (**self).loss(params)
    }

    fn loss_and_grad(&self, params: &ParamVector) -> Result<(f64, ParamVector)> {
        (**self).loss_and_grad(params)
    }
}

/// Objective assembled from a loss closure and a gradient closure.
pub struct FnObjective<L, G> {
    loss: L,
    grad: G,
}

impl<L, G> FnObjective<L, G>
where
    L: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    pub fn new(loss: L, grad: G) -> Self {
        Self { loss, grad }
    }
}

impl<L, G> Objective for FnObjective<L, G>
where
    L: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    fn loss(&self, params: &ParamVector) -> Result<f64> {
        Ok((self.loss)(params.values()))
    }

    fn loss_and_grad(&self, params: &ParamVector) -> Result<(f64, ParamVector)> {
        let g = params.with_values((self.grad)(params.values()))?;
        Ok(((self.loss)(params.values()), g))
    }
}
