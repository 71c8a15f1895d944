//! The gradient-oracle contract shared by problems, optimizers and analyses.

use nalgebra::DMatrix;

use crate::error::{check_dim, Error, Result};
use crate::rng::RngStream;
use crate::vector::{GradientSample, ParamVector};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Capabilities {
    pub has_full_gradient: bool,
    pub has_hessian: bool,
    /// Training-set size N for dataset-backed oracles.
    pub dataset_size: Option<usize>,
    /// Minibatch size B for dataset-backed oracles.
    pub batch_size: Option<usize>,
}

/// Source of full gradients ∇f(θ) and stochastic gradients ∇f(θ) + ξ.
///
/// The `*_into` methods write into caller-owned buffers so long simulations do
/// not allocate per step.
pub trait GradientOracle: Send + Sync {
    fn dim(&self) -> usize;

    fn capabilities(&self) -> Capabilities;

    /// Writes ∇f(θ) into `grad` and returns f(θ).
    fn full_gradient_into(&self, theta: &[f64], grad: &mut [f64]) -> Result<f64>;

    /// Writes one stochastic gradient into `grad`; returns the associated loss
    /// if the oracle has one.
    fn stochastic_gradient_into(
        &self,
        theta: &[f64],
        rng: &mut RngStream,
        grad: &mut [f64],
    ) -> Result<Option<f64>>;

    fn hessian(&self, _theta: &[f64]) -> Result<DMatrix<f64>> {
        Err(Error::Unsupported("a Hessian"))
    }

    fn full_gradient(&self, theta: &ParamVector) -> Result<GradientSample> {
        check_dim(self.dim(), theta.dim())?;
        let mut grad = vec![0.0; self.dim()];
        let loss = self.full_gradient_into(theta, &mut grad)?;
        Ok(GradientSample {
            gradient: ParamVector::new(grad)?,
            loss: Some(loss),
        })
    }

    fn stochastic_gradient(&self, theta: &ParamVector, rng: &mut RngStream) -> Result<GradientSample> {
        check_dim(self.dim(), theta.dim())?;
        let mut grad = vec![0.0; self.dim()];
        let loss = self.stochastic_gradient_into(theta, rng, &mut grad)?;
        Ok(GradientSample {
            gradient: ParamVector::new(grad)?,
            loss,
        })
    }

    fn loss(&self, theta: &[f64]) -> Result<f64> {
        let mut grad = vec![0.0; self.dim()];
        self.full_gradient_into(theta, &mut grad)
    }
}

impl<O: GradientOracle + ?Sized> GradientOracle for Box<O> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn capabilities(&self) -> Capabilities {
        (**self).capabilities()
    }
    fn full_gradient_into(&self, theta: &[f64], grad: &mut [f64]) -> Result<f64> {
        (**self).full_gradient_into(theta, grad)
    }
    fn stochastic_gradient_into(
        &self,
        theta: &[f64],
        rng: &mut RngStream,
        grad: &mut [f64],
    ) -> Result<Option<f64>> {
        (**self).stochastic_gradient_into(theta, rng, grad)
    }
    fn hessian(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        (**self).hessian(theta)
    }
}

impl<O: GradientOracle + ?Sized> GradientOracle for &O {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn capabilities(&self) -> Capabilities {
        (**self).capabilities()
    }
    fn full_gradient_into(&self, theta: &[f64], grad: &mut [f64]) -> Result<f64> {
        (**self).full_gradient_into(theta, grad)
    }
    fn stochastic_gradient_into(
        &self,
        theta: &[f64],
        rng: &mut RngStream,
        grad: &mut [f64],
    ) -> Result<Option<f64>> {
        (**self).stochastic_gradient_into(theta, rng, grad)
    }
    fn hessian(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        (**self).hessian(theta)
    }
}
