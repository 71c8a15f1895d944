use nalgebra::DMatrix;

use crate::error::{check_dim, Error, Result};
use crate::oracle::{Capabilities, GradientOracle};
use crate::rng::RngStream;
use crate::vector::{GradientSample, ParamVector};

/// A loss that is a mean over the N rows of a finite dataset.
pub trait SampleProblem: Send + Sync {
    fn dim(&self) -> usize;

    fn dataset_size(&self) -> usize;

    /// Writes the mean gradient over `batch` into `grad`; returns the mean loss.
    fn batch_loss_grad(&self, theta: &[f64], batch: &[usize], grad: &mut [f64]) -> Result<f64>;

    fn has_hessian(&self) -> bool {
        false
    }

    /// Hessian of the full-data loss.
    fn hessian(&self, _theta: &[f64]) -> Result<DMatrix<f64>> {
        Err(Error::Unsupported("a Hessian"))
    }
}

impl<P: SampleProblem + ?Sized> SampleProblem for &P {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn dataset_size(&self) -> usize {
        (**self).dataset_size()
    }
    fn batch_loss_grad(&self, theta: &[f64], batch: &[usize], grad: &mut [f64]) -> Result<f64> {
        (**self).batch_loss_grad(theta, batch, grad)
    }
    fn has_hessian(&self) -> bool {
        (**self).has_hessian()
    }
    fn hessian(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        (**self).hessian(theta)
    }
}

/// Minibatch gradients over a [`SampleProblem`].
///
/// Each call draws B distinct rows uniformly; successive calls are
/// independent. Indices are sorted before evaluation so B = N sums in the
/// same order as the full gradient.
#[derive(Clone, Debug)]
pub struct MinibatchOracle<P> {
    problem: P,
    batch_size: usize,
    all: Vec<usize>,
}

impl<P: SampleProblem> MinibatchOracle<P> {
    pub fn new(problem: P, batch_size: usize) -> Result<Self> {
        let n = problem.dataset_size();
        if batch_size == 0 || batch_size > n {
            return Err(Error::invalid("batch_size", format!("{batch_size} must lie in 1..={n}")));
        }
        Ok(Self {
            all: (0..n).collect(),
            problem,
            batch_size,
        })
    }

    pub fn problem(&self) -> &P {
        &self.problem
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn sample_batch(&self, rng: &mut RngStream) -> Vec<usize> {
        let mut idx = rng.sample_indices(self.all.len(), self.batch_size);
        idx.sort_unstable();
        idx
    }
}

impl<P: SampleProblem> GradientOracle for MinibatchOracle<P> {
    fn dim(&self) -> usize {
        self.problem.dim()
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            has_full_gradient: true,
            has_hessian: self.problem.has_hessian(),
            dataset_size: Some(self.all.len()),
            batch_size: Some(self.batch_size),
        }
    }

    fn full_gradient_into(&self, theta: &[f64], grad: &mut [f64]) -> Result<f64> {
        check_dim(self.dim(), theta.len())?;
        check_dim(self.dim(), grad.len())?;
        self.problem.batch_loss_grad(theta, &self.all, grad)
    }

    fn stochastic_gradient_into(&self, theta: &[f64], rng: &mut RngStream, grad: &mut [f64]) -> Result<Option<f64>> {
        check_dim(self.dim(), theta.len())?;
        check_dim(self.dim(), grad.len())?;
        let batch = self.sample_batch(rng);
        self.problem.batch_loss_grad(theta, &batch, grad).map(Some)
    }

    fn hessian(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        self.problem.hessian(theta)
    }
}

/// One minibatch gradient of size `batch_size`.
pub fn minibatch_gradient<P: SampleProblem>(
    problem: &P,
    theta: &ParamVector,
    batch_size: usize,
    rng: &mut RngStream,
) -> Result<GradientSample> {
    MinibatchOracle::new(problem, batch_size)?.stochastic_gradient(theta, rng)
}
