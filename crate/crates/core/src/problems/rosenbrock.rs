use nalgebra::DMatrix;

use crate::error::{check_dim, Result};
use crate::oracle::{Capabilities, GradientOracle};
use crate::rng::RngStream;
use crate::vector::ParamVector;

/// f(x, y) = (1 − x)² + 100 (y − x²)².
#[derive(Clone, Copy, Debug, Default)]
pub struct Rosenbrock;

fn eval_into(theta: &[f64], grad: &mut [f64]) -> f64 {
    let (x, y) = (theta[0], theta[1]);
    let r = y - x * x;
    grad[0] = -2.0 * (1.0 - x) - 400.0 * x * r;
    grad[1] = 200.0 * r;
    (1.0 - x).powi(2) + 100.0 * r * r
}

pub fn rosenbrock_eval(theta: &ParamVector) -> Result<(f64, ParamVector)> {
    check_dim(2, theta.dim())?;
    let mut grad = vec![0.0; 2];
    let loss = eval_into(theta, &mut grad);
    Ok((loss, ParamVector::new(grad)?))
}

impl GradientOracle for Rosenbrock {
    fn dim(&self) -> usize {
        2
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            has_full_gradient: true,
            has_hessian: true,
            ..Capabilities::default()
        }
    }

    fn full_gradient_into(&self, theta: &[f64], grad: &mut [f64]) -> Result<f64> {
        check_dim(2, theta.len())?;
        check_dim(2, grad.len())?;
        Ok(eval_into(theta, grad))
    }

    fn stochastic_gradient_into(&self, theta: &[f64], _rng: &mut RngStream, grad: &mut [f64]) -> Result<Option<f64>> {
        self.full_gradient_into(theta, grad).map(Some)
    }

    fn hessian(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        check_dim(2, theta.len())?;
        let (x, y) = (theta[0], theta[1]);
        Ok(DMatrix::from_row_slice(
            2,
            2,
            &[2.0 - 400.0 * (y - x * x) + 800.0 * x * x, -400.0 * x, -400.0 * x, 200.0],
        ))
    }
}
