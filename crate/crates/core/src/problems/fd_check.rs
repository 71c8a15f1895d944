use crate::error::{check_dim, Error, Result};
use crate::oracle::GradientOracle;
use crate::vector::ParamVector;

/// Worst relative error between the analytic gradient and central differences.
///
/// Per coordinate the error is |fd − g| / max(|fd|, 1).
pub fn fd_gradient_check(oracle: &dyn GradientOracle, theta: &ParamVector, h: f64) -> Result<f64> {
    if !oracle.capabilities().has_full_gradient {
        return Err(Error::Unsupported("finite-difference checks on an oracle without full gradients"));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::invalid("h", format!("{h} must be finite and > 0")));
    }
    check_dim(oracle.dim(), theta.dim())?;
    let n = theta.dim();
    let mut grad = vec![0.0; n];
    oracle.full_gradient_into(theta, &mut grad)?;
    let mut probe = theta.as_slice().to_vec();
    let mut scratch = vec![0.0; n];
    let mut worst = 0.0f64;
    for i in 0..n {
        let x = probe[i];
        probe[i] = x + h;
        let up = oracle.full_gradient_into(&probe, &mut scratch)?;
        probe[i] = x - h;
        let dn = oracle.full_gradient_into(&probe, &mut scratch)?;
        probe[i] = x;
        let fd = (up - dn) / (2.0 * h);
        let err = (fd - grad[i]).abs() / fd.abs().max(1.0);
        worst = worst.max(err);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::Capabilities;
    use crate::rng::RngStream;

    struct Linear {
        c: Vec<f64>,
        corrupt: Option<usize>,
    }

    impl GradientOracle for Linear {
        fn dim(&self) -> usize {
            self.c.len()
        }
        fn capabilities(&self) -> Capabilities {
            Capabilities {
                has_full_gradient: true,
                ..Capabilities::default()
            }
        }
        fn full_gradient_into(&self, theta: &[f64], grad: &mut [f64]) -> Result<f64> {
            grad.copy_from_slice(&self.c);
            if let Some(i) = self.corrupt {
                grad[i] *= 1.1;
            }
            Ok(crate::vector::dot_slices(&self.c, theta))
        }
        fn stochastic_gradient_into(&self, theta: &[f64], _: &mut RngStream, grad: &mut [f64]) -> Result<Option<f64>> {
            self.full_gradient_into(theta, grad).map(Some)
        }
    }

    #[test]
    fn linear_function_is_exact() {
        let f = Linear { c: vec![3.0, -2.0, 0.5], corrupt: None };
        let theta = ParamVector::new(vec![0.1, 0.2, 0.3]).unwrap();
        assert!(fd_gradient_check(&f, &theta, 1e-5).unwrap() < 1e-9);
    }

    #[test]
    fn planted_fault_is_detected() {
        let f = Linear { c: vec![3.0, -2.0, 0.5], corrupt: Some(0) };
        let theta = ParamVector::new(vec![0.1, 0.2, 0.3]).unwrap();
        let err = fd_gradient_check(&f, &theta, 1e-5).unwrap();
        assert!((err - 0.1).abs() < 1e-6, "{err}");
    }

    #[test]
    fn rejects_bad_step() {
        let f = Linear { c: vec![1.0], corrupt: None };
        let theta = ParamVector::new(vec![0.0]).unwrap();
        assert!(fd_gradient_check(&f, &theta, 0.0).is_err());
    }
}
