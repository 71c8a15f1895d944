use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{check_dim, Error, Result};
use crate::oracle::{Capabilities, GradientOracle};
use crate::rng::RngStream;

use super::quadratic::check_symmetric;

/// Zero-mean gradient noise ξ.
#[derive(Clone, Debug)]
pub enum NoiseModel {
    /// ξ ~ N(0, σ² I).
    Isotropic { variance: f64 },
    /// ξ = S z with S Sᵀ = C and z standard normal.
    Gaussian { covariance: DMatrix<f64>, factor: DMatrix<f64> },
    /// Independent U[−a, a] per coordinate; bounded noise.
    Uniform { half_width: f64 },
}

impl NoiseModel {
    pub fn isotropic(variance: f64) -> Result<Self> {
        if !(variance >= 0.0 && variance.is_finite()) {
            return Err(Error::invalid("variance", format!("{variance} must be finite and >= 0")));
        }
        Ok(Self::Isotropic { variance })
    }

    /// Accepts any symmetric positive-semidefinite covariance.
    pub fn gaussian(covariance: DMatrix<f64>) -> Result<Self> {
        check_symmetric(&covariance, 1e-12)?;
        let factor = match covariance.clone().cholesky() {
            Some(ch) => ch.l(),
            None => {
                let eig = SymmetricEigen::new(covariance.clone());
                let scale = eig.eigenvalues.amax().max(1.0);
                if eig.eigenvalues.iter().any(|&l| l < -1e-10 * scale) {
                    return Err(Error::NotPositiveDefinite("noise covariance has a negative eigenvalue".into()));
                }
                let sqrt = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
                &eig.eigenvectors * DMatrix::from_diagonal(&sqrt)
            }
        };
        Ok(Self::Gaussian { covariance, factor })
    }

    pub fn uniform(half_width: f64) -> Result<Self> {
        if !(half_width >= 0.0 && half_width.is_finite()) {
            return Err(Error::invalid("half_width", format!("{half_width} must be finite and >= 0")));
        }
        Ok(Self::Uniform { half_width })
    }

    /// Cov(ξ) for a `dim`-dimensional oracle.
    pub fn covariance(&self, dim: usize) -> DMatrix<f64> {
        match self {
            Self::Isotropic { variance } => DMatrix::identity(dim, dim) * *variance,
            Self::Gaussian { covariance, .. } => covariance.clone(),
            Self::Uniform { half_width } => DMatrix::identity(dim, dim) * (half_width * half_width / 3.0),
        }
    }

    /// E‖ξ‖².
    pub fn total_variance(&self, dim: usize) -> f64 {
        self.covariance(dim).trace()
    }

    /// Adds one draw of ξ to `out`.
    pub fn add_sample(&self, rng: &mut RngStream, out: &mut [f64]) {
        match self {
            Self::Isotropic { variance } => {
                let sd = variance.sqrt();
                for o in out.iter_mut() {
                    *o += sd * rng.standard_normal();
                }
            }
            Self::Gaussian { factor, .. } => {
                let n = out.len();
                let mut stack = [0.0f64; 32];
                let mut heap;
                let z: &mut [f64] = if n <= stack.len() {
                    &mut stack[..n]
                } else {
                    heap = vec![0.0; n];
                    &mut heap
                };
                rng.fill_standard_normal(z);
                for (i, o) in out.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for (j, zj) in z.iter().enumerate() {
                        acc += factor[(i, j)] * zj;
                    }
                    *o += acc;
                }
            }
            Self::Uniform { half_width } => {
                for o in out.iter_mut() {
                    *o += half_width * (2.0 * rng.uniform() - 1.0);
                }
            }
        }
    }

    fn check(&self, dim: usize) -> Result<()> {
        if let Self::Gaussian { covariance, .. } = self {
            check_dim(dim, covariance.nrows())?;
        }
        Ok(())
    }
}

/// Stochastic gradient ∇f(θ) + ξ around a deterministic base oracle.
#[derive(Clone, Debug)]
pub struct AdditiveNoiseOracle<O> {
    base: O,
    noise: NoiseModel,
}

impl<O: GradientOracle> AdditiveNoiseOracle<O> {
    pub fn new(base: O, noise: NoiseModel) -> Result<Self> {
        noise.check(base.dim())?;
        if !base.capabilities().has_full_gradient {
            return Err(Error::invalid("base", "additive noise needs an oracle with full gradients"));
        }
        Ok(Self { base, noise })
    }

    pub fn base(&self) -> &O {
        &self.base
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    pub fn noise_covariance(&self) -> DMatrix<f64> {
        self.noise.covariance(self.base.dim())
    }
}

impl<O: GradientOracle> GradientOracle for AdditiveNoiseOracle<O> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn capabilities(&self) -> Capabilities {
        self.base.capabilities()
    }

    fn full_gradient_into(&self, theta: &[f64], grad: &mut [f64]) -> Result<f64> {
        self.base.full_gradient_into(theta, grad)
    }

    fn stochastic_gradient_into(&self, theta: &[f64], rng: &mut RngStream, grad: &mut [f64]) -> Result<Option<f64>> {
        let loss = self.base.full_gradient_into(theta, grad)?;
        self.noise.add_sample(rng, grad);
        Ok(Some(loss))
    }

    fn hessian(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        self.base.hessian(theta)
    }
}

/// ∇f ≡ 0 with i.i.d. N(0, σ²) gradient noise. There is no loss.
#[derive(Clone, Copy, Debug)]
pub struct PureNoiseOracle {
    dim: usize,
    sd: f64,
}

impl PureNoiseOracle {
    pub fn new(dim: usize, variance: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dim", "must be >= 1"));
        }
        if !(variance >= 0.0 && variance.is_finite()) {
            return Err(Error::invalid("variance", format!("{variance} must be finite and >= 0")));
        }
        Ok(Self { dim, sd: variance.sqrt() })
    }

    pub fn variance(&self) -> f64 {
        self.sd * self.sd
    }
}

impl GradientOracle for PureNoiseOracle {
    fn dim(&self) -> usize {
        self.dim
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            has_full_gradient: true,
            ..Capabilities::default()
        }
    }

    fn full_gradient_into(&self, theta: &[f64], grad: &mut [f64]) -> Result<f64> {
        check_dim(self.dim, theta.len())?;
        check_dim(self.dim, grad.len())?;
        grad.fill(0.0);
        Ok(0.0)
    }

    fn stochastic_gradient_into(&self, theta: &[f64], rng: &mut RngStream, grad: &mut [f64]) -> Result<Option<f64>> {
        check_dim(self.dim, theta.len())?;
        check_dim(self.dim, grad.len())?;
        rng.fill_standard_normal(grad);
        if self.sd != 1.0 {
            for g in grad.iter_mut() {
                *g *= self.sd;
            }
        }
        Ok(None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::QuadraticModel;
    use crate::vector::ParamVector;

    #[test]
    fn gaussian_noise_has_requested_covariance() {
        let c = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 0.5]);
        let noise = NoiseModel::gaussian(c.clone()).unwrap();
        let mut rng = RngStream::new(3);
        let n = 200_000;
        let mut acc = DMatrix::<f64>::zeros(2, 2);
        let mut mean = [0.0; 2];
        for _ in 0..n {
            let mut x = [0.0; 2];
            noise.add_sample(&mut rng, &mut x);
            for i in 0..2 {
                mean[i] += x[i] / n as f64;
                for j in 0..2 {
                    acc[(i, j)] += x[i] * x[j] / n as f64;
                }
            }
        }
        for i in 0..2 {
            assert!(mean[i].abs() < 5.0 * (c[(i, i)] / n as f64).sqrt());
            for j in 0..2 {
                // Var(x_i x_j) = C_ii C_jj + C_ij²
                let se = ((c[(i, i)] * c[(j, j)] + c[(i, j)].powi(2)) / n as f64).sqrt();
                assert!((acc[(i, j)] - c[(i, j)]).abs() < 5.0 * se, "{i}{j}");
            }
        }
    }

    #[test]
    fn semidefinite_covariance_is_accepted() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let noise = NoiseModel::gaussian(c).unwrap();
        let mut rng = RngStream::new(1);
        let mut x = [0.0; 2];
        noise.add_sample(&mut rng, &mut x);
        assert!((x[0] - x[1]).abs() < 1e-12);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(NoiseModel::gaussian(bad).is_err());
    }

    #[test]
    fn uniform_noise_is_bounded_with_variance_a2_over_3() {
        let noise = NoiseModel::uniform(0.5).unwrap();
        let mut rng = RngStream::new(2);
        let n = 100_000;
        let mut sq = 0.0;
        for _ in 0..n {
            let mut x = [0.0];
            noise.add_sample(&mut rng, &mut x);
            assert!(x[0].abs() <= 0.5);
            sq += x[0] * x[0];
        }
        let expect = 0.25 / 3.0;
        assert!((sq / n as f64 - expect).abs() < 0.01 * expect);
        assert_eq!(noise.covariance(1)[(0, 0)], expect);
    }

    #[test]
    fn additive_oracle_is_unbiased() {
        let base = QuadraticModel::isotropic(ParamVector::new(vec![1.0, -1.0]).unwrap(), 2.0).unwrap();
        let oracle = AdditiveNoiseOracle::new(base, NoiseModel::isotropic(4.0).unwrap()).unwrap();
        let mut rng = RngStream::new(8);
        let theta = [0.0, 0.0];
        let n = 100_000;
        let mut mean = [0.0; 2];
        let mut g = [0.0; 2];
        for _ in 0..n {
            oracle.stochastic_gradient_into(&theta, &mut rng, &mut g).unwrap();
            mean[0] += g[0] / n as f64;
            mean[1] += g[1] / n as f64;
        }
        let se = (4.0 / n as f64).sqrt();
        assert!((mean[0] + 2.0).abs() < 5.0 * se);
        assert!((mean[1] - 2.0).abs() < 5.0 * se);
    }

    #[test]
    fn pure_noise_has_no_loss_and_zero_mean_gradient() {
        let oracle = PureNoiseOracle::new(3, 1.0).unwrap();
        let mut rng = RngStream::new(0);
        let mut g = [0.0; 3];
        assert_eq!(oracle.stochastic_gradient_into(&[0.0; 3], &mut rng, &mut g).unwrap(), None);
        oracle.full_gradient_into(&[0.0; 3], &mut g).unwrap();
        assert_eq!(g, [0.0; 3]);
        assert!(PureNoiseOracle::new(0, 1.0).is_err());
    }
}
