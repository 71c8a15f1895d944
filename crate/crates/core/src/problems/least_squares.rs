use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::rng::RngStream;
use crate::vector::ParamVector;

use super::dataset::{FiniteDataset, Labels};
use super::minibatch::SampleProblem;

/// f(θ) = (1/N) Σ ½ (xᵢᵀθ − yᵢ)².
#[derive(Clone, Debug)]
pub struct LeastSquares {
    data: FiniteDataset,
}

impl LeastSquares {
    pub fn new(data: FiniteDataset) -> Result<Self> {
        if data.real_labels().is_none() {
            return Err(Error::invalid("labels", "least squares needs real-valued labels"));
        }
        Ok(Self { data })
    }

    /// Features xᵢⱼ ~ N(0, scalesⱼ²), targets xᵢᵀθ_true + N(0, noise_sd²) with
    /// θ_true standard normal. Returns the problem and θ_true.
    pub fn synthetic(n: usize, scales: &[f64], noise_sd: f64, rng: &mut RngStream) -> Result<(Self, ParamVector)> {
        let d = scales.len();
        let truth = crate::rng::sample_standard_gaussian(rng, d)?;
        let mut features = Vec::with_capacity(n * d);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let start = features.len();
            for s in scales {
                features.push(s * rng.standard_normal());
            }
            let y = crate::vector::dot_slices(&features[start..], &truth) + noise_sd * rng.standard_normal();
            labels.push(y);
        }
        let data = FiniteDataset::new(features, d, Labels::Real(labels))?;
        Ok((Self { data }, truth))
    }

    pub fn data(&self) -> &FiniteDataset {
        &self.data
    }

    /// Solution of the normal equations.
    pub fn minimizer(&self) -> Result<ParamVector> {
        let h = self.gram();
        let y = self.data.real_labels().expect("checked");
        let d = self.data.feature_dim();
        let mut rhs = DVector::zeros(d);
        for (i, yi) in y.iter().enumerate() {
            for (j, x) in self.data.row(i).iter().enumerate() {
                rhs[j] += x * yi / y.len() as f64;
            }
        }
        let chol = h
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite("XᵀX/N is singular".into()))?;
        ParamVector::new(chol.solve(&rhs).iter().copied().collect())
    }

    /// Hessian XᵀX / N of the mean squared loss.
    pub fn gram(&self) -> DMatrix<f64> {
        let (n, d) = (self.data.len(), self.data.feature_dim());
        let mut h = DMatrix::zeros(d, d);
        for i in 0..n {
            let x = self.data.row(i);
            for a in 0..d {
                for b in 0..d {
                    h[(a, b)] += x[a] * x[b];
                }
            }
        }
        h / n as f64
    }
}

impl SampleProblem for LeastSquares {
    fn dim(&self) -> usize {
        self.data.feature_dim()
    }

    fn dataset_size(&self) -> usize {
        self.data.len()
    }

    fn batch_loss_grad(&self, theta: &[f64], batch: &[usize], grad: &mut [f64]) -> Result<f64> {
        check_dim(self.dim(), theta.len())?;
        check_dim(self.dim(), grad.len())?;
        let y = self.data.real_labels().expect("checked");
        grad.fill(0.0);
        let mut loss = 0.0;
        for &i in batch {
            let x = self.data.row(i);
            let r = crate::vector::dot_slices(x, theta) - y[i];
            loss += 0.5 * r * r;
            for (g, xj) in grad.iter_mut().zip(x) {
                *g += r * xj;
            }
        }
        let b = batch.len() as f64;
        for g in grad.iter_mut() {
            *g /= b;
        }
        Ok(loss / b)
    }

    fn has_hessian(&self) -> bool {
        true
    }

    fn hessian(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        check_dim(self.dim(), theta.len())?;
        Ok(self.gram())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::GradientOracle;
    use crate::problems::{fd_gradient_check, MinibatchOracle};

    #[test]
    fn gradient_and_minimizer() {
        let mut rng = RngStream::new(12);
        let (p, truth) = LeastSquares::synthetic(500, &[1.0, 0.5, 2.0, 1.5], 0.1, &mut rng).unwrap();
        let oracle = MinibatchOracle::new(&p, 10).unwrap();
        for _ in 0..20 {
            let theta = crate::rng::sample_standard_gaussian(&mut rng, 4).unwrap();
            assert!(fd_gradient_check(&oracle, &theta, 1e-5).unwrap() < 1e-8);
        }
        let star = p.minimizer().unwrap();
        let g = oracle.full_gradient(&star).unwrap();
        assert!(g.gradient.norm_sq() < 1e-24);
        for (a, b) in star.iter().zip(truth.iter()) {
            assert!((a - b).abs() < 0.05);
        }
    }
}
