use nalgebra::DMatrix;

use crate::error::{check_dim, Error, Result};

use super::dataset::FiniteDataset;
use super::minibatch::SampleProblem;

/// Binary logistic regression with a bias stored as the last parameter.
///
/// Per-sample loss is softplus(z) − y z with z = wᵀx + b and y ∈ {0, 1}.
#[derive(Clone, Debug)]
pub struct LogisticRegression {
    data: FiniteDataset,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

impl LogisticRegression {
    pub fn new(data: FiniteDataset) -> Result<Self> {
        if data.classes() != Some(2) {
            return Err(Error::invalid("labels", "logistic regression needs two classes"));
        }
        Ok(Self { data })
    }

    pub fn data(&self) -> &FiniteDataset {
        &self.data
    }

    fn logit(&self, theta: &[f64], i: usize) -> f64 {
        let d = self.data.feature_dim();
        crate::vector::dot_slices(self.data.row(i), &theta[..d]) + theta[d]
    }
}

impl SampleProblem for LogisticRegression {
    fn dim(&self) -> usize {
        self.data.feature_dim() + 1
    }

    fn dataset_size(&self) -> usize {
        self.data.len()
    }

    fn batch_loss_grad(&self, theta: &[f64], batch: &[usize], grad: &mut [f64]) -> Result<f64> {
        check_dim(self.dim(), theta.len())?;
        check_dim(self.dim(), grad.len())?;
        let labels = self.data.class_labels().expect("checked");
        let d = self.data.feature_dim();
        grad.fill(0.0);
        let mut loss = 0.0;
        for &i in batch {
            let z = self.logit(theta, i);
            let y = labels[i] as f64;
            loss += softplus(z) - y * z;
            let r = sigmoid(z) - y;
            for (g, x) in grad[..d].iter_mut().zip(self.data.row(i)) {
                *g += r * x;
            }
            grad[d] += r;
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
        let (n, d) = (self.data.len(), self.data.feature_dim());
        let mut h = DMatrix::zeros(d + 1, d + 1);
        let mut xa = vec![1.0; d + 1];
        for i in 0..n {
            let s = sigmoid(self.logit(theta, i));
            let w = s * (1.0 - s);
            xa[..d].copy_from_slice(self.data.row(i));
            for a in 0..=d {
                for b in 0..=d {
                    h[(a, b)] += w * xa[a] * xa[b];
                }
            }
        }
        Ok(h / n as f64)
    }
}
