use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::rng::RngStream;
use crate::vector::ParamVector;

use super::dataset::FiniteDataset;
use super::minibatch::SampleProblem;

/// d → hidden → K network with a tanh hidden layer and softmax cross-entropy.
///
/// Parameters are packed as [W₁ (hidden×d, row-major), b₁, W₂ (K×hidden), b₂].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TinyMlp {
    pub input_dim: usize,
    pub hidden: usize,
    pub classes: usize,
}

impl TinyMlp {
    pub fn new(input_dim: usize, hidden: usize, classes: usize) -> Result<Self> {
        let m = Self {
            input_dim,
            hidden,
            classes,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden == 0 {
            return Err(Error::invalid("mlp", "input and hidden widths must be >= 1"));
        }
        if self.classes < 2 {
            return Err(Error::invalid("classes", "need at least two classes"));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        let (d, h, k) = (self.input_dim, self.hidden, self.classes);
        h * d + h + k * h + k
    }

    /// W₁ ~ N(0, 1/d), W₂ ~ N(0, 1/hidden), zero biases.
    pub fn init(&self, rng: &mut RngStream) -> ParamVector {
        let (d, h, k) = (self.input_dim, self.hidden, self.classes);
        let mut theta = vec![0.0; self.param_count()];
        let s1 = (1.0 / d as f64).sqrt();
        for w in &mut theta[..h * d] {
            *w = s1 * rng.standard_normal();
        }
        let s2 = (1.0 / h as f64).sqrt();
        let off = h * d + h;
        for w in &mut theta[off..off + k * h] {
            *w = s2 * rng.standard_normal();
        }
        ParamVector::new(theta).expect("finite and non-empty")
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let (d, h, k) = (self.input_dim, self.hidden, self.classes);
        (h * d, h * d + h, h * d + h + k * h)
    }

    fn forward(&self, theta: &[f64], x: &[f64], hidden: &mut [f64], logits: &mut [f64]) {
        let (d, h) = (self.input_dim, self.hidden);
        let (b1, w2, b2) = self.offsets();
        for j in 0..h {
            let w = &theta[j * d..(j + 1) * d];
            hidden[j] = (crate::vector::dot_slices(w, x) + theta[b1 + j]).tanh();
        }
        for (c, z) in logits.iter_mut().enumerate() {
            let w = &theta[w2 + c * h..w2 + (c + 1) * h];
            *z = crate::vector::dot_slices(w, hidden) + theta[b2 + c];
        }
    }

    pub fn predict(&self, theta: &[f64], x: &[f64]) -> usize {
        let mut hidden = vec![0.0; self.hidden];
        let mut logits = vec![0.0; self.classes];
        self.forward(theta, x, &mut hidden, &mut logits);
        argmax(&logits)
    }

    /// Fraction of rows whose predicted class differs from the label, over
    /// the rows where `keep` is true (all rows when `keep` is None).
    pub fn error_rate(&self, theta: &[f64], data: &FiniteDataset, keep: Option<&[bool]>) -> Result<f64> {
        check_dim(self.param_count(), theta.len())?;
        check_dim(self.input_dim, data.feature_dim())?;
        let labels = data
            .class_labels()
            .ok_or_else(|| Error::invalid("labels", "error rate needs class labels"))?;
        let (mut wrong, mut total) = (0usize, 0usize);
        for (i, &y) in labels.iter().enumerate() {
            if keep.is_some_and(|k| !k[i]) {
                continue;
            }
            total += 1;
            if self.predict(theta, data.row(i)) != y {
                wrong += 1;
            }
        }
        Ok(if total == 0 { 0.0 } else { wrong as f64 / total as f64 })
    }

    /// Mean cross-entropy over `batch` and its gradient.
    pub fn loss_grad(&self, theta: &[f64], data: &FiniteDataset, batch: &[usize], grad: &mut [f64]) -> Result<f64> {
        check_dim(self.param_count(), theta.len())?;
        check_dim(self.param_count(), grad.len())?;
        check_dim(self.input_dim, data.feature_dim())?;
        let labels = data
            .class_labels()
            .ok_or_else(|| Error::invalid("labels", "cross-entropy needs class labels"))?;
        if data.classes() != Some(self.classes) {
            return Err(Error::DimensionMismatch {
                expected: self.classes,
                got: data.classes().unwrap_or(0),
            });
        }
        if batch.is_empty() {
            return Err(Error::invalid("batch", "must not be empty"));
        }
        let (d, h, k) = (self.input_dim, self.hidden, self.classes);
        let (b1, w2, b2) = self.offsets();
        let mut hidden = vec![0.0; h];
        let mut logits = vec![0.0; k];
        let mut dh = vec![0.0; h];
        grad.fill(0.0);
        let mut loss = 0.0;
        for &i in batch {
            let x = data.row(i);
            self.forward(theta, x, &mut hidden, &mut logits);
            let zmax = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for z in logits.iter_mut() {
                *z = (*z - zmax).exp();
                sum += *z;
            }
            let y = labels[i];
            loss += sum.ln() - (logits[y].ln());
            // logits now hold softmax probabilities times `sum`.
            dh.fill(0.0);
            for c in 0..k {
                let dz = logits[c] / sum - if c == y { 1.0 } else { 0.0 };
                grad[b2 + c] += dz;
                let row = w2 + c * h;
                for j in 0..h {
                    grad[row + j] += dz * hidden[j];
                    dh[j] += dz * theta[row + j];
                }
            }
            for j in 0..h {
                let da = dh[j] * (1.0 - hidden[j] * hidden[j]);
                grad[b1 + j] += da;
                for (g, xv) in grad[j * d..(j + 1) * d].iter_mut().zip(x) {
                    *g += da * xv;
                }
            }
        }
        let b = batch.len() as f64;
        for g in grad.iter_mut() {
            *g /= b;
        }
        Ok(loss / b)
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Loss and gradient of the network on the given batch of rows.
pub fn tiny_mlp_eval(
    mlp: &TinyMlp,
    weights: &ParamVector,
    data: &FiniteDataset,
    batch: &[usize],
) -> Result<(f64, ParamVector)> {
    let mut grad = vec![0.0; mlp.param_count()];
    let loss = mlp.loss_grad(weights, data, batch, &mut grad)?;
    Ok((loss, ParamVector::new(grad)?))
}

/// A [`TinyMlp`] bound to a training set.
#[derive(Clone, Debug)]
pub struct MlpProblem {
    pub mlp: TinyMlp,
    pub data: FiniteDataset,
}

impl MlpProblem {
    pub fn new(mlp: TinyMlp, data: FiniteDataset) -> Result<Self> {
        mlp.validate()?;
        check_dim(mlp.input_dim, data.feature_dim())?;
        if data.classes() != Some(mlp.classes) {
            return Err(Error::invalid("classes", "dataset and network disagree on the class count"));
        }
        Ok(Self { mlp, data })
    }
}

impl SampleProblem for MlpProblem {
    fn dim(&self) -> usize {
        self.mlp.param_count()
    }

    fn dataset_size(&self) -> usize {
        self.data.len()
    }

    fn batch_loss_grad(&self, theta: &[f64], batch: &[usize], grad: &mut [f64]) -> Result<f64> {
        self.mlp.loss_grad(theta, &self.data, batch, grad)
    }
}
