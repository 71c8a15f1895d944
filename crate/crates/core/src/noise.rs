//! Empirical checks of gradient-noise amplification and covariance structure.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::optim::{HbConfig, HeavyBall, Optimizer, Pnm, PnmConfig, WeightDecaySpec};
use crate::oracle::GradientOracle;
use crate::problems::{MinibatchOracle, PureNoiseOracle, SampleProblem};
use crate::rng::RngStream;
use crate::vector::ParamVector;

/// γ = (1 + β₀)² + β₀².
pub fn amplification_factor(beta0: f64) -> f64 {
    (1.0 + beta0).powi(2) + beta0 * beta0
}

/// Long-run variance of a momentum quantity.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VarianceReport {
    pub variance: f64,
    pub standard_error: f64,
    /// Retained scalar samples (steps × coordinates).
    pub samples: u64,
    pub burn_in: u64,
    pub warning: Option<String>,
}

/// Which momentum quantity to track under pure noise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum MomentumKind {
    /// m_t of Heavy Ball with gradient weight β₃.
    HeavyBall { beta3: f64 },
    /// One PNM buffer m_t.
    PnmBuffer,
    /// (1 + β₀) m_t − β₀ m_{t−1}.
    PnmPair { beta0: f64 },
}

#[derive(Clone, Copy, Debug)]
pub struct NoiseStudySpec {
    pub beta1: f64,
    pub variance: f64,
    pub dim: usize,
    pub steps: u64,
    pub batches: usize,
}

impl NoiseStudySpec {
    pub fn new(beta1: f64, steps: u64) -> Self {
        Self {
            beta1,
            variance: 1.0,
            dim: 1,
            steps,
            batches: 100,
        }
    }

    /// 100 mixing times of the β₁² recursion.
    pub fn burn_in(&self) -> u64 {
        (100.0 / (1.0 - self.beta1 * self.beta1)).ceil() as u64
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.beta1) {
            return Err(Error::invalid("beta1", format!("{} must lie in [0, 1)", self.beta1)));
        }
        if self.dim == 0 || self.batches < 2 {
            return Err(Error::invalid("noise study", "need dim >= 1 and at least two batches"));
        }
        if self.steps < self.batches as u64 {
            return Err(Error::invalid("steps", "fewer steps than batches"));
        }
        Ok(())
    }

    fn warning(&self) -> Option<String> {
        let mixing = 1.0 / (1.0 - self.beta1 * self.beta1);
        ((self.steps as f64) < 100.0 * mixing).then(|| {
            format!(
                "{} steps is below 100 mixing times ({:.0}); variance estimates are biased",
                self.steps,
                100.0 * mixing
            )
        })
    }
}

/// Per-batch sums of a squared quantity; yields variance and a batch-means
/// standard error.
#[derive(Clone, Debug)]
struct BatchMoments {
    per_batch: usize,
    count: usize,
    sum: f64,
    sum_sq: f64,
    batches: Vec<f64>,
    current: f64,
}

impl BatchMoments {
    fn new(per_batch: usize) -> Self {
        Self {
            per_batch,
            count: 0,
            sum: 0.0,
            sum_sq: 0.0,
            batches: Vec::new(),
            current: 0.0,
        }
    }

    fn push(&mut self, x: f64) {
        self.sum += x;
        self.sum_sq += x * x;
        self.current += x * x;
        self.count += 1;
        if self.count % self.per_batch == 0 {
            self.batches.push(self.current / self.per_batch as f64);
            self.current = 0.0;
        }
    }

    fn variance(&self) -> f64 {
        let n = self.count as f64;
        let mean = self.sum / n;
        self.sum_sq / n - mean * mean
    }

    fn standard_error(&self) -> f64 {
        batch_standard_error(&self.batches)
    }

    fn report(&self, burn_in: u64, warning: Option<String>) -> VarianceReport {
        VarianceReport {
            variance: self.variance(),
            standard_error: self.standard_error(),
            samples: self.count as u64,
            burn_in,
            warning,
        }
    }
}

fn batch_standard_error(batches: &[f64]) -> f64 {
    let k = batches.len() as f64;
    let mean = batches.iter().sum::<f64>() / k;
    let var = batches.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (var / k).sqrt()
}

/// Runs the real optimizer on a pure-noise oracle (∇f ≡ 0) and records the
/// chosen momentum quantity after burn-in, before learning-rate scaling.
pub fn stationary_momentum_variance(
    kind: MomentumKind,
    spec: &NoiseStudySpec,
    rng: &mut RngStream,
) -> Result<VarianceReport> {
    spec.validate()?;
    let oracle = PureNoiseOracle::new(spec.dim, spec.variance)?;
    let burn_in = spec.burn_in();
    let per_batch = (spec.steps as usize / spec.batches) * spec.dim;
    let mut acc = BatchMoments::new(per_batch);
    let mut theta = vec![0.0; spec.dim];
    let mut grad = vec![0.0; spec.dim];
    match kind {
        MomentumKind::HeavyBall { beta3 } => {
            let config = HbConfig {
                lr: 1.0,
                beta1: spec.beta1,
                beta3,
                weight_decay: WeightDecaySpec::none(),
            };
            let mut opt = HeavyBall::new(config, spec.dim)?;
            for t in 0..burn_in + spec.steps {
                oracle.stochastic_gradient_into(&theta, rng, &mut grad)?;
                opt.step(&mut theta, &grad)?;
                if t >= burn_in {
                    opt.momentum().iter().for_each(|&m| acc.push(m));
                }
            }
        }
        MomentumKind::PnmBuffer | MomentumKind::PnmPair { .. } => {
            let beta0 = match kind {
                MomentumKind::PnmPair { beta0 } => beta0,
                _ => 0.0,
            };
            let mut opt = pnm_probe(spec, beta0)?;
            for t in 0..burn_in + spec.steps {
                oracle.stochastic_gradient_into(&theta, rng, &mut grad)?;
                opt.step(&mut theta, &grad)?;
                if t >= burn_in {
                    let (cur, prev) = (opt.latest_momentum(), opt.prior_momentum());
                    for i in 0..spec.dim {
                        acc.push((1.0 + beta0) * cur[i] - beta0 * prev[i]);
                    }
                }
            }
        }
    }
    Ok(acc.report(burn_in, spec.warning()))
}

fn pnm_probe(spec: &NoiseStudySpec, beta0: f64) -> Result<Pnm> {
    let config = PnmConfig {
        lr: 1.0,
        beta0,
        beta1: spec.beta1,
        weight_decay: WeightDecaySpec::none(),
    };
    Pnm::new(config, spec.dim)
}

/// Paired single-buffer and pair statistics from one PNM run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PnmNoiseStudy {
    pub beta0: f64,
    pub beta1: f64,
    pub single: VarianceReport,
    pub pair: VarianceReport,
    /// Var(pair) / Var(single buffer).
    pub ratio: f64,
    pub ratio_standard_error: f64,
    /// Predicted ratio (1 + β₀)² + β₀².
    pub predicted_ratio: f64,
    /// Pearson correlation of the odd and even buffers.
    pub odd_even_correlation: f64,
}

/// Measures the pair-to-buffer variance ratio and buffer correlation on a
/// single pure-noise PNM run so the ratio's sampling noise partly cancels.
pub fn pnm_noise_study(beta0: f64, spec: &NoiseStudySpec, rng: &mut RngStream) -> Result<PnmNoiseStudy> {
    spec.validate()?;
    let oracle = PureNoiseOracle::new(spec.dim, spec.variance)?;
    let burn_in = spec.burn_in();
    let per_batch = (spec.steps as usize / spec.batches) * spec.dim;
    let mut single = BatchMoments::new(per_batch);
    let mut pair = BatchMoments::new(per_batch);
    let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut opt = pnm_probe(spec, beta0)?;
    let mut theta = vec![0.0; spec.dim];
    let mut grad = vec![0.0; spec.dim];
    for t in 0..burn_in + spec.steps {
        oracle.stochastic_gradient_into(&theta, rng, &mut grad)?;
        opt.step(&mut theta, &grad)?;
        if t < burn_in {
            continue;
        }
        let (cur, prev) = (opt.latest_momentum(), opt.prior_momentum());
        for i in 0..spec.dim {
            let (x, y) = (cur[i], prev[i]);
            single.push(x);
            pair.push((1.0 + beta0) * x - beta0 * y);
            sx += x;
            sy += y;
            sxx += x * x;
            syy += y * y;
            sxy += x * y;
        }
    }
    let n = single.count as f64;
    let cov = sxy / n - (sx / n) * (sy / n);
    let corr = cov / ((sxx / n - (sx / n).powi(2)) * (syy / n - (sy / n).powi(2))).sqrt();
    let s = single.report(burn_in, spec.warning());
    let p = pair.report(burn_in, spec.warning());
    let ratio = p.variance / s.variance;
    // Delta method on paired batch means.
    let resid: Vec<f64> = pair
        .batches
        .iter()
        .zip(&single.batches)
        .map(|(pb, sb)| (pb - ratio * sb) / s.variance)
        .collect();
    Ok(PnmNoiseStudy {
        beta0,
        beta1: spec.beta1,
        single: s,
        pair: p,
        ratio,
        ratio_standard_error: batch_standard_error(&resid),
        predicted_ratio: amplification_factor(beta0),
        odd_even_correlation: corr,
    })
}

/// Stationary variance of one PNM buffer under unit i.i.d. noise:
/// (1 − β₁²) σ² / (1 + β₁²).
pub fn pnm_buffer_variance(beta1: f64, variance: f64) -> f64 {
    let b = beta1 * beta1;
    (1.0 - b) * variance / (1.0 + b)
}

/// Stationary Heavy Ball momentum variance with squared weights:
/// β₃² σ² / (1 − β₁²).
pub fn heavy_ball_variance(beta1: f64, beta3: f64, variance: f64) -> f64 {
    beta3 * beta3 * variance / (1.0 - beta1 * beta1)
}

/// Sample covariance of minibatch gradient noise g − ∇f at a fixed θ.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CovarianceEstimate {
    /// Row-major n × n.
    pub matrix: Vec<f64>,
    pub dim: usize,
    pub samples: usize,
    pub batch_size: usize,
    /// Set when B = N, where minibatch gradients carry no noise.
    pub degenerate: bool,
}

impl CovarianceEstimate {
    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.matrix)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.matrix[i * self.dim + i]).collect()
    }

    pub fn trace(&self) -> f64 {
        self.diagonal().iter().sum()
    }
}

pub fn estimate_gradient_noise_covariance<P: SampleProblem>(
    oracle: &MinibatchOracle<P>,
    theta: &ParamVector,
    samples: usize,
    rng: &mut RngStream,
) -> Result<CovarianceEstimate> {
    if samples < 1000 {
        return Err(Error::invalid("samples", format!("{samples} is below the minimum of 1000")));
    }
    let n = oracle.dim();
    crate::error::check_dim(n, theta.dim())?;
    let b = oracle.batch_size();
    if Some(b) == oracle.capabilities().dataset_size {
        return Ok(CovarianceEstimate {
            matrix: vec![0.0; n * n],
            dim: n,
            samples,
            batch_size: b,
            degenerate: true,
        });
    }
    let mut full = vec![0.0; n];
    oracle.full_gradient_into(theta, &mut full)?;
    let mut g = vec![0.0; n];
    let mut acc = vec![0.0; n * n];
    for _ in 0..samples {
        oracle.stochastic_gradient_into(theta, rng, &mut g)?;
        for (gi, fi) in g.iter_mut().zip(&full) {
            *gi -= fi;
        }
        for i in 0..n {
            for j in i..n {
                acc[i * n + j] += g[i] * g[j];
            }
        }
    }
    for i in 0..n {
        for j in i..n {
            let v = acc[i * n + j] / samples as f64;
            acc[i * n + j] = v;
            acc[j * n + i] = v;
        }
    }
    Ok(CovarianceEstimate {
        matrix: acc,
        dim: n,
        samples,
        batch_size: b,
        degenerate: false,
    })
}

pub fn pearson_correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    crate::error::check_dim(a.len(), b.len())?;
    if a.len() < 2 {
        return Err(Error::invalid("samples", "correlation needs at least two points"));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::invalid("samples", "correlation of a constant sequence"));
    }
    Ok(sab / (saa * sbb).sqrt())
}
