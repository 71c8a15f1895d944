//! Long-run behaviour of constant-step optimizers near a quadratic minimum.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::optim::{OptimizerSpec, WeightDecayMode};
use crate::oracle::GradientOracle;
use crate::problems::{AdditiveNoiseOracle, NoiseModel, QuadraticModel};
use crate::rng::RngStream;
use crate::vector::ParamVector;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationarySettings {
    pub burn_in: u64,
    /// Retained samples after thinning.
    pub samples: usize,
    /// Steps between retained samples; defaults to 1/(η λ_min(H)).
    #[serde(default)]
    pub thin: Option<u64>,
    /// Batches for the batch-means standard error of the mean.
    #[serde(default = "default_batches")]
    pub batches: usize,
}

fn default_batches() -> usize {
    50
}

impl StationarySettings {
    pub fn new(burn_in: u64, samples: usize) -> Self {
        Self {
            burn_in,
            samples,
            thin: None,
            batches: default_batches(),
        }
    }

    pub fn with_thin(mut self, thin: u64) -> Self {
        self.thin = Some(thin);
        self
    }
}

/// Empirical mean and covariance of θ after burn-in.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StationaryEstimate {
    pub dim: usize,
    pub mean: Vec<f64>,
    /// Row-major dim × dim.
    pub covariance: Vec<f64>,
    pub mean_standard_error: Vec<f64>,
    pub burn_in: u64,
    pub samples: u64,
    pub thin: u64,
}

impl StationaryEstimate {
    pub fn covariance_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.covariance)
    }

    /// Mean of the diagonal.
    pub fn mean_variance(&self) -> f64 {
        (0..self.dim).map(|i| self.covariance[i * self.dim + i]).sum::<f64>() / self.dim as f64
    }
}

/// Running mean and scatter with batch means for a standard error.
#[derive(Clone, Debug)]
struct Moments {
    dim: usize,
    count: u64,
    mean: Vec<f64>,
    scatter: Vec<f64>,
    per_batch: u64,
    batch_sum: Vec<f64>,
    batch_means: Vec<Vec<f64>>,
}

impl Moments {
    fn new(dim: usize, per_batch: u64) -> Self {
        Self {
            dim,
            count: 0,
            mean: vec![0.0; dim],
            scatter: vec![0.0; dim * dim],
            per_batch: per_batch.max(1),
            batch_sum: vec![0.0; dim],
            batch_means: Vec::new(),
        }
    }

    fn push(&mut self, x: &[f64], delta: &mut [f64]) {
        self.count += 1;
        let n = self.count as f64;
        for i in 0..self.dim {
            delta[i] = x[i] - self.mean[i];
            self.mean[i] += delta[i] / n;
            self.batch_sum[i] += x[i];
        }
        for i in 0..self.dim {
            let after = x[i] - self.mean[i];
            for j in i..self.dim {
                self.scatter[i * self.dim + j] += after * delta[j];
            }
        }
        if self.count % self.per_batch == 0 {
            let b = self.per_batch as f64;
            self.batch_means.push(self.batch_sum.iter().map(|s| s / b).collect());
            self.batch_sum.fill(0.0);
        }
    }

    /// Chan et al. pairwise combination.
    fn merge(mut self, other: Moments) -> Moments {
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        if nb == 0.0 {
            return self;
        }
        let delta: Vec<f64> = (0..self.dim).map(|i| other.mean[i] - self.mean[i]).collect();
        for i in 0..self.dim {
            for j in i..self.dim {
                self.scatter[i * self.dim + j] += other.scatter[i * self.dim + j] + delta[i] * delta[j] * na * nb / n;
            }
            self.mean[i] += delta[i] * nb / n;
        }
        self.count += other.count;
        self.batch_means.extend(other.batch_means);
        self
    }

    fn finish(self, burn_in: u64, thin: u64) -> StationaryEstimate {
        let d = self.dim;
        let n = self.count as f64;
        let mut cov = vec![0.0; d * d];
        for i in 0..d {
            for j in i..d {
                let v = self.scatter[i * d + j] / (n - 1.0);
                cov[i * d + j] = v;
                cov[j * d + i] = v;
            }
        }
        let k = self.batch_means.len() as f64;
        let se = (0..d)
            .map(|i| {
                if k < 2.0 {
                    return f64::NAN;
                }
                let m = self.batch_means.iter().map(|b| b[i]).sum::<f64>() / k;
                let v = self.batch_means.iter().map(|b| (b[i] - m).powi(2)).sum::<f64>() / (k - 1.0);
                (v / k).sqrt()
            })
            .collect();
        StationaryEstimate {
            dim: d,
            mean: self.mean,
            covariance: cov,
            mean_standard_error: se,
            burn_in,
            samples: self.count,
            thin,
        }
    }
}

fn default_thin(model: &QuadraticModel, lr: f64) -> u64 {
    (1.0 / (lr * model.min_eigenvalue())).ceil().max(1.0) as u64
}

fn run_chain(
    oracle: &AdditiveNoiseOracle<&QuadraticModel>,
    optimizer: &OptimizerSpec,
    settings: &StationarySettings,
    thin: u64,
    rng: &mut RngStream,
) -> Result<Moments> {
    let model = oracle.base();
    let dim = model.dim();
    let mut opt = optimizer.build(dim)?;
    let mut theta = model.minimum().as_slice().to_vec();
    let mut grad = vec![0.0; dim];
    let mut delta = vec![0.0; dim];
    let per_batch = (settings.samples / settings.batches.max(1)) as u64;
    let mut moments = Moments::new(dim, per_batch);
    let limit = 1e6 * model.minimum().norm_sq().sqrt().max(1.0);
    let total = settings.burn_in + settings.samples as u64 * thin;
    for step in 0..total {
        oracle.stochastic_gradient_into(&theta, rng, &mut grad)?;
        opt.step(&mut theta, &grad)?;
        if step % 64 == 0 {
            let dist = theta
                .iter()
                .zip(model.minimum().iter())
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            if !(dist <= limit) {
                return Err(Error::Divergence {
                    step,
                    detail: format!("distance to the minimum {dist:e} exceeds {limit:e}"),
                });
            }
        }
        if step >= settings.burn_in && (step - settings.burn_in + 1) % thin == 0 {
            moments.push(&theta, &mut delta);
        }
    }
    Ok(moments)
}

/// Runs one chain from θ* and summarizes the iterates after burn-in.
pub fn simulate_stationary(
    model: &QuadraticModel,
    noise: &NoiseModel,
    optimizer: &OptimizerSpec,
    settings: &StationarySettings,
    rng: &mut RngStream,
) -> Result<StationaryEstimate> {
    optimizer.validate()?;
    let oracle = AdditiveNoiseOracle::new(model, noise.clone())?;
    let thin = settings.thin.unwrap_or_else(|| default_thin(model, optimizer.lr()));
    if thin == 0 || settings.samples < 2 {
        return Err(Error::invalid("settings", "need thin >= 1 and at least two samples"));
    }
    let moments = run_chain(&oracle, optimizer, settings, thin, rng)?;
    Ok(moments.finish(settings.burn_in, thin))
}

/// Independent chains, one per seed, run concurrently and merged in seed
/// order. `settings.samples` is per chain.
pub fn simulate_chains(
    model: &QuadraticModel,
    noise: &NoiseModel,
    optimizer: &OptimizerSpec,
    settings: &StationarySettings,
    seeds: &[u64],
) -> Result<StationaryEstimate> {
    optimizer.validate()?;
    if seeds.is_empty() {
        return Err(Error::invalid("seeds", "need at least one chain"));
    }
    let oracle = AdditiveNoiseOracle::new(model, noise.clone())?;
    let thin = settings.thin.unwrap_or_else(|| default_thin(model, optimizer.lr()));
    let chains: Result<Vec<Moments>> = seeds
        .par_iter()
        .map(|&s| run_chain(&oracle, optimizer, settings, thin, &mut RngStream::new(s)))
        .collect();
    let mut chains = chains?.into_iter();
    let first = chains.next().expect("non-empty");
    Ok(chains.fold(first, Moments::merge).finish(settings.burn_in, thin))
}

fn check_square_symmetric(name: &'static str, m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::invalid(name, "must be square"));
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let asym = crate::problems::max_asymmetry(m);
    if asym > 1e-9 * scale {
        return Err(Error::Asymmetric(asym));
    }
    Ok(())
}

/// ‖ΣH + HΣ − ηC‖_F / ‖ηC‖_F, with 0/0 read as 0.
pub fn lyapunov_residual(sigma: &DMatrix<f64>, hessian: &DMatrix<f64>, eta_c: &DMatrix<f64>) -> Result<f64> {
    check_square_symmetric("sigma", sigma)?;
    check_square_symmetric("hessian", hessian)?;
    check_square_symmetric("eta_c", eta_c)?;
    check_dim(sigma.nrows(), hessian.nrows())?;
    check_dim(sigma.nrows(), eta_c.nrows())?;
    let lhs = sigma * hessian + hessian * sigma - eta_c;
    let denom = eta_c.norm();
    if denom == 0.0 {
        return Ok(if lhs.norm() == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok(lhs.norm() / denom)
}

/// Solves ΣH + HΣ = Q for symmetric positive-definite H.
pub fn solve_lyapunov(hessian: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_square_symmetric("hessian", hessian)?;
    check_dim(hessian.nrows(), q.nrows())?;
    let eig = SymmetricEigen::new(hessian.clone());
    if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
        return Err(Error::NotPositiveDefinite("Lyapunov solve needs an SPD Hessian".into()));
    }
    let u = &eig.eigenvectors;
    let mut qt = u.transpose() * q * u;
    let n = qt.nrows();
    for i in 0..n {
        for j in 0..n {
            qt[(i, j)] /= eig.eigenvalues[i] + eig.eigenvalues[j];
        }
    }
    Ok(u * qt * u.transpose())
}

/// Exact stationary variance of 1-D SGD on h θ²/2 with noise σ²:
/// η²σ² / (1 − (1 − ηh)²).
pub fn discrete_ou_variance(h: f64, lr: f64, variance: f64) -> Result<f64> {
    let rho = 1.0 - lr * h;
    if !(h > 0.0 && lr > 0.0) || rho.abs() >= 1.0 {
        return Err(Error::invalid("lr", format!("SGD is not stable at η h = {}", lr * h)));
    }
    Ok(lr * lr * variance / (1.0 - rho * rho))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PosteriorKind {
    Sgd,
    Hb,
    Pnm,
}

/// Continuous-time posterior covariance scale: η/(2B) for SGD and Heavy
/// Ball, γ η/(2B) for PNM.
pub fn theoretical_posterior_covariance(kind: PosteriorKind, lr: f64, batch_size: usize, beta0: f64) -> Result<f64> {
    if batch_size == 0 {
        return Err(Error::invalid("batch_size", "must be >= 1"));
    }
    let base = lr / (2.0 * batch_size as f64);
    Ok(match kind {
        PosteriorKind::Sgd | PosteriorKind::Hb => base,
        PosteriorKind::Pnm => crate::noise::amplification_factor(beta0) * base,
    })
}

/// Solves S = A S Aᵀ + Q by repeated squaring; A must be stable.
pub fn discrete_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_dim(a.nrows(), q.nrows())?;
    let mut ak = a.clone();
    let mut s = q.clone();
    for _ in 0..64 {
        let next = &s + &ak * &s * ak.transpose();
        let change = (&next - &s).norm();
        s = next;
        ak = &ak * &ak;
        if !s.iter().all(|x| x.is_finite()) {
            break;
        }
        if change <= 1e-15 * s.norm() {
            return Ok(s);
        }
    }
    Err(Error::Divergence {
        step: 0,
        detail: "transition matrix is not stable; no stationary covariance".into(),
    })
}

/// Exact stationary covariance of θ for SGD, Heavy Ball or PNM on a
/// quadratic with additive noise covariance C, from the linear state
/// recursion of the discrete updates.
pub fn exact_stationary_covariance(
    model: &QuadraticModel,
    noise_covariance: &DMatrix<f64>,
    optimizer: &OptimizerSpec,
) -> Result<DMatrix<f64>> {
    optimizer.validate()?;
    let n = model.dim();
    check_dim(n, noise_covariance.nrows())?;
    let h = model.hessian_matrix();
    let eye = DMatrix::<f64>::identity(n, n);
    let (a, b) = match optimizer {
        OptimizerSpec::Sgd { lr, momentum, weight_decay } => {
            no_decay(weight_decay.mode)?;
            hb_system(h, *lr, *momentum, 1.0)
        }
        OptimizerSpec::Hb(c) => {
            no_decay(c.weight_decay.mode)?;
            hb_system(h, c.lr, c.beta1, c.beta3)
        }
        OptimizerSpec::Pnm(c) => {
            no_decay(c.weight_decay.mode)?;
            let (eta0, b0, bb) = (c.effective_lr(), c.beta0, c.beta1 * c.beta1);
            // State (e_t, m_t, m_{t−1}) with e = θ − θ*.
            let mut a = DMatrix::zeros(3 * n, 3 * n);
            let mut b = DMatrix::zeros(3 * n, n);
            let hm = h * (1.0 - bb);
            a.view_mut((0, 0), (n, n))
                .copy_from(&(&eye - &hm * (eta0 * (1.0 + b0))));
            a.view_mut((0, n), (n, n)).copy_from(&(&eye * (eta0 * b0)));
            a.view_mut((0, 2 * n), (n, n))
                .copy_from(&(&eye * (-eta0 * (1.0 + b0) * bb)));
            a.view_mut((n, 0), (n, n)).copy_from(&hm);
            a.view_mut((n, 2 * n), (n, n)).copy_from(&(&eye * bb));
            a.view_mut((2 * n, n), (n, n)).copy_from(&eye);
            b.view_mut((0, 0), (n, n))
                .copy_from(&(&eye * (-eta0 * (1.0 + b0) * (1.0 - bb))));
            b.view_mut((n, 0), (n, n)).copy_from(&(&eye * (1.0 - bb)));
            (a, b)
        }
        _ => return Err(Error::Unsupported("exact stationary covariance for adaptive optimizers")),
    };
    let q = &b * noise_covariance * b.transpose();
    let s = discrete_lyapunov(&a, &q)?;
    let mut out = s.view((0, 0), (n, n)).into_owned();
    crate::problems::symmetrize(&mut out);
    Ok(out)
}

fn no_decay(mode: WeightDecayMode) -> Result<()> {
    if mode != WeightDecayMode::None {
        return Err(Error::Unsupported("exact stationary covariance with weight decay"));
    }
    Ok(())
}

/// State (e_t, m_t): m' = β₁ m + β₃ (H e + ξ), e' = e − η m'.
fn hb_system(h: &DMatrix<f64>, lr: f64, beta1: f64, beta3: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = h.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let mut a = DMatrix::zeros(2 * n, 2 * n);
    let mut b = DMatrix::zeros(2 * n, n);
    a.view_mut((0, 0), (n, n)).copy_from(&(&eye - h * (lr * beta3)));
    a.view_mut((0, n), (n, n)).copy_from(&(&eye * (-lr * beta1)));
    a.view_mut((n, 0), (n, n)).copy_from(&(h * beta3));
    a.view_mut((n, n), (n, n)).copy_from(&(&eye * beta1));
    b.view_mut((0, 0), (n, n)).copy_from(&(&eye * (-lr * beta3)));
    b.view_mut((n, 0), (n, n)).copy_from(&(&eye * beta3));
    (a, b)
}

/// Standard error of a sample variance from `samples` effective draws of a
/// Gaussian: var · √(2 / samples).
pub fn variance_standard_error(variance: f64, samples: f64) -> f64 {
    variance * (2.0 / samples).sqrt()
}

pub fn mean_within(estimate: &StationaryEstimate, target: &ParamVector, sigmas: f64) -> bool {
    estimate
        .mean
        .iter()
        .zip(target.iter())
        .zip(&estimate.mean_standard_error)
        .all(|((m, t), se)| (m - t).abs() <= sigmas * se)
}
