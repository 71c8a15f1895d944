//! Acceptance suite: one PASS/FAIL line per criterion, written straight to
//! stdout so it shows without `--nocapture`.

use std::io::Write;
use std::time::Instant;

use nalgebra::DMatrix;
use pnm::convergence::fit_slope;
use pnm::harness::{beta0_sweep, covariance_rows, label_noise_experiment, ConvergenceConfig, ExperimentConfig, NoiseConfig};
use pnm::noise::{amplification_factor, pnm_noise_study, NoiseStudySpec};
use pnm::optim::{
    momentum_recovery_beta0, pnm_normalizer, AdaPnm, AdaPnmConfig, Adam, AdamConfig, HbConfig, HeavyBall, Optimizer,
    OptimizerSpec, Pnm, PnmConfig, WeightDecaySpec,
};
use pnm::pacbayes::{
    critical_ratio, gamma_grid, gaussian_kl, kl_q_gamma, kl_q_gamma_grad, pac_bound, GaussianDist, PacBayesSetting,
};
use pnm::posterior::{
    discrete_ou_variance, exact_stationary_covariance, lyapunov_residual, simulate_chains, StationarySettings,
};
use pnm::problems::{AdditiveNoiseOracle, NoiseModel, QuadraticModel, Rosenbrock};
use pnm::{GradientOracle, ParamVector, RngStream};

fn report(id: &str, title: &str, pass: bool, detail: &str, started: Instant) {
    let line = format!(
        "[{}] criterion {id}: {title}: {detail} ({:.2} s)\n",
        if pass { "PASS" } else { "FAIL" },
        started.elapsed().as_secs_f64()
    );
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
}

fn grad(o: &dyn GradientOracle, theta: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; theta.len()];
    o.full_gradient_into(theta, &mut g).unwrap();
    g
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn pnm_cfg(lr: f64, beta0: f64, beta1: f64) -> PnmConfig {
    PnmConfig {
        lr,
        beta0,
        beta1,
        weight_decay: WeightDecaySpec::none(),
    }
}

#[test]
fn criterion_01_momentum_recovery() {
    let t = Instant::now();
    let beta1 = 0.9;
    let beta0 = momentum_recovery_beta0(beta1);
    let lr = 1e-3;
    let mut a = Pnm::new(pnm_cfg(lr * pnm_normalizer(beta0), beta0, beta1), 2).unwrap();
    let mut b = HeavyBall::new(
        HbConfig {
            lr,
            beta1,
            beta3: 0.1,
            weight_decay: WeightDecaySpec::none(),
        },
        2,
    )
    .unwrap();
    let (mut ta, mut tb) = (vec![-1.2, 1.0], vec![-1.2, 1.0]);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let (ga, gb) = (grad(&Rosenbrock, &ta), grad(&Rosenbrock, &tb));
        a.step(&mut ta, &ga).unwrap();
        b.step(&mut tb, &gb).unwrap();
        worst = worst.max(max_gap(&ta, &tb));
    }
    let pass = worst <= 1e-10 && t.elapsed().as_secs_f64() < 1.0;
    report("1", "PNM at β₀=−β₁/(1+β₁) equals heavy ball", pass, &format!("max |Δθ| = {worst:.2e} over 1000 Rosenbrock steps"), t);
    assert!(pass);
}

#[test]
fn criterion_02_adam_recovery() {
    let t = Instant::now();
    let beta1 = 0.9;
    let beta0 = momentum_recovery_beta0(beta1);
    let lr = 1e-2;
    let cfg = AdaPnmConfig {
        lr: lr * pnm_normalizer(beta0),
        ..AdaPnmConfig::new(lr, beta0)
    };
    let mut a = AdaPnm::new(cfg, 2).unwrap();
    let mut b = Adam::new(AdamConfig::amsgrad(lr), 2).unwrap();
    let (mut ta, mut tb) = (vec![-1.2, 1.0], vec![-1.2, 1.0]);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (ga, gb) = (grad(&Rosenbrock, &ta), grad(&Rosenbrock, &tb));
        a.step(&mut ta, &ga).unwrap();
        b.step(&mut tb, &gb).unwrap();
        worst = worst.max(max_gap(&ta, &tb));
    }
    let pass = worst <= 1e-10 && t.elapsed().as_secs_f64() < 1.0;
    report("2", "AdaPNM at the same β₀ equals AMSGrad", pass, &format!("max |Δθ| = {worst:.2e} over 100 steps"), t);
    assert!(pass);
}

#[test]
fn criterion_03_auxiliary_sequence_identity() {
    let t = Instant::now();
    let cfg = pnm_cfg(1e-3, 1.0, 0.9);
    let beta = 0.81;
    let alpha = cfg.effective_lr() * (1.0 - beta);
    let oracle = AdditiveNoiseOracle::new(Rosenbrock, NoiseModel::isotropic(0.25).unwrap()).unwrap();
    let mut rng = RngStream::new(3);
    let mut opt = Pnm::new(cfg, 2).unwrap();
    let mut theta = vec![-1.2, 1.0];
    let mut g = vec![0.0; 2];
    let mut xs = vec![opt.auxiliary_point(&theta); 3];
    let z = |xs: &[Vec<f64>]| -> Vec<f64> {
        let n = xs.len();
        (0..2).map(|i| (xs[n - 1][i] - beta * xs[n - 3][i]) / (1.0 - beta)).collect()
    };
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        oracle.stochastic_gradient_into(&theta, &mut rng, &mut g).unwrap();
        let before = z(&xs);
        opt.step(&mut theta, &g).unwrap();
        xs.push(opt.auxiliary_point(&theta));
        let after = z(&xs);
        for i in 0..2 {
            worst = worst.max((after[i] - before[i] + alpha / (1.0 - beta) * g[i]).abs());
        }
    }
    let pass = worst <= 1e-10;
    report("3", "z_{t+1} − z_t = −α/(1−β)·g_t", pass, &format!("max residual {worst:.2e} over 1000 stochastic steps"), t);
    assert!(pass);
}

#[test]
fn criterion_04_noise_amplification() {
    let t = Instant::now();
    let spec = NoiseStudySpec::new(0.9, 1_000_000);
    let mut parts = Vec::new();
    let mut pass = amplification_factor(1.0) == 5.0;
    for (i, b) in [0.5, 1.0, 2.0].into_iter().enumerate() {
        let s = pnm_noise_study(b, &spec, &mut RngStream::with_stream(11, i as u64)).unwrap();
        let rel = (s.ratio / s.predicted_ratio - 1.0).abs();
        pass &= rel < 0.02 && s.odd_even_correlation.abs() < 0.01;
        parts.push(format!("β₀={b}: {:.4} vs {} ({:.2}%)", s.ratio, s.predicted_ratio, 100.0 * rel));
    }
    pass &= t.elapsed().as_secs_f64() < 30.0;
    report("4", "pair/buffer variance ratio = (1+β₀)²+β₀²", pass, &parts.join(", "), t);
    assert!(pass);
}

#[test]
fn criterion_05_posterior_scaling() {
    let t = Instant::now();
    let (h, eta, var) = (1.0, 0.01, 1.0);
    let model = QuadraticModel::isotropic(ParamVector::zeros(1).unwrap(), h).unwrap();
    let noise = NoiseModel::isotropic(var).unwrap();
    let settings = StationarySettings::new(2_000, 250_000).with_thin(10);
    let seeds = [1, 2, 3, 4];
    let sgd = OptimizerSpec::Sgd {
        lr: eta,
        momentum: 0.0,
        weight_decay: WeightDecaySpec::none(),
    };
    // Same slow-mode drift as SGD: PNM's step is η/√γ, so scale η by √γ.
    let pnm = OptimizerSpec::Pnm(pnm_cfg(eta * pnm_normalizer(1.0), 1.0, 0.9));
    let v_sgd = simulate_chains(&model, &noise, &sgd, &settings, &seeds).unwrap().covariance[0];
    let v_pnm = simulate_chains(&model, &noise, &pnm, &settings, &seeds).unwrap().covariance[0];
    let ou = discrete_ou_variance(h, eta, var).unwrap();
    let c = DMatrix::from_element(1, 1, var);
    let exact_sgd = exact_stationary_covariance(&model, &c, &sgd).unwrap()[(0, 0)];
    let exact_pnm = exact_stationary_covariance(&model, &c, &pnm).unwrap()[(0, 0)];
    let unscaled = OptimizerSpec::Pnm(pnm_cfg(eta, 1.0, 0.9));
    let exact_unscaled = exact_stationary_covariance(&model, &c, &unscaled).unwrap()[(0, 0)];

    let sgd_ok = (v_sgd / ou - 1.0).abs() < 0.05;
    let ratio = v_pnm / v_sgd;
    let ratio_ok = (ratio / 5.0 - 1.0).abs() < 0.05;
    let sim_matches_exact = (v_pnm / exact_pnm - 1.0).abs() < 0.05;
    let pass = sgd_ok && ratio_ok && t.elapsed().as_secs_f64() < 60.0;
    report(
        "5",
        "1-D stationary variance: SGD vs discrete OU, PNM/SGD ratio 5",
        pass,
        &format!(
            "SGD {v_sgd:.6} vs OU {ou:.6} ({}); PNM/SGD {ratio:.4} vs 5 ({}); exact discrete ratios {:.4} (lr·√γ) and {:.4} (lr), simulation {} exact",
            if sgd_ok { "ok" } else { "off" },
            if ratio_ok { "ok" } else { "off" },
            exact_pnm / exact_sgd,
            exact_unscaled / exact_sgd,
            if sim_matches_exact { "matches" } else { "disagrees with" },
        ),
        t,
    );
    assert!(sgd_ok, "SGD variance {v_sgd} vs {ou}");
    assert!(sim_matches_exact, "PNM simulation {v_pnm} vs exact {exact_pnm}");
    assert!(ratio_ok, "PNM/SGD stationary variance ratio {ratio} is not within 5% of 5");
}

#[test]
fn criterion_06_lyapunov_residual() {
    let t = Instant::now();
    let eig = [0.8, 0.85, 0.9, 0.95, 1.0];
    let model = QuadraticModel::with_spectrum(ParamVector::zeros(5).unwrap(), &eig, &mut RngStream::new(5)).unwrap();
    let c = model.hessian_matrix().clone();
    let noise = NoiseModel::gaussian(c.clone()).unwrap();
    let residual = |eta: f64, settings: StationarySettings| {
        let sgd = OptimizerSpec::Sgd {
            lr: eta,
            momentum: 0.0,
            weight_decay: WeightDecaySpec::none(),
        };
        let est = simulate_chains(&model, &noise, &sgd, &settings, &[1, 2, 3, 4]).unwrap();
        lyapunov_residual(&est.covariance_matrix(), model.hessian_matrix(), &(&c * eta)).unwrap()
    };
    // The η/10 chain gets 3× the mixing times so its Monte Carlo error sits
    // below the O(ηλ) discretization bias being compared.
    let r1 = residual(0.01, StationarySettings::new(5_000, 250_000).with_thin(10));
    let r2 = residual(0.001, StationarySettings::new(50_000, 750_000).with_thin(100));
    let pass = r1 < 0.1 && r2 <= r1;
    report(
        "6",
        "Lyapunov residual of the empirical 5-D covariance",
        pass,
        &format!("{r1:.4} at ηλ_max=0.01, {r2:.4} at η/10"),
        t,
    );
    assert!(pass);
}

#[test]
fn criterion_07_pac_bayes() {
    let t = Instant::now();
    let mut rng = RngStream::new(7);
    let mut worst_closed: f64 = 0.0;
    let mut worst_fd: f64 = 0.0;
    let mut monotone = true;
    let mut settings = 0;
    while settings < 20 {
        let lr = 10f64.powf(-4.0 + 2.0 * rng.uniform());
        let b = 16 + rng.below(497);
        let lambda = 10f64.powf(-4.0 + 2.0 * rng.uniform());
        let n = 1 + rng.below(50);
        // Keep 25.6 ≤ 2Bλ/η so the whole grid lies below the optimum.
        if critical_ratio(lr, b, lambda).unwrap() > 0.0390625 {
            continue;
        }
        settings += 1;
        let theta = ParamVector::new((0..n).map(|_| rng.standard_normal()).collect()).unwrap();
        let s = PacBayesSetting {
            lr,
            batch_size: b,
            dataset_size: 50_000,
            lambda,
            dim: n,
            delta: 0.05,
            theta_star_norm_sq: 0.0,
        }
        .with_theta_star(&theta);
        let p = GaussianDist::isotropic(ParamVector::zeros(n).unwrap(), lambda).unwrap();
        let mut prev = pac_bound(kl_q_gamma(1.0, &s).unwrap(), s.dataset_size, s.delta).unwrap();
        for gamma in gamma_grid(1.0, 25.6, 100) {
            let q = GaussianDist::isotropic(theta.clone(), gamma * lr / (2.0 * b as f64)).unwrap();
            let general = gaussian_kl(&q, &p).unwrap();
            let closed = kl_q_gamma(gamma, &s).unwrap();
            worst_closed = worst_closed.max((general - closed).abs() / general.abs().max(1.0));
            let h = 1e-3 * gamma;
            let fd = (kl_q_gamma(gamma + h, &s).unwrap() - kl_q_gamma(gamma - h, &s).unwrap()) / (2.0 * h);
            let g = kl_q_gamma_grad(gamma, &s).unwrap();
            // Relative to n/(2γ), the size of the two terms that cancel at the optimum.
            worst_fd = worst_fd.max((fd - g).abs() / (n as f64 / (2.0 * gamma)));
            let bound = pac_bound(closed, s.dataset_size, s.delta).unwrap();
            monotone &= bound < prev;
            prev = bound;
        }
    }
    let cr = critical_ratio(0.001, 128, 1e-4).unwrap();
    let pass = worst_closed <= 1e-10 && worst_fd <= 1e-6 && cr == 0.0390625 && monotone && t.elapsed().as_secs_f64() < 5.0;
    report(
        "7",
        "PAC-Bayes KL, gradient, critical ratio, monotone bound",
        pass,
        &format!(
            "closed-form vs general KL {worst_closed:.1e}, gradient vs FD {worst_fd:.1e}, critical_ratio = {cr}, monotone on 20 settings: {monotone}"
        ),
        t,
    );
    assert!(pass);
}

#[test]
fn criterion_08_convergence_rate() {
    let t = Instant::now();
    let config: ConvergenceConfig = serde_json::from_str(include_str!("../../../configs/convergence.json")).unwrap();
    assert_eq!(config.settings.seeds.len(), 20);
    assert_eq!(config.settings.horizons, [100, 1000, 10_000]);
    let report_ = config.run().unwrap();
    let r = &report_.report;
    let within = r.rows.iter().all(|row| row.within_bound);
    let xs: Vec<f64> = r.rows.iter().map(|row| (row.horizon as f64).ln()).collect();
    let ys: Vec<f64> = r.rows.iter().map(|row| row.mean_min_grad_norm_sq.ln()).collect();
    let slope = fit_slope(&xs, &ys).unwrap();
    let pass = (-0.7..=-0.3).contains(&slope) && within && (slope - r.slope).abs() < 1e-12 && t.elapsed().as_secs_f64() < 300.0;
    let rows: Vec<String> = r
        .rows
        .iter()
        .map(|row| format!("T={} {:.3e}≤{:.3e}", row.horizon, row.mean_min_grad_norm_sq, row.bound))
        .collect();
    report("8", "O(1/√T) rate under the bound", pass, &format!("slope {slope:.3}; {}", rows.join(", ")), t);
    assert!(pass);
}

#[test]
fn criterion_09_covariance_structure() {
    let t = Instant::now();
    let config: NoiseConfig = serde_json::from_str(include_str!("../../../configs/noise.json")).unwrap();
    let check = config.covariance.clone().unwrap();
    assert_eq!(check.batch_sizes[1] * 2, check.batch_sizes[0]);
    let rows = covariance_rows(&check, config.seed).unwrap();
    let corr = rows.iter().map(|r| r.hessian_correlation).fold(f64::INFINITY, f64::min);
    let doubling = rows[1].trace / rows[0].trace;
    let pass = corr > 0.9 && (doubling / 2.0 - 1.0).abs() < 0.1;
    report(
        "9",
        "minibatch noise covariance tracks H/B",
        pass,
        &format!("min correlation {corr:.4}, trace(B/2)/trace(B) = {doubling:.4}"),
        t,
    );
    assert!(pass);
}

#[test]
fn criterion_10_directional_generalization() {
    let t = Instant::now();
    let config = ExperimentConfig::from_json(include_str!("../../../configs/label_noise.json")).unwrap();
    assert_eq!(config.seeds.len(), 10);
    let noisy = label_noise_experiment(&config).unwrap();
    let sweep = beta0_sweep(&config, &config.sweep.beta0).unwrap();
    let wins = sweep.positive_wins.unwrap();
    let pass = noisy.pnm_wins >= 8 && sweep.positive_beats_nonpositive == Some(true) && t.elapsed().as_secs_f64() < 600.0;
    report(
        "10",
        "PNM beats SGD under 40% label noise; β₀>0 beats β₀∈[−1,0]",
        pass,
        &format!(
            "PNM wins {}/10 (test {:.3} vs {:.3}; corrupted-train error {:.3} vs {:.3}); β₀ sweep wins {wins}/10",
            noisy.pnm_wins,
            noisy.pnm.test_error.mean,
            noisy.baseline.test_error.mean,
            noisy.pnm.train_error.mean,
            noisy.baseline.train_error.mean,
        ),
        t,
    );
    assert!(pass);
}
