use std::f64::consts::{PI, TAU};

use energybeam_core::channel::{self, wrap_signed, NoiseModel, SystemConfig};
use energybeam_core::codebook::{build_schedule, theta_grid};
use energybeam_core::estimation::{self, calibrate_epsilon, fit_sinusoid, NoiseLevel};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// `E(α, β, φ) = Σ [R_l − α − β cos(θ_l + φ)]²`, evaluated directly.
fn objective(values: &[f64], alpha: f64, beta: f64, phi: f64) -> f64 {
    theta_grid(values.len())
        .iter()
        .zip(values)
        .map(|(t, r)| {
            let e = r - alpha - beta * (t + phi).cos();
            e * e
        })
        .sum()
}

fn noisy_values(rng: &mut ChaCha8Rng, l: usize, alpha: f64, beta: f64, phi: f64, sigma: f64) -> Vec<f64> {
    theta_grid(l)
        .iter()
        .map(|t| alpha + beta * (t + phi).cos() + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn noiseless_pipeline_is_exact(seed in any::<u64>(), k in 2usize..=8, l in 3usize..=16, n in 1usize..4) {
        let cfg = SystemConfig { antennas: k, receivers: n, power: 1.3, efficiency: 0.8, ..SystemConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hs = channel::draw_channels(&cfg, &mut rng).unwrap();
        let sched = build_schedule(&cfg, l).unwrap();
        let fb = estimation::collect_feedback(&hs, &sched, &cfg, &NoiseModel::noiseless(), &mut rng).unwrap();
        prop_assert_eq!(fb.len(), n * sched.total_beams());
        let (est, diag) = estimation::estimate_channels(&fb, &sched, &cfg).unwrap();
        prop_assert!(diag.clamped.is_empty());
        for (e, h) in est.iter().zip(&hs) {
            for (a, b) in e.phases_rel().iter().zip(h.relative_phases()) {
                prop_assert!(wrap_signed(a - b).abs() < 1e-9, "phase {} vs {}", a, b);
            }
            for (a, b) in e.magnitudes().iter().zip(h.magnitudes()) {
                prop_assert!((a - b).abs() < 1e-9, "magnitude {} vs {}", a, b);
            }
        }
    }

    #[test]
    fn fit_is_shift_equivariant(seed in any::<u64>(), l in 3usize..20, c in -5.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phi = rng.random_range(0.0..TAU);
        let v = noisy_values(&mut rng, l, 1.0, 0.6, phi, 0.1);
        let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
        let a = fit_sinusoid(&v).unwrap();
        let b = fit_sinusoid(&shifted).unwrap();
        prop_assert!((b.alpha_hat - a.alpha_hat - c).abs() < 1e-10);
        prop_assert!((b.beta_hat - a.beta_hat).abs() < 1e-10);
        prop_assert!(wrap_signed(b.phi_hat - a.phi_hat).abs() < 1e-10);
    }

    #[test]
    fn circular_shift_rotates_phase(seed in any::<u64>(), l in 3usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phi = rng.random_range(0.0..TAU);
        let v = noisy_values(&mut rng, l, 0.5, 0.4, phi, 0.05);
        // R'_l = R_{l+1}: the same sinusoid seen one grid step later.
        let mut shifted = v.clone();
        shifted.rotate_left(1);
        let a = fit_sinusoid(&v).unwrap();
        let b = fit_sinusoid(&shifted).unwrap();
        let step = TAU / l as f64;
        prop_assert!(wrap_signed(b.phi_hat - a.phi_hat - step).abs() < 1e-10,
            "{} -> {} (step {})", a.phi_hat, b.phi_hat, step);
        // The opposite rotation moves the phase by −2π/L.
        let mut back = v.clone();
        back.rotate_right(1);
        let c = fit_sinusoid(&back).unwrap();
        prop_assert!(wrap_signed(c.phi_hat - a.phi_hat + step).abs() < 1e-10);
    }

    #[test]
    fn fit_is_stationary(seed in any::<u64>(), l in 3usize..24) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phi = rng.random_range(0.0..TAU);
        let v = noisy_values(&mut rng, l, 2.0, 0.8, phi, 0.2);
        let f = fit_sinusoid(&v).unwrap();
        let e0 = objective(&v, f.alpha_hat, f.beta_hat, f.phi_hat);
        let h = 1e-6;
        let p = [f.alpha_hat, f.beta_hat, f.phi_hat];
        for axis in 0..3 {
            let mut up = p;
            let mut dn = p;
            up[axis] += h;
            dn[axis] -= h;
            let g = (objective(&v, up[0], up[1], up[2]) - objective(&v, dn[0], dn[1], dn[2])) / (2.0 * h);
            let scale = 1.0 + v.iter().map(|x| x * x).sum::<f64>();
            prop_assert!(g.abs() <= 1e-6 * scale, "axis {} gradient {}", axis, g);
        }
        prop_assert!(e0 >= 0.0);
    }
}

/// Brute-force minimizer of the least-squares objective on a grid. For each
/// `φ` the objective is an exact quadratic in `(α, β)` whose coefficients are
/// accumulated directly from the samples.
fn grid_minimizer(values: &[f64], n: usize) -> ([f64; 3], [f64; 3]) {
    let l = values.len();
    let thetas = theta_grid(l);
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (da, db, dp) = ((hi - lo) / (n - 1) as f64, (hi - lo) / (n - 1) as f64, TAU / n as f64);
    let srr: f64 = values.iter().map(|r| r * r).sum();
    let sr: f64 = values.iter().sum();
    let mut best = (f64::INFINITY, [0.0; 3]);
    for ip in 0..n {
        let phi = ip as f64 * dp;
        let (mut sc, mut scc, mut src) = (0.0, 0.0, 0.0);
        for (t, r) in thetas.iter().zip(values) {
            let c = (t + phi).cos();
            sc += c;
            scc += c * c;
            src += r * c;
        }
        for ia in 0..n {
            let a = lo + ia as f64 * da;
            let base = srr - 2.0 * a * sr + l as f64 * a * a;
            for ib in 0..n {
                let b = ib as f64 * db;
                let e = base - 2.0 * b * src + 2.0 * a * b * sc + b * b * scc;
                if e < best.0 {
                    best = (e, [a, b, phi]);
                }
            }
        }
    }
    (best.1, [da, db, dp])
}

#[test]
fn fit_matches_grid_search_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let cfg = SystemConfig { antennas: 4, receivers: 1, snr_db: 20.0, ..SystemConfig::default() };
    for _ in 0..10 {
        let hs = channel::draw_channels(&cfg, &mut rng).unwrap();
        let sched = build_schedule(&cfg, 8).unwrap();
        let noise = channel::sigma2_from_snr(&cfg, &sched, &hs).unwrap();
        let fb = estimation::collect_feedback(&hs, &sched, &cfg, &noise, &mut rng).unwrap();
        let values: Vec<f64> = fb.iter().filter(|r| r.v == 2 && r.l <= 8).map(|r| r.value).collect();
        let fit = fit_sinusoid(&values).unwrap();
        let (g, step) = grid_minimizer(&values, 120);
        let e_fit = objective(&values, fit.alpha_hat, fit.beta_hat, fit.phi_hat);
        let e_grid = objective(&values, g[0], g[1], g[2]);
        assert!(e_fit <= e_grid + 1e-12, "{e_fit} > {e_grid}");
        assert!((fit.alpha_hat - g[0]).abs() <= step[0]);
        assert!((fit.beta_hat - g[1]).abs() <= step[1]);
        assert!(wrap_signed(fit.phi_hat - g[2]).abs() <= step[2]);
    }
}

/// With `K = 2` the single-antenna beam is observed `L` times, so
/// `Var(|ĥ_1|²) = (2/(ξP))² σ² / L`.
#[test]
fn two_antenna_repetitions_average_the_reference_magnitude() {
    let l = 6;
    let cfg = SystemConfig { antennas: 2, receivers: 1, power: 1.5, efficiency: 0.9, ..SystemConfig::default() };
    let sched = build_schedule(&cfg, l).unwrap();
    assert_eq!(sched.repeat_last_beam(), l - 1);
    let sigma2 = 1e-3;
    let noise = NoiseModel::new(sigma2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let hs = channel::draw_channels(&cfg, &mut rng).unwrap();
    let trials = 20_000;
    let mut samples = Vec::with_capacity(trials);
    for _ in 0..trials {
        let fb = estimation::collect_feedback(&hs, &sched, &cfg, &noise, &mut rng).unwrap();
        let (est, _) = estimation::estimate_channels(&fb, &sched, &cfg).unwrap();
        samples.push(est[0].magnitudes()[0].powi(2));
    }
    let mean = samples.iter().sum::<f64>() / trials as f64;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
    let xp = cfg.efficiency * cfg.power;
    let expected = (2.0 / xp).powi(2) * sigma2 / l as f64;
    assert!((var / expected - 1.0).abs() < 0.05, "{var} vs {expected}");
    assert!((mean - hs[0].magnitudes()[0].powi(2)).abs() < 5.0 * (expected / trials as f64).sqrt());
}

#[test]
fn epsilon_grows_with_noise() {
    let cfg = SystemConfig { antennas: 4, ..SystemConfig::default() };
    let mut wins = 0;
    for seed in 0..5 {
        let lo = calibrate_epsilon(
            &cfg,
            6,
            NoiseLevel::Fixed(NoiseModel::new(1e-4).unwrap()),
            200,
            95.0,
            &mut ChaCha8Rng::seed_from_u64(seed),
        )
        .unwrap();
        let hi = calibrate_epsilon(
            &cfg,
            6,
            NoiseLevel::Fixed(NoiseModel::new(2e-4).unwrap()),
            200,
            95.0,
            &mut ChaCha8Rng::seed_from_u64(seed),
        )
        .unwrap();
        wins += usize::from(hi.epsilon > lo.epsilon);
    }
    assert_eq!(wins, 5);
}

#[test]
fn calibration_is_seed_deterministic() {
    let cfg = SystemConfig { antennas: 3, ..SystemConfig::default() };
    let a = calibrate_epsilon(&cfg, 4, NoiseLevel::Snr, 100, 95.0, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    let b = calibrate_epsilon(&cfg, 4, NoiseLevel::Snr, 100, 95.0, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    assert_eq!(a, b);
    assert!(a.epsilon > 0.0);
}

#[test]
fn error_decreases_with_feedback_length() {
    // Mean phase error at K = 4, SNR 20 dB should fall between L = 4 and L = 16.
    let cfg = SystemConfig { antennas: 4, receivers: 1, snr_db: 20.0, ..SystemConfig::default() };
    let mean_err = |l: usize| {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let sched = build_schedule(&cfg, l).unwrap();
        let mut total = 0.0;
        for _ in 0..400 {
            let hs = channel::draw_channels(&cfg, &mut rng).unwrap();
            let noise = channel::sigma2_from_snr(&cfg, &sched, &hs).unwrap();
            let fb = estimation::collect_feedback(&hs, &sched, &cfg, &noise, &mut rng).unwrap();
            let (est, _) = estimation::estimate_channels(&fb, &sched, &cfg).unwrap();
            total += estimation::estimation_error_metrics(&est, &hs).unwrap()[0].phase_error_pct;
        }
        total / 400.0
    };
    let (e4, e16) = (mean_err(4), mean_err(16));
    assert!(e16 < e4, "{e16} !< {e4}");
    assert!(e4 < 100.0 / PI * 2.0);
}
