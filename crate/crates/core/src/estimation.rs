//! Channel estimation from RSSI feedback.
//!
//! For slot `v` and beam `l ≤ L`, receiver `i` reports
//! `R = α + β cos(θ_l + φ) + z` with `α = (ξP/4)(|h_1|² + |h_v|²)`,
//! `β = (ξP/2)|h_1||h_v|` and `φ = δ_v − δ_1`. Because the `θ` grid is
//! uniform the least-squares fit decouples into a mean and one DFT bin.
//! Beam `L + 1` reports `(ξP/2)|h_1|² + z`, which pins `|h_1|` and, through
//! `α`, every other magnitude.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write as _;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{self, ChannelVector, NoiseModel, SystemConfig};
use crate::codebook::{self, TrainingSchedule, MIN_TRAINING_LENGTH};
use crate::{Error, Result};

/// Squared-magnitude estimates are clamped here before the square root.
pub const MAGNITUDE_FLOOR_SQ: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RssiFeedback {
    pub receiver: usize,
    /// Paired antenna of the slot (1-based, `2..=K`).
    pub v: usize,
    /// Beam index within the codebook, `1..=L+1`.
    pub l: usize,
    pub repetition: usize,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinusoidFit {
    pub alpha_hat: f64,
    pub beta_hat: f64,
    pub phi_hat: f64,
    /// Both DFT components were exactly zero; `phi_hat` is set to 0.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelEstimate {
    phases_rel: Vec<f64>,
    magnitudes: Vec<f64>,
    fits: Vec<SinusoidFit>,
}

impl ChannelEstimate {
    /// `phases_rel` has `K − 1` entries (antennas 2..K), `magnitudes` has `K`.
    pub fn new(phases_rel: Vec<f64>, magnitudes: Vec<f64>) -> Result<Self> {
        if phases_rel.len() + 1 != magnitudes.len() {
            return Err(Error::DimensionMismatch { expected: magnitudes.len() - 1, found: phases_rel.len() });
        }
        Ok(Self { phases_rel: phases_rel.into_iter().map(channel::wrap_phase).collect(), magnitudes, fits: Vec::new() })
    }

    /// Error-free estimate of a true channel (antenna 1 as phase reference).
    pub fn perfect(h: &ChannelVector) -> Self {
        Self { phases_rel: h.relative_phases(), magnitudes: h.magnitudes().to_vec(), fits: Vec::new() }
    }

    pub fn phases_rel(&self) -> &[f64] {
        &self.phases_rel
    }

    pub fn magnitudes(&self) -> &[f64] {
        &self.magnitudes
    }

    /// Per-slot sinusoid fits (empty for estimates not produced from feedback).
    pub fn fits(&self) -> &[SinusoidFit] {
        &self.fits
    }

    pub fn antennas(&self) -> usize {
        self.magnitudes.len()
    }

    /// `ĥ` with `δ_1 = 0`.
    pub fn to_complex(&self) -> Vec<Complex64> {
        core::iter::once(0.0)
            .chain(self.phases_rel.iter().copied())
            .zip(&self.magnitudes)
            .map(|(p, &m)| Complex64::from_polar(m, p))
            .collect()
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.magnitudes.iter().map(|m| m * m).sum())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBound {
    pub epsilon: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EstimationDiagnostics {
    /// `(receiver, antenna)` pairs (antenna 1-based) whose squared magnitude
    /// estimate hit [`MAGNITUDE_FLOOR_SQ`].
    pub clamped: Vec<(usize, usize)>,
    /// `(receiver, v)` slots where the phase fit was degenerate.
    pub degenerate: Vec<(usize, usize)>,
}

/// Every receiver measures every scheduled beam; records are produced beam
/// by beam (schedule order), receivers in index order within a beam, each
/// with an independent noise sample.
pub fn collect_feedback<R: Rng + ?Sized>(
    channels: &[ChannelVector],
    schedule: &TrainingSchedule,
    cfg: &SystemConfig,
    noise: &NoiseModel,
    rng: &mut R,
) -> Result<Vec<RssiFeedback>> {
    let hs: Vec<Vec<Complex64>> = channels.iter().map(ChannelVector::to_complex).collect();
    if let Some(h) = hs.iter().find(|h| h.len() != schedule.antennas()) {
        return Err(Error::DimensionMismatch { expected: schedule.antennas(), found: h.len() });
    }
    let mut out = Vec::with_capacity(schedule.total_beams() * channels.len());
    for beam in schedule.beams() {
        for (receiver, h) in hs.iter().enumerate() {
            let value = beam.noiseless_rssi(h, cfg.efficiency) + noise.sample(rng);
            out.push(RssiFeedback { receiver, v: beam.v, l: beam.l, repetition: beam.repetition, value });
        }
    }
    Ok(out)
}

/// Closed-form least-squares fit of `α + β cos(θ_l + φ)` on the uniform grid.
pub fn fit_sinusoid(values: &[f64]) -> Result<SinusoidFit> {
    let l = values.len();
    if l < MIN_TRAINING_LENGTH {
        return Err(Error::InsufficientTrainingLength(l));
    }
    let thetas = codebook::theta_grid(l);
    let (mut sc, mut ss, mut sum) = (0.0, 0.0, 0.0);
    for (&r, &th) in values.iter().zip(&thetas) {
        sc += r * libm::cos(th);
        ss += r * libm::sin(th);
        sum += r;
    }
    let degenerate = sc == 0.0 && ss == 0.0;
    let phi_hat = if degenerate { 0.0 } else { channel::wrap_phase(libm::atan2(-ss, sc)) };
    Ok(SinusoidFit { alpha_hat: sum / l as f64, beta_hat: 2.0 / l as f64 * libm::hypot(sc, ss), phi_hat, degenerate })
}

/// Runs the sinusoid fit on every slot and recovers magnitudes.
pub fn estimate_channels(
    feedback: &[RssiFeedback],
    schedule: &TrainingSchedule,
    cfg: &SystemConfig,
) -> Result<(Vec<ChannelEstimate>, EstimationDiagnostics)> {
    let n = cfg.receivers;
    let k = schedule.antennas();
    let l_len = schedule.training_length();
    let per_slot = l_len + 1 + schedule.repeat_last_beam();
    let slots = schedule.slots().len();

    // table[(i * slots + s) * per_slot + idx]
    let mut table: Vec<Option<f64>> = vec![None; n * slots * per_slot];
    for fb in feedback {
        if fb.receiver >= n || fb.v < 2 || fb.v > k || fb.l == 0 || fb.l > l_len + 1 {
            return Err(Error::InvalidArgument(format!("feedback record out of range: {fb:?}")));
        }
        let idx = match (fb.l, fb.repetition) {
            (l, 0) => l - 1,
            (l, r) if l == l_len + 1 && r <= schedule.repeat_last_beam() => l_len + r,
            _ => return Err(Error::InvalidArgument(format!("unexpected repetition: {fb:?}"))),
        };
        let cell = &mut table[(fb.receiver * slots + (fb.v - 2)) * per_slot + idx];
        if cell.is_some() {
            return Err(Error::InvalidArgument(format!("duplicate feedback record: {fb:?}")));
        }
        *cell = Some(fb.value);
    }

    let mut gaps = String::new();
    let mut n_gaps = 0usize;
    for i in 0..n {
        for s in 0..slots {
            for idx in 0..per_slot {
                if table[(i * slots + s) * per_slot + idx].is_none() {
                    if n_gaps < 8 {
                        let (l, rep) = if idx <= l_len { (idx + 1, 0) } else { (l_len + 1, idx - l_len) };
                        let _ = write!(
                            gaps,
                            "{}(receiver {i}, v {}, l {l}, repetition {rep})",
                            if n_gaps > 0 { ", " } else { "" },
                            s + 2
                        );
                    }
                    n_gaps += 1;
                }
            }
        }
    }
    if n_gaps > 0 {
        if n_gaps > 8 {
            let _ = write!(gaps, " and {} more", n_gaps - 8);
        }
        return Err(Error::MissingFeedback(gaps));
    }

    let xi_p = cfg.efficiency * cfg.power;
    let mut diagnostics = EstimationDiagnostics::default();
    let mut estimates = Vec::with_capacity(n);
    for i in 0..n {
        let row = |s: usize| &table[(i * slots + s) * per_slot..(i * slots + s + 1) * per_slot];
        let mut fits = Vec::with_capacity(slots);
        let mut single_sum = 0.0;
        let mut single_count = 0usize;
        for s in 0..slots {
            let cells = row(s);
            let values: Vec<f64> = cells[..l_len].iter().map(|c| c.unwrap_or_default()).collect();
            let fit = fit_sinusoid(&values)?;
            if fit.degenerate {
                diagnostics.degenerate.push((i, s + 2));
            }
            fits.push(fit);
            for c in &cells[l_len..] {
                single_sum += c.unwrap_or_default();
                single_count += 1;
            }
        }

        let mut h1_sq = 2.0 / xi_p * (single_sum / single_count as f64);
        if !(h1_sq >= MAGNITUDE_FLOOR_SQ) {
            h1_sq = MAGNITUDE_FLOOR_SQ;
            diagnostics.clamped.push((i, 1));
        }
        let mut magnitudes = Vec::with_capacity(k);
        magnitudes.push(libm::sqrt(h1_sq));
        for (s, fit) in fits.iter().enumerate() {
            let mut hv_sq = 4.0 / xi_p * fit.alpha_hat - h1_sq;
            if !(hv_sq >= MAGNITUDE_FLOOR_SQ) {
                hv_sq = MAGNITUDE_FLOOR_SQ;
                diagnostics.clamped.push((i, s + 2));
            }
            magnitudes.push(libm::sqrt(hv_sq));
        }
        estimates.push(ChannelEstimate { phases_rel: fits.iter().map(|f| f.phi_hat).collect(), magnitudes, fits });
    }
    Ok((estimates, diagnostics))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimationError {
    /// `100 · mean_v |wrap(φ̂_v − φ_v)| / π`.
    pub phase_error_pct: f64,
    /// `100 · mean_k ||ĥ_k| − |h_k|| / |h_k|`.
    pub magnitude_error_pct: f64,
    /// `‖ĥ − h e^{−jδ_1}‖`.
    pub norm_error: f64,
}

pub fn estimation_error_metrics(
    estimates: &[ChannelEstimate],
    truths: &[ChannelVector],
) -> Result<Vec<EstimationError>> {
    if estimates.len() != truths.len() {
        return Err(Error::DimensionMismatch { expected: truths.len(), found: estimates.len() });
    }
    estimates
        .iter()
        .zip(truths)
        .map(|(est, h)| {
            if est.antennas() != h.antennas() {
                return Err(Error::DimensionMismatch { expected: h.antennas(), found: est.antennas() });
            }
            let true_rel = h.relative_phases();
            let phase = if true_rel.is_empty() {
                0.0
            } else {
                est.phases_rel.iter().zip(&true_rel).map(|(a, b)| libm::fabs(channel::wrap_signed(a - b))).sum::<f64>()
                    / true_rel.len() as f64
            };
            let mag = est.magnitudes.iter().zip(h.magnitudes()).map(|(a, b)| libm::fabs(a - b) / b).sum::<f64>()
                / h.antennas() as f64;
            let diff: Vec<Complex64> = est.to_complex().iter().zip(h.referenced()).map(|(a, b)| a - b).collect();
            Ok(EstimationError {
                phase_error_pct: 100.0 * phase / core::f64::consts::PI,
                magnitude_error_pct: 100.0 * mag,
                norm_error: channel::complex_norm(&diff),
            })
        })
        .collect()
}

/// Noise level for Monte-Carlo calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NoiseLevel {
    /// Fixed measurement variance.
    Fixed(NoiseModel),
    /// Variance set per trial from the training SNR (`cfg.snr_db`).
    Snr,
}

/// Uniform estimation-error bound: the given percentile (nearest rank) of
/// `‖ĥ − h e^{−jδ_1}‖` over fresh single-receiver trials.
pub fn calibrate_epsilon<R: Rng + ?Sized>(
    cfg: &SystemConfig,
    training_length: usize,
    noise: NoiseLevel,
    trials: usize,
    percentile: f64,
    rng: &mut R,
) -> Result<ErrorBound> {
    if trials < 100 {
        return Err(Error::InvalidArgument(format!("calibration needs >= 100 trials, got {trials}")));
    }
    if !(percentile > 0.0 && percentile <= 100.0) {
        return Err(Error::InvalidArgument(format!("percentile {percentile} outside (0, 100]")));
    }
    let single = SystemConfig { receivers: 1, ..cfg.clone() };
    let schedule = codebook::build_schedule(&single, training_length)?;
    let mut errors = Vec::with_capacity(trials);
    for _ in 0..trials {
        let hs = channel::draw_channels(&single, rng)?;
        let model = match noise {
            NoiseLevel::Fixed(m) => m,
            NoiseLevel::Snr => channel::sigma2_from_snr(&single, &schedule, &hs)?,
        };
        let fb = collect_feedback(&hs, &schedule, &single, &model, rng)?;
        let (est, _) = estimate_channels(&fb, &schedule, &single)?;
        errors.push(estimation_error_metrics(&est, &hs)?[0].norm_error);
    }
    errors.sort_by(f64::total_cmp);
    let rank = libm::ceil(percentile / 100.0 * trials as f64) as usize;
    Ok(ErrorBound { epsilon: errors[rank.clamp(1, trials) - 1] })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::build_schedule;
    use core::f64::consts::{FRAC_PI_2, PI};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fit_noiseless_examples() {
        let f = fit_sinusoid(&[3.0, 2.0, 1.0, 2.0]).unwrap();
        assert!((f.alpha_hat - 2.0).abs() < 1e-15);
        assert!((f.beta_hat - 1.0).abs() < 1e-15);
        assert!(f.phi_hat.abs() < 1e-15 || (f.phi_hat - 2.0 * PI).abs() < 1e-15);

        let g = fit_sinusoid(&[2.0, 1.0, 2.0, 3.0]).unwrap();
        assert!((g.phi_hat - FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn fit_flat_values_are_degenerate() {
        let f = fit_sinusoid(&[1.5; 6]).unwrap();
        // The DFT bin of a constant is exactly zero only up to rounding of
        // the grid; force the exact case with zeros.
        assert!((f.alpha_hat - 1.5).abs() < 1e-15);
        let z = fit_sinusoid(&[0.0; 5]).unwrap();
        assert!(z.degenerate);
        assert_eq!(z.phi_hat, 0.0);
    }

    #[test]
    fn fit_rejects_short_input() {
        assert_eq!(fit_sinusoid(&[1.0, 2.0]), Err(Error::InsufficientTrainingLength(2)));
    }

    #[test]
    fn feedback_count_and_noiseless_law() {
        let cfg = SystemConfig { antennas: 4, receivers: 5, power: 1.7, efficiency: 0.6, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let hs = channel::draw_channels(&cfg, &mut rng).unwrap();
        let sched = build_schedule(&cfg, 8).unwrap();
        let fb = collect_feedback(&hs, &sched, &cfg, &NoiseModel::noiseless(), &mut rng).unwrap();
        assert_eq!(fb.len(), 5 * 3 * 9);
        let thetas = codebook::theta_grid(8);
        for r in &fb {
            let h = &hs[r.receiver];
            let (m1, mv) = (h.magnitudes()[0], h.magnitudes()[r.v - 1]);
            let xp = cfg.efficiency * cfg.power;
            let expected = if r.l <= 8 {
                let alpha = xp / 4.0 * (m1 * m1 + mv * mv);
                let beta = xp / 2.0 * m1 * mv;
                let phi = h.phases()[r.v - 1] - h.phases()[0];
                alpha + beta * libm::cos(thetas[r.l - 1] + phi)
            } else {
                xp / 2.0 * m1 * m1
            };
            assert!((r.value - expected).abs() < 1e-14, "{r:?} vs {expected}");
        }
    }

    #[test]
    fn noiseless_inversion_unit_channel() {
        let cfg = SystemConfig { antennas: 2, receivers: 1, power: 2.0, efficiency: 1.0, ..Default::default() };
        let h = ChannelVector::new(alloc::vec![1.0, 1.0], alloc::vec![0.3, 1.1]).unwrap();
        let sched = build_schedule(&cfg, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let fb = collect_feedback(core::slice::from_ref(&h), &sched, &cfg, &NoiseModel::noiseless(), &mut rng).unwrap();
        let (est, diag) = estimate_channels(&fb, &sched, &cfg).unwrap();
        assert!((est[0].fits()[0].alpha_hat - 1.0).abs() < 1e-14);
        assert!((est[0].magnitudes()[0] - 1.0).abs() < 1e-14);
        assert!((est[0].magnitudes()[1] - 1.0).abs() < 1e-14);
        assert!((est[0].phases_rel()[0] - 0.8).abs() < 1e-14);
        assert!(diag.clamped.is_empty());
    }

    #[test]
    fn clamp_path_is_flagged() {
        let cfg = SystemConfig { antennas: 3, receivers: 1, power: 1.0, ..Default::default() };
        let sched = build_schedule(&cfg, 3).unwrap();
        // DC level of slot v = 2 far below the single-antenna level.
        let mut fb = Vec::new();
        for v in 2..=3 {
            for l in 1..=4 {
                let value = if l == 4 {
                    0.5
                } else if v == 2 {
                    0.01
                } else {
                    0.5
                };
                fb.push(RssiFeedback { receiver: 0, v, l, repetition: 0, value });
            }
        }
        let (est, diag) = estimate_channels(&fb, &sched, &cfg).unwrap();
        assert_eq!(diag.clamped, alloc::vec![(0, 2)]);
        assert!((est[0].magnitudes()[1] - libm::sqrt(MAGNITUDE_FLOOR_SQ)).abs() < 1e-18);
    }

    #[test]
    fn missing_records_are_listed() {
        let cfg = SystemConfig { antennas: 3, receivers: 2, ..Default::default() };
        let sched = build_schedule(&cfg, 3).unwrap();
        let hs = channel::draw_channels(&cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let mut fb =
            collect_feedback(&hs, &sched, &cfg, &NoiseModel::noiseless(), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        fb.retain(|r| !(r.receiver == 1 && r.v == 3 && r.l == 2));
        match estimate_channels(&fb, &sched, &cfg) {
            Err(Error::MissingFeedback(msg)) => assert!(msg.contains("receiver 1, v 3, l 2"), "{msg}"),
            other => panic!("expected missing feedback, got {other:?}"),
        }
    }

    #[test]
    fn metrics_identity_and_half_turn() {
        let h = ChannelVector::new(alloc::vec![0.4, 0.8, 0.3], alloc::vec![1.0, 2.0, 5.0]).unwrap();
        let perfect = ChannelEstimate::perfect(&h);
        let m = estimation_error_metrics(core::slice::from_ref(&perfect), core::slice::from_ref(&h)).unwrap();
        assert!(m[0].phase_error_pct.abs() < 1e-12);
        assert!(m[0].magnitude_error_pct.abs() < 1e-12);
        assert!(m[0].norm_error < 1e-12);

        let flipped =
            ChannelEstimate::new(perfect.phases_rel().iter().map(|p| p + PI).collect(), perfect.magnitudes().to_vec())
                .unwrap();
        let m = estimation_error_metrics(&[flipped], &[h]).unwrap();
        assert!((m[0].phase_error_pct - 100.0).abs() < 1e-9);
    }

    #[test]
    fn epsilon_calibration_basics() {
        let cfg = SystemConfig { antennas: 3, ..Default::default() };
        let zero = calibrate_epsilon(
            &cfg,
            4,
            NoiseLevel::Fixed(NoiseModel::noiseless()),
            100,
            95.0,
            &mut ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap();
        assert!(zero.epsilon <= 1e-9);

        let noisy = NoiseLevel::Fixed(NoiseModel::new(1e-3).unwrap());
        let p95 = calibrate_epsilon(&cfg, 4, noisy, 200, 95.0, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let p100 = calibrate_epsilon(&cfg, 4, noisy, 200, 100.0, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        assert!(p100.epsilon >= p95.epsilon);

        assert!(calibrate_epsilon(&cfg, 4, noisy, 99, 95.0, &mut ChaCha8Rng::seed_from_u64(8)).is_err());
        assert!(calibrate_epsilon(&cfg, 4, noisy, 100, 0.0, &mut ChaCha8Rng::seed_from_u64(8)).is_err());
    }
}
