//! Training codebooks.
//!
//! Slot `v − 1` (for `v = 2..K`) transmits `L + 1` beams: `L` beams that
//! activate antenna 1 and antenna `v` with a relative phase stepping over
//! the uniform grid `θ_l = 2(l−1)π/L`, then one beam on antenna 1 alone.
//! Every beam carries `sqrt(P/2)` per active antenna.

use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::SystemConfig;
use crate::{Error, Result};

/// Fewer grid points cannot identify the three sinusoid parameters.
pub const MIN_TRAINING_LENGTH: usize = 3;

/// `θ_l = 2(l−1)π/L` for `l = 1..L`.
pub fn theta_grid(training_length: usize) -> Vec<f64> {
    let l = training_length as f64;
    (0..training_length).map(|i| 2.0 * i as f64 * PI / l).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    v: usize,
    beams: Vec<Vec<Complex64>>,
    thetas: Vec<f64>,
}

impl Codebook {
    /// Paired antenna index (1-based, `2..=K`).
    pub fn v(&self) -> usize {
        self.v
    }

    /// The `L + 1` beams; index `l − 1` holds beam `l`.
    pub fn beams(&self) -> &[Vec<Complex64>] {
        &self.beams
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn training_length(&self) -> usize {
        self.thetas.len()
    }
}

pub fn build_codebook(v: usize, antennas: usize, training_length: usize, power: f64) -> Result<Codebook> {
    if training_length < MIN_TRAINING_LENGTH {
        return Err(Error::InsufficientTrainingLength(training_length));
    }
    if v < 2 || v > antennas {
        return Err(Error::AntennaIndexOutOfRange { v, antennas });
    }
    let amp = libm::sqrt(power / 2.0);
    let thetas = theta_grid(training_length);
    let mut beams = Vec::with_capacity(training_length + 1);
    for &theta in &thetas {
        let mut b = alloc::vec![Complex64::new(0.0, 0.0); antennas];
        b[0] = Complex64::new(amp, 0.0);
        b[v - 1] = Complex64::from_polar(amp, theta);
        beams.push(b);
    }
    let mut last = alloc::vec![Complex64::new(0.0, 0.0); antennas];
    last[0] = Complex64::new(amp, 0.0);
    beams.push(last);
    Ok(Codebook { v, beams, thetas })
}

/// One transmitted training beam, tagged for feedback bookkeeping.
#[derive(Debug, Clone, Copy)]
pub struct ScheduledBeam<'a> {
    pub v: usize,
    /// 1-based beam index within the codebook, `1..=L+1`.
    pub l: usize,
    /// 0 for the regular transmission; `1..` for extra repetitions of beam
    /// `L + 1` (two-antenna case only).
    pub repetition: usize,
    pub weights: &'a [Complex64],
    /// Grid phase `θ_l` for paired beams; `None` for the single-antenna beam.
    pub theta: Option<f64>,
}

impl ScheduledBeam<'_> {
    /// Noiseless training RSSI at channel `h`.
    ///
    /// Paired beams report `α + β cos(θ_l + δ_v − δ_1)` with
    /// `α = (ξP/4)(|h_1|² + |h_v|²)` and `β = (ξP/2)|h_1||h_v|`; the
    /// single-antenna beam reports `(ξP/2)|h_1|²`. Here `P/2` is the
    /// per-antenna beam power `|w_1|²`.
    pub fn noiseless_rssi(&self, h: &[Complex64], efficiency: f64) -> f64 {
        let half_p = self.weights[0].norm_sqr();
        let (m1, d1) = (h[0].norm(), h[0].arg());
        match self.theta {
            Some(theta) => {
                let hv = h[self.v - 1];
                let (mv, dv) = (hv.norm(), hv.arg());
                let alpha = efficiency * half_p / 2.0 * (m1 * m1 + mv * mv);
                let beta = efficiency * half_p * m1 * mv;
                alpha + beta * libm::cos(theta + dv - d1)
            }
            None => efficiency * half_p * m1 * m1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSchedule {
    slots: Vec<Codebook>,
    repeat_last_beam: usize,
    antennas: usize,
    training_length: usize,
}

impl TrainingSchedule {
    pub fn slots(&self) -> &[Codebook] {
        &self.slots
    }

    pub fn repeat_last_beam(&self) -> usize {
        self.repeat_last_beam
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    pub fn training_length(&self) -> usize {
        self.training_length
    }

    /// Beams in transmission order: slots by ascending `v`, beams
    /// `l = 1..L+1` within a slot, repetitions of the last beam at the end of
    /// the slot.
    pub fn beams(&self) -> impl Iterator<Item = ScheduledBeam<'_>> + '_ {
        let reps = self.repeat_last_beam;
        self.slots.iter().flat_map(move |cb| {
            let last = cb.beams.len();
            cb.beams
                .iter()
                .enumerate()
                .map(move |(i, w)| ScheduledBeam {
                    v: cb.v,
                    l: i + 1,
                    repetition: 0,
                    weights: w,
                    theta: cb.thetas.get(i).copied(),
                })
                .chain((1..=reps).map(move |r| ScheduledBeam {
                    v: cb.v,
                    l: last,
                    repetition: r,
                    weights: &cb.beams[last - 1],
                    theta: None,
                }))
        })
    }

    /// Number of beams transmitted per training stage (independent of `N`).
    pub fn total_beams(&self) -> usize {
        self.slots.len() * (self.training_length + 1 + self.repeat_last_beam)
    }
}

/// `K − 1` slots. With `K = 2` the single-antenna beam is repeated `L − 1`
/// extra times so that `|h_1|²` is averaged over `L` observations, matching
/// the depth of the sinusoid fit.
pub fn build_schedule(cfg: &SystemConfig, training_length: usize) -> Result<TrainingSchedule> {
    cfg.validate()?;
    if training_length < MIN_TRAINING_LENGTH {
        return Err(Error::InsufficientTrainingLength(training_length));
    }
    let slots = (2..=cfg.antennas)
        .map(|v| build_codebook(v, cfg.antennas, training_length, cfg.power))
        .collect::<Result<Vec<_>>>()?;
    let repeat_last_beam = if cfg.antennas == 2 { training_length - 1 } else { 0 };
    Ok(TrainingSchedule { slots, repeat_last_beam, antennas: cfg.antennas, training_length })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: Complex64, b: Complex64) -> bool {
        (a - b).norm() < 1e-15
    }

    #[test]
    fn worked_example_k3_l3() {
        let p = 2.0;
        let s = libm::sqrt(p / 2.0);
        let b2 = build_codebook(2, 3, 3, p).unwrap();
        let one = Complex64::new(s, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        let expected_row2 =
            [one, Complex64::from_polar(s, 2.0 * PI / 3.0), Complex64::from_polar(s, 4.0 * PI / 3.0), zero];
        for (l, beam) in b2.beams().iter().enumerate() {
            assert!(close(beam[0], one));
            assert!(close(beam[1], expected_row2[l]));
            assert!(close(beam[2], zero));
        }
        let b3 = build_codebook(3, 3, 3, p).unwrap();
        for (l, beam) in b3.beams().iter().enumerate() {
            assert!(close(beam[0], one));
            assert!(close(beam[1], zero));
            assert!(close(beam[2], expected_row2[l]));
        }
    }

    #[test]
    fn last_beam_is_single_antenna() {
        for v in 2..=5 {
            let cb = build_codebook(v, 5, 7, 1.0).unwrap();
            let last = cb.beams().last().unwrap();
            assert_eq!(last.iter().filter(|z| z.norm() > 0.0).count(), 1);
            assert!(last[0].norm() > 0.0);
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        assert_eq!(build_codebook(2, 3, 2, 1.0), Err(Error::InsufficientTrainingLength(2)));
        assert!(matches!(build_codebook(1, 3, 3, 1.0), Err(Error::AntennaIndexOutOfRange { .. })));
        assert!(matches!(build_codebook(4, 3, 3, 1.0), Err(Error::AntennaIndexOutOfRange { .. })));
    }

    #[test]
    fn schedule_shapes() {
        let cfg = SystemConfig { antennas: 4, ..SystemConfig::default() };
        let s = build_schedule(&cfg, 5).unwrap();
        assert_eq!(s.slots().iter().map(Codebook::v).collect::<Vec<_>>(), [2, 3, 4]);
        assert_eq!(s.repeat_last_beam(), 0);
        assert_eq!(s.total_beams(), 3 * 6);
        assert_eq!(s.beams().count(), s.total_beams());

        let cfg2 = SystemConfig { antennas: 2, ..SystemConfig::default() };
        let s2 = build_schedule(&cfg2, 4).unwrap();
        assert_eq!(s2.slots().len(), 1);
        assert_eq!(s2.repeat_last_beam(), 3);
        let single: Vec<_> = s2.beams().filter(|b| b.l == 5).collect();
        assert_eq!(single.len(), 4);
        assert_eq!(single.iter().map(|b| b.repetition).collect::<Vec<_>>(), [0, 1, 2, 3]);
    }

    #[test]
    fn beams_respect_power_budget() {
        let cfg = SystemConfig { antennas: 6, power: 3.5, ..SystemConfig::default() };
        let s = build_schedule(&cfg, 9).unwrap();
        for b in s.beams() {
            let e: f64 = b.weights.iter().map(Complex64::norm_sqr).sum();
            assert!(e <= cfg.power * (1.0 + 1e-15));
        }
    }

    #[test]
    fn grid_orthogonality_identities() {
        for l in 3..=64 {
            let th = theta_grid(l);
            let sc: f64 = th.iter().map(|t| libm::cos(*t)).sum();
            let ss: f64 = th.iter().map(|t| libm::sin(*t)).sum();
            let scs: f64 = th.iter().map(|t| libm::sin(*t) * libm::cos(*t)).sum();
            let sc2: f64 = th.iter().map(|t| libm::cos(*t) * libm::cos(*t)).sum();
            assert!(sc.abs() < 1e-12 && ss.abs() < 1e-12 && scs.abs() < 1e-12, "L = {l}");
            assert!((sc2 - l as f64 / 2.0).abs() < 1e-12, "L = {l}");
        }
    }
}
