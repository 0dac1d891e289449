//! System configuration, random MISO channels and the RSSI law.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::TAU;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::codebook::TrainingSchedule;
use crate::linalg::{self, CMatrix};
use crate::{Error, Result};

/// Channel magnitudes are drawn uniformly from this range.
pub const MAGNITUDE_RANGE: (f64, f64) = (0.1, 1.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Transmit antennas `K`.
    pub antennas: usize,
    /// Energy receivers `N`.
    pub receivers: usize,
    /// Transmit sum-power budget `P` (W).
    pub power: f64,
    /// Rectifier conversion efficiency `ξ`.
    pub efficiency: f64,
    /// Training-stage SNR in dB.
    pub snr_db: f64,
    pub seed: u64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self { antennas: 4, receivers: 1, power: 1.0, efficiency: 1.0, snr_db: 20.0, seed: 0 }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.antennas < 2 {
            return Err(Error::InvalidConfig(format!("antennas = {}, need K >= 2", self.antennas)));
        }
        if self.receivers < 1 {
            return Err(Error::InvalidConfig("receivers = 0, need N >= 1".into()));
        }
        if !(self.power > 0.0 && self.power.is_finite()) {
            return Err(Error::InvalidConfig(format!("power = {}, need P > 0", self.power)));
        }
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(Error::InvalidConfig(format!("efficiency = {}, need 0 < xi <= 1", self.efficiency)));
        }
        if self.snr_db.is_nan() {
            return Err(Error::InvalidConfig("snr_db is NaN".into()));
        }
        Ok(())
    }
}

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_phase(x: f64) -> f64 {
    let w = x - TAU * libm::floor(x / TAU);
    if !(0.0..TAU).contains(&w) {
        0.0
    } else {
        w
    }
}

/// Wraps an angle into `[-π, π)`.
pub fn wrap_signed(x: f64) -> f64 {
    let w = wrap_phase(x + core::f64::consts::PI) - core::f64::consts::PI;
    if w >= core::f64::consts::PI {
        w - TAU
    } else {
        w
    }
}

/// Channel `h = [|h_1| e^{jδ_1}, …, |h_K| e^{jδ_K}]ᵀ` of one receiver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelVector {
    magnitudes: Vec<f64>,
    phases: Vec<f64>,
}

impl ChannelVector {
    /// Phases are wrapped into `[0, 2π)`; magnitudes must be positive.
    pub fn new(magnitudes: Vec<f64>, phases: Vec<f64>) -> Result<Self> {
        if magnitudes.len() != phases.len() {
            return Err(Error::DimensionMismatch { expected: magnitudes.len(), found: phases.len() });
        }
        if magnitudes.is_empty() {
            return Err(Error::Empty("channel vector"));
        }
        if let Some(m) = magnitudes.iter().find(|m| !(**m > 0.0 && m.is_finite())) {
            return Err(Error::InvalidArgument(format!("channel magnitude {m} is not positive")));
        }
        let phases = phases.into_iter().map(wrap_phase).collect();
        Ok(Self { magnitudes, phases })
    }

    pub fn from_complex(h: &[Complex64]) -> Result<Self> {
        Self::new(h.iter().map(|z| z.norm()).collect(), h.iter().map(|z| z.arg()).collect())
    }

    pub fn antennas(&self) -> usize {
        self.magnitudes.len()
    }

    pub fn magnitudes(&self) -> &[f64] {
        &self.magnitudes
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn to_complex(&self) -> Vec<Complex64> {
        self.magnitudes.iter().zip(&self.phases).map(|(&m, &p)| Complex64::from_polar(m, p)).collect()
    }

    /// The channel with antenna 1 taken as the phase reference, i.e.
    /// `h · e^{-jδ_1}`. This is what RSSI-only estimation can recover.
    pub fn referenced(&self) -> Vec<Complex64> {
        let d1 = self.phases[0];
        self.magnitudes.iter().zip(&self.phases).map(|(&m, &p)| Complex64::from_polar(m, p - d1)).collect()
    }

    /// Relative phases `δ_v − δ_1` for `v = 2..K`, wrapped to `[0, 2π)`.
    pub fn relative_phases(&self) -> Vec<f64> {
        self.phases[1..].iter().map(|p| wrap_phase(p - self.phases[0])).collect()
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.magnitudes.iter().map(|m| m * m).sum())
    }
}

/// Additive Gaussian RSSI measurement noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    sigma2: f64,
}

impl NoiseModel {
    pub fn new(sigma2: f64) -> Result<Self> {
        if !(sigma2 >= 0.0 && sigma2.is_finite()) {
            return Err(Error::InvalidArgument(format!("noise variance {sigma2} must be finite and >= 0")));
        }
        Ok(Self { sigma2 })
    }

    pub fn noiseless() -> Self {
        Self { sigma2: 0.0 }
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// One noise sample. A standard normal is always consumed, even when
    /// `σ² = 0`, so the random stream stays aligned across noise levels.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        libm::sqrt(self.sigma2) * z
    }
}

/// Hermitian PSD transmit covariance `C_xx`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceMatrix(CMatrix);

impl CovarianceMatrix {
    /// Validates Hermitian symmetry (1e-12), PSD (λ_min ≥ −1e-9·tr) and the
    /// power budget (tr ≤ P + 1e-9).
    pub fn new(entries: CMatrix, power: f64) -> Result<Self> {
        if !entries.is_square() {
            return Err(Error::DimensionMismatch { expected: entries.rows(), found: entries.cols() });
        }
        let scale = entries.max_abs().max(1.0);
        if entries.hermitian_defect() > 1e-12 * scale {
            return Err(Error::InvalidArgument("covariance is not Hermitian".into()));
        }
        let trace = entries.trace().re;
        if trace > power + 1e-9 {
            return Err(Error::InvalidArgument(format!("covariance trace {trace} exceeds power {power}")));
        }
        let min_eig = linalg::hermitian_min_eigenvalue(&entries);
        if min_eig < -1e-9 * trace.abs().max(f64::MIN_POSITIVE) {
            return Err(Error::InvalidArgument(format!("covariance is not PSD (min eigenvalue {min_eig})")));
        }
        Ok(Self(entries))
    }

    pub fn zero(antennas: usize) -> Self {
        Self(CMatrix::zeros(antennas, antennas))
    }

    /// Covariance `w̄ wᵀ` of beam weights `w` (see the crate-level beam
    /// convention). `h† C h = |wᵀ h|²`.
    pub fn from_beam(weights: &[Complex64]) -> Self {
        let conj: Vec<Complex64> = weights.iter().map(|w| w.conj()).collect();
        Self(CMatrix::outer(&conj, &conj))
    }

    /// Wraps a matrix the caller vouches for (e.g. a solver iterate).
    pub fn from_matrix_unchecked(entries: CMatrix) -> Self {
        Self(entries)
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn antennas(&self) -> usize {
        self.0.rows()
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }
}

/// Draws `N` i.i.d. channels: magnitudes `U[0.1, 1]`, phases `U[0, 2π)`.
pub fn draw_channels<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> Result<Vec<ChannelVector>> {
    cfg.validate()?;
    let (lo, hi) = MAGNITUDE_RANGE;
    Ok((0..cfg.receivers)
        .map(|_| {
            let mut magnitudes = Vec::with_capacity(cfg.antennas);
            let mut phases = Vec::with_capacity(cfg.antennas);
            for _ in 0..cfg.antennas {
                magnitudes.push(lo + (hi - lo) * rng.random::<f64>());
                phases.push(TAU * rng.random::<f64>());
            }
            ChannelVector { magnitudes, phases }
        })
        .collect())
}

/// `ξ h† C h`, without noise.
pub fn noiseless_rssi(h: &ChannelVector, c: &CovarianceMatrix, efficiency: f64) -> Result<f64> {
    if h.antennas() != c.antennas() {
        return Err(Error::DimensionMismatch { expected: c.antennas(), found: h.antennas() });
    }
    Ok(efficiency * c.matrix().quad_form(&h.to_complex()))
}

/// `ξ h† C h + z`, `z ~ N(0, σ²)`.
pub fn rssi<R: Rng + ?Sized>(
    h: &ChannelVector,
    c: &CovarianceMatrix,
    efficiency: f64,
    noise: &NoiseModel,
    rng: &mut R,
) -> Result<f64> {
    let clean = noiseless_rssi(h, c, efficiency)?;
    Ok(clean + noise.sample(rng))
}

/// `ξ |wᵀ h|²`: energy delivered by beam weights `w`.
pub fn beam_energy(h: &[Complex64], weights: &[Complex64], efficiency: f64) -> f64 {
    debug_assert_eq!(h.len(), weights.len());
    let s: Complex64 = h.iter().zip(weights).map(|(a, b)| a * b).sum();
    efficiency * s.norm_sqr()
}

/// Noise variance for a training SNR: `σ² = S̄ / 10^(snr/10)`, where `S̄` is
/// the mean noiseless RSSI over every scheduled training beam and receiver.
pub fn sigma2_from_snr(
    cfg: &SystemConfig,
    schedule: &TrainingSchedule,
    channels: &[ChannelVector],
) -> Result<NoiseModel> {
    if channels.is_empty() {
        return Err(Error::Empty("channel list"));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for h in channels {
        let hc = h.to_complex();
        if hc.len() != schedule.antennas() {
            return Err(Error::DimensionMismatch { expected: schedule.antennas(), found: hc.len() });
        }
        for beam in schedule.beams() {
            total += beam.noiseless_rssi(&hc, cfg.efficiency);
            count += 1;
        }
    }
    let mean = total / count as f64;
    NoiseModel::new(mean / libm::pow(10.0, cfg.snr_db / 10.0))
}

/// `‖h‖` helper on raw complex vectors.
pub fn complex_norm(h: &[Complex64]) -> f64 {
    linalg::norm(h)
}
