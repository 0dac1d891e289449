//! Robust max-min energy beamforming and the single-receiver baselines.
//!
//! With bounded estimation error `‖η_i‖ ≤ ε_i`, the worst-case energy
//! constraint `(ĥ_i + η_i)† C (ĥ_i + η_i) ≥ t` is equivalent (S-lemma) to
//!
//! ```text
//! T_i(C, t, μ_i) = [ μ_i I + C      C ĥ_i                 ]  ⪰ 0,   μ_i ≥ 0
//!                  [ ĥ_i† C         ĥ_i† C ĥ_i − t − μ_i ε_i² ]
//! ```
//!
//! Maximizing `t` subject to these blocks, `C ⪰ 0` and `tr C ≤ P` is the
//! SDP handed to [`crate::sdp`].

use alloc::format;
use alloc::vec::Vec;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::channel::CovarianceMatrix;
use crate::linalg::{self, CMatrix};
use crate::sdp::{self, SdpProblem, SdpSettings, SdpStatus};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustMember {
    /// Estimated channel `ĥ_i`.
    pub channel: Vec<Complex64>,
    /// Error radius `ε_i`.
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustInstance {
    members: Vec<RobustMember>,
    power: f64,
    antennas: usize,
}

impl RobustInstance {
    pub fn new(members: Vec<RobustMember>, power: f64) -> Result<Self> {
        let antennas = members.first().map(|m| m.channel.len()).ok_or(Error::Empty("member list"))?;
        if antennas == 0 {
            return Err(Error::Empty("channel vector"));
        }
        if let Some(m) = members.iter().find(|m| m.channel.len() != antennas) {
            return Err(Error::DimensionMismatch { expected: antennas, found: m.channel.len() });
        }
        if let Some(m) = members.iter().find(|m| !(m.epsilon >= 0.0 && m.epsilon.is_finite())) {
            return Err(Error::InvalidArgument(format!("epsilon {} must be finite and >= 0", m.epsilon)));
        }
        if members.iter().any(|m| m.channel.iter().any(|z| !z.is_finite())) {
            return Err(Error::InvalidArgument("channel entries must be finite".into()));
        }
        if !(power > 0.0 && power.is_finite()) {
            return Err(Error::InvalidArgument(format!("power {power} must be > 0")));
        }
        Ok(Self { members, power, antennas })
    }

    /// Same `ε` for every channel.
    pub fn uniform(channels: &[Vec<Complex64>], epsilon: f64, power: f64) -> Result<Self> {
        Self::new(channels.iter().map(|h| RobustMember { channel: h.clone(), epsilon }).collect(), power)
    }

    pub fn members(&self) -> &[RobustMember] {
        &self.members
    }

    pub fn power(&self) -> f64 {
        self.power
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }
}

/// One S-procedure block, an affine map `(C, t, μ) ↦ T_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmiBlock {
    pub channel: Vec<Complex64>,
    pub epsilon: f64,
}

impl LmiBlock {
    pub fn antennas(&self) -> usize {
        self.channel.len()
    }

    pub fn evaluate(&self, c: &CMatrix, t: f64, mu: f64) -> CMatrix {
        let k = self.channel.len();
        assert_eq!(c.rows(), k, "covariance dimension");
        let ch = c.mul_vec(&self.channel);
        let mut out = CMatrix::zeros(k + 1, k + 1);
        for r in 0..k {
            for col in 0..k {
                out[(r, col)] = c[(r, col)];
            }
            out[(r, r)] += mu;
            out[(r, k)] = ch[r];
            out[(k, r)] = ch[r].conj();
        }
        let hch = linalg::dot(&self.channel, &ch).re;
        out[(k, k)] = Complex64::new(hch - t - mu * self.epsilon * self.epsilon, 0.0);
        out
    }
}

/// The LMI blocks plus the trace cap `tr C ≤ power`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmiSystem {
    pub blocks: Vec<LmiBlock>,
    pub power: f64,
    pub antennas: usize,
}

pub fn build_lmi(instance: &RobustInstance) -> LmiSystem {
    LmiSystem {
        blocks: instance.members.iter().map(|m| LmiBlock { channel: m.channel.clone(), epsilon: m.epsilon }).collect(),
        power: instance.power,
        antennas: instance.antennas,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamSolution {
    pub covariance: CovarianceMatrix,
    /// Worst-case guaranteed energy of every member.
    pub t_star: f64,
    pub mu: Vec<f64>,
    /// Beam weights whose covariance `w̄ wᵀ` is the principal rank-one part
    /// of `C`, rescaled so `‖w‖² = tr C`.
    pub beam: Vec<Complex64>,
    /// `λ₂ / λ₁` of `C`.
    pub rank_ratio: f64,
    pub iterations: usize,
    /// Absolute duality-gap bound of the returned point.
    pub gap: f64,
    pub status: SdpStatus,
}

/// Principal beam of `C` and its `λ₂/λ₁` ratio.
pub fn extract_beam(c: &CMatrix) -> (Vec<Complex64>, f64) {
    let eig = linalg::hermitian_eigen(c);
    let k = c.rows();
    let l1 = eig.values[0];
    let l2 = if k > 1 { eig.values[1].max(0.0) } else { 0.0 };
    let ratio = if l1 > 0.0 { l2 / l1 } else { 0.0 };
    let trace = c.trace().re.max(0.0);
    let scale = libm::sqrt(trace);
    let beam = (0..k).map(|r| eig.vectors[(r, 0)].conj() * scale).collect();
    (beam, ratio)
}

/// Solves the robust max-min SDP. Non-optimal solver exits are errors that
/// carry the iteration trace.
pub fn solve_maxmin(instance: &RobustInstance, settings: &SdpSettings) -> Result<BeamSolution> {
    let system = build_lmi(instance);
    let problem = SdpProblem::from_lmi(&system)?;
    let sol = sdp::solve(&problem, settings);
    if sol.status != SdpStatus::Optimal {
        return Err(Error::Solver {
            message: format!("status {:?} after {} Newton steps", sol.status, sol.newton_iterations),
            trace: sol.log,
        });
    }
    let (beam, rank_ratio) = extract_beam(&sol.covariance);
    Ok(BeamSolution {
        covariance: CovarianceMatrix::from_matrix_unchecked(sol.covariance),
        t_star: sol.t,
        mu: sol.mu,
        beam,
        rank_ratio,
        iterations: sol.newton_iterations,
        gap: sol.gap,
        status: sol.status,
    })
}

/// Maximum-ratio weights `sqrt(P) · conj(ĥ)/‖ĥ‖`.
pub fn mrt_beam(h_hat: &[Complex64], power: f64) -> Result<Vec<Complex64>> {
    let n = linalg::norm(h_hat);
    if !(n > 0.0) {
        return Err(Error::ZeroChannel);
    }
    let s = libm::sqrt(power) / n;
    Ok(h_hat.iter().map(|z| z.conj() * s).collect())
}

/// Equal-gain weights `sqrt(P/K) · e^{−j∠ĥ_k}`.
pub fn egt_beam(h_hat: &[Complex64], power: f64) -> Result<Vec<Complex64>> {
    if h_hat.is_empty() {
        return Err(Error::Empty("channel vector"));
    }
    let amp = libm::sqrt(power / h_hat.len() as f64);
    Ok(h_hat.iter().map(|z| Complex64::from_polar(amp, -z.arg())).collect())
}

/// Isotropic random direction scaled to `‖w‖² = P`.
pub fn random_beam<R: Rng + ?Sized>(antennas: usize, power: f64, rng: &mut R) -> Vec<Complex64> {
    loop {
        let w: Vec<Complex64> =
            (0..antennas).map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))).collect();
        let n = linalg::norm(&w);
        if n > 0.0 {
            let s = libm::sqrt(power) / n;
            return w.into_iter().map(|z| z * s).collect();
        }
    }
}

/// Index of the largest `‖ĥ_i‖`, lowest index on ties.
pub fn best_channel_member(estimates: &[Vec<Complex64>]) -> Result<usize> {
    if estimates.is_empty() {
        return Err(Error::Empty("estimate list"));
    }
    let mut best = (0, f64::NEG_INFINITY);
    for (i, h) in estimates.iter().enumerate() {
        let n = linalg::norm_sqr(h);
        if n > best.1 {
            best = (i, n);
        }
    }
    Ok(best.0)
}

/// Minimum of `(ĥ + η)† C (ĥ + η)` over `samples` random `η` drawn uniformly
/// on the sphere `‖η‖ = ε`.
pub fn sampled_worst_case<R: Rng + ?Sized>(
    h_hat: &[Complex64],
    epsilon: f64,
    c: &CMatrix,
    samples: usize,
    rng: &mut R,
) -> f64 {
    let mut worst = f64::INFINITY;
    let mut perturbed = h_hat.to_vec();
    for _ in 0..samples {
        let dir = random_beam(h_hat.len(), 1.0, rng);
        for ((p, h), d) in perturbed.iter_mut().zip(h_hat).zip(&dir) {
            *p = h + d * epsilon;
        }
        worst = worst.min(c.quad_form(&perturbed));
    }
    worst
}

/// Exact `min_{‖η‖ ≤ ε} (ĥ + η)† C (ĥ + η)` for Hermitian PSD `C`.
///
/// In the eigenbasis `C = Σ c_k u_k u_k†` with `a_k = u_k† ĥ`, the minimizer
/// on the sphere is `η_k = −c_k a_k / (c_k + λ)` for the `λ ≥ 0` that puts
/// `‖η‖ = ε`, giving `Σ c_k λ² |a_k|² / (c_k + λ)²`. If the part of `ĥ` in
/// the range of `C` already fits inside the ball the minimum is 0.
pub fn exact_worst_case(h_hat: &[Complex64], epsilon: f64, c: &CMatrix) -> f64 {
    let eig = linalg::hermitian_eigen(c);
    let k = h_hat.len();
    let scale = eig.values.first().copied().unwrap_or(0.0).abs().max(f64::MIN_POSITIVE);
    let comps: Vec<(f64, f64)> = (0..k)
        .map(|j| {
            let u: Vec<Complex64> = (0..k).map(|r| eig.vectors[(r, j)]).collect();
            (eig.values[j].max(0.0), linalg::dot(&u, h_hat).norm_sqr())
        })
        .filter(|&(cj, _)| cj > 1e-14 * scale)
        .collect();
    if comps.is_empty() {
        return 0.0;
    }
    let range_norm_sq: f64 = comps.iter().map(|&(_, a)| a).sum();
    let eps2 = epsilon * epsilon;
    if range_norm_sq <= eps2 {
        return 0.0;
    }
    let eta_sq = |lam: f64| comps.iter().map(|&(cj, a)| cj * cj * a / ((cj + lam) * (cj + lam))).sum::<f64>();
    let value = |lam: f64| comps.iter().map(|&(cj, a)| cj * lam * lam * a / ((cj + lam) * (cj + lam))).sum::<f64>();
    if eps2 == 0.0 {
        return comps.iter().map(|&(cj, a)| cj * a).sum();
    }
    // ‖η(λ)‖² decreases from range_norm_sq (λ = 0) to 0 (λ → ∞).
    let mut hi = scale;
    while eta_sq(hi) > eps2 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if eta_sq(mid) > eps2 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    value(0.5 * (lo + hi))
}
