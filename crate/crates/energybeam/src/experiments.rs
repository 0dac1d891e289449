//! Monte-Carlo harness for the two-stage protocol: RSSI training, then one
//! wireless-power block scored on the true channels.
//!
//! Every block draws from independent ChaCha8 streams keyed by
//! `(seed, stream name, sweep point, block)`. Policies at the same sweep
//! point therefore see identical channels, training noise and auxiliary
//! randomness, and the result never depends on the worker count.

use std::fmt;
use std::str::FromStr;

use energybeam_core::beamformer::{self, RobustInstance};
use energybeam_core::channel::{self, ChannelVector, CovarianceMatrix, NoiseModel, SystemConfig};
use energybeam_core::clustering::{self, LloydSettings};
use energybeam_core::codebook::{self, TrainingSchedule};
use energybeam_core::estimation::{self, ChannelEstimate, NoiseLevel};
use energybeam_core::linalg::{self, CMatrix};
use energybeam_core::sdp::SdpSettings;
use energybeam_core::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum SchedulerPolicy {
    /// Cluster on estimated phases, then robust max-min over the tightest
    /// cluster.
    ProposedCluster { q: usize },
    /// Robust max-min over every receiver.
    NoClusterMaxmin,
    /// MRT toward the strongest estimated channel.
    BestChannel,
    /// Isotropic random beam, no training.
    RandomBeam,
    /// MRT toward receiver `block mod N`.
    RoundRobin,
    /// Sum-energy beam on the true channels (plain MRT when N = 1).
    MrtPerfectCsi,
    /// Equal-gain version of the estimated sum-energy beam.
    EgtEstimated,
    /// Sum-energy beam on the estimates.
    MrtEstimated,
}

impl SchedulerPolicy {
    pub fn needs_training(self) -> bool {
        !matches!(self, Self::RandomBeam | Self::MrtPerfectCsi)
    }

    pub fn clusters(self) -> Option<usize> {
        match self {
            Self::ProposedCluster { q } => Some(q),
            Self::NoClusterMaxmin => Some(1),
            _ => None,
        }
    }
}

impl fmt::Display for SchedulerPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::ProposedCluster { q } => write!(f, "proposed-cluster:{q}"),
            Self::NoClusterMaxmin => f.write_str("no-cluster-maxmin"),
            Self::BestChannel => f.write_str("best-channel"),
            Self::RandomBeam => f.write_str("random-beam"),
            Self::RoundRobin => f.write_str("round-robin"),
            Self::MrtPerfectCsi => f.write_str("mrt-perfect-csi"),
            Self::EgtEstimated => f.write_str("egt-estimated"),
            Self::MrtEstimated => f.write_str("mrt-estimated"),
        }
    }
}

impl FromStr for SchedulerPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let p = match s {
            "no-cluster-maxmin" => Self::NoClusterMaxmin,
            "best-channel" | "best-channel-opportunistic" => Self::BestChannel,
            "random-beam" => Self::RandomBeam,
            "round-robin" => Self::RoundRobin,
            "mrt-perfect-csi" => Self::MrtPerfectCsi,
            "egt-estimated" => Self::EgtEstimated,
            "mrt-estimated" => Self::MrtEstimated,
            _ => {
                let q = s
                    .strip_prefix("proposed-cluster:")
                    .and_then(|q| q.parse::<usize>().ok())
                    .ok_or_else(|| Error::Config(format!("unknown policy {s:?}")))?;
                if q == 0 {
                    return Err(Error::Config("proposed-cluster needs Q >= 1".into()));
                }
                Self::ProposedCluster { q }
            }
        };
        Ok(p)
    }
}

impl TryFrom<String> for SchedulerPolicy {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SchedulerPolicy> for String {
    fn from(p: SchedulerPolicy) -> Self {
        p.to_string()
    }
}

/// Training-stage measurement noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum NoiseSpec {
    /// Variance from `snr_db` relative to the block's mean training RSSI.
    Snr,
    Fixed {
        sigma2: f64,
    },
}

impl NoiseSpec {
    fn level(self) -> Result<NoiseLevel> {
        Ok(match self {
            Self::Snr => NoiseLevel::Snr,
            Self::Fixed { sigma2 } => NoiseLevel::Fixed(NoiseModel::new(sigma2)?),
        })
    }
}

/// Uncertainty radius handed to the robust solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum EpsilonSpec {
    Calibrated { percentile: f64, trials: usize },
    Fixed { value: f64 },
}

impl Default for EpsilonSpec {
    fn default() -> Self {
        Self::Calibrated { percentile: 95.0, trials: 1000 }
    }
}

/// Everything a block needs besides its channels and randomness.
#[derive(Debug, Clone)]
pub struct BlockContext {
    pub system: SystemConfig,
    pub schedule: TrainingSchedule,
    pub noise: NoiseSpec,
    pub epsilon: f64,
    pub sdp: SdpSettings,
    pub lloyd: LloydSettings,
}

impl BlockContext {
    pub fn new(system: SystemConfig, training_length: usize, noise: NoiseSpec, epsilon: f64) -> Result<Self> {
        let schedule = codebook::build_schedule(&system, training_length)?;
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::Config(format!("epsilon = {epsilon}, need a finite value >= 0")));
        }
        noise.level()?;
        Ok(Self { system, schedule, noise, epsilon, sdp: SdpSettings::default(), lloyd: LloydSettings::default() })
    }

    pub fn training_length(&self) -> usize {
        self.schedule.training_length()
    }
}

/// Estimates from one training stage plus a digest of every random draw it
/// consumed (channels and noisy feedback).
#[derive(Debug, Clone, PartialEq)]
pub struct Training {
    pub estimates: Vec<ChannelEstimate>,
    pub beams: usize,
    pub digest: String,
}

fn channel_digest(hasher: &mut Sha256, channels: &[ChannelVector]) {
    for h in channels {
        for x in h.magnitudes().iter().chain(h.phases()) {
            hasher.update(x.to_le_bytes());
        }
    }
}

pub fn train(channels: &[ChannelVector], ctx: &BlockContext, rng: &mut ChaCha8Rng) -> Result<Training> {
    let noise = match ctx.noise {
        NoiseSpec::Snr => channel::sigma2_from_snr(&ctx.system, &ctx.schedule, channels)?,
        NoiseSpec::Fixed { sigma2 } => NoiseModel::new(sigma2)?,
    };
    let feedback = estimation::collect_feedback(channels, &ctx.schedule, &ctx.system, &noise, rng)?;
    let (estimates, _) = estimation::estimate_channels(&feedback, &ctx.schedule, &ctx.system)?;
    let mut hasher = Sha256::new();
    channel_digest(&mut hasher, channels);
    for fb in &feedback {
        hasher.update(fb.value.to_le_bytes());
    }
    Ok(Training { estimates, beams: ctx.schedule.total_beams(), digest: hex(&hasher.finalize()) })
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub block: usize,
    pub policy: SchedulerPolicy,
    /// `ξ h_i† C h_i` on the true channels, unit block duration.
    pub energies: Vec<f64>,
    /// Receivers the beam was designed for (`Q*` for cluster policies).
    pub members: Vec<usize>,
    pub t_star: Option<f64>,
    pub rank_ratio: Option<f64>,
    pub covariance: CovarianceMatrix,
    /// Training beams spent (not subtracted from harvest time).
    pub training_beams: usize,
    /// Digest of the channel and feedback draws this block saw.
    pub draw_digest: String,
}

impl TrialRecord {
    pub fn total_energy(&self) -> f64 {
        kahan(self.energies.iter().copied())
    }

    pub fn mean_energy(&self) -> f64 {
        self.total_energy() / self.energies.len() as f64
    }

    pub fn member_mean_energy(&self) -> Option<f64> {
        (!self.members.is_empty())
            .then(|| kahan(self.members.iter().map(|&i| self.energies[i])) / self.members.len() as f64)
    }
}

/// `√P · conj(u₁)` for the top eigenvector `u₁` of `Σ h_i h_i†`: the single
/// beam with the largest total energy, and MRT when there is one channel.
fn sum_energy_beam(channels: &[Vec<Complex64>], power: f64) -> Vec<Complex64> {
    let k = channels[0].len();
    let mut s = CMatrix::zeros(k, k);
    for h in channels {
        s = s.add(&CMatrix::outer(h, h));
    }
    let eig = linalg::hermitian_eigen(&s);
    let root = power.sqrt();
    (0..k).map(|r| eig.vectors[(r, 0)].conj() * root).collect()
}

/// Scores one block. `training` may be shared across policies; when absent
/// and needed it is run here from `rng`.
pub fn run_block(
    block: usize,
    channels: &[ChannelVector],
    policy: SchedulerPolicy,
    ctx: &BlockContext,
    training: Option<&Training>,
    rng: &mut ChaCha8Rng,
) -> Result<TrialRecord> {
    let n = channels.len();
    if n != ctx.system.receivers {
        return Err(Error::Config(format!("{n} channels for {} receivers", ctx.system.receivers)));
    }
    let owned;
    let training = match (policy.needs_training(), training) {
        (false, _) => None,
        (true, Some(t)) => Some(t),
        (true, None) => {
            owned = train(channels, ctx, rng)?;
            Some(&owned)
        }
    };
    let estimates: Vec<Vec<Complex64>> =
        training.map(|t| t.estimates.iter().map(ChannelEstimate::to_complex).collect()).unwrap_or_default();
    let p = ctx.system.power;
    let mut t_star = None;
    let mut rank_ratio = None;
    let (covariance, members) = match policy {
        SchedulerPolicy::ProposedCluster { .. } | SchedulerPolicy::NoClusterMaxmin => {
            let q = policy.clusters().unwrap_or(1);
            let est = &training.expect("trained").estimates;
            let points = clustering::embed_phases(est)?;
            let assignment = clustering::lloyd_cluster(&points, q, rng, &ctx.lloyd)?;
            let (_, members) = clustering::select_cluster(&assignment);
            let group: Vec<Vec<Complex64>> = members.iter().map(|&i| estimates[i].clone()).collect();
            let sol = beamformer::solve_maxmin(&RobustInstance::uniform(&group, ctx.epsilon, p)?, &ctx.sdp)?;
            t_star = Some(sol.t_star);
            rank_ratio = Some(sol.rank_ratio);
            // A single beam is transmitted: the principal part of C.
            (CovarianceMatrix::from_beam(&sol.beam), members)
        }
        SchedulerPolicy::BestChannel => {
            let i = beamformer::best_channel_member(&estimates)?;
            (CovarianceMatrix::from_beam(&beamformer::mrt_beam(&estimates[i], p)?), vec![i])
        }
        SchedulerPolicy::RoundRobin => {
            let i = block % n;
            (CovarianceMatrix::from_beam(&beamformer::mrt_beam(&estimates[i], p)?), vec![i])
        }
        SchedulerPolicy::RandomBeam => {
            (CovarianceMatrix::from_beam(&beamformer::random_beam(ctx.system.antennas, p, rng)), Vec::new())
        }
        SchedulerPolicy::MrtPerfectCsi => {
            let truth: Vec<Vec<Complex64>> = channels.iter().map(ChannelVector::to_complex).collect();
            (CovarianceMatrix::from_beam(&sum_energy_beam(&truth, p)), (0..n).collect())
        }
        SchedulerPolicy::MrtEstimated => {
            (CovarianceMatrix::from_beam(&sum_energy_beam(&estimates, p)), (0..n).collect())
        }
        SchedulerPolicy::EgtEstimated => {
            let direction = sum_energy_beam(&estimates, 1.0);
            // egt_beam conjugates the phases it is given; undo the conjugate
            // already carried by the beam.
            let conj: Vec<Complex64> = direction.iter().map(|z| z.conj()).collect();
            (CovarianceMatrix::from_beam(&beamformer::egt_beam(&conj, p)?), (0..n).collect())
        }
    };
    let energies = channels
        .iter()
        .map(|h| channel::noiseless_rssi(h, &covariance, ctx.system.efficiency))
        .collect::<energybeam_core::Result<Vec<f64>>>()?;
    let draw_digest = match training {
        Some(t) => t.digest.clone(),
        None => {
            let mut hasher = Sha256::new();
            channel_digest(&mut hasher, channels);
            hex(&hasher.finalize())
        }
    };
    Ok(TrialRecord {
        block,
        policy,
        energies,
        members,
        t_star,
        rank_ratio,
        covariance,
        training_beams: training.map_or(0, |t| t.beams),
        draw_digest,
    })
}

/// Independent stream for `(seed, name, keys)`.
pub fn stream(seed: u64, name: &str, keys: &[u64]) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update((name.len() as u64).to_le_bytes());
    hasher.update(name.as_bytes());
    for k in keys {
        hasher.update(k.to_le_bytes());
    }
    ChaCha8Rng::from_seed(hasher.finalize().into())
}

/// Compensated sum; the harness always feeds it in block order.
pub fn kahan(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut carry = 0.0;
    for v in values {
        let y = v - carry;
        let t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
    sum
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub std_dev: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let count = values.len();
        if count == 0 {
            return Self { count, mean: f64::NAN, median: f64::NAN, std_dev: f64::NAN };
        }
        let mean = kahan(values.iter().copied()) / count as f64;
        let var =
            if count > 1 { kahan(values.iter().map(|v| (v - mean) * (v - mean))) / (count - 1) as f64 } else { 0.0 };
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let median = if count % 2 == 1 { sorted[count / 2] } else { 0.5 * (sorted[count / 2 - 1] + sorted[count / 2]) };
        Self { count, mean, median, std_dev: var.sqrt() }
    }
}

/// Q*-membership statistics over many blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub blocks: usize,
    pub counts: Vec<usize>,
    pub frequency: Vec<f64>,
    pub jain_index: f64,
    pub chi_square: f64,
    pub p_value: f64,
}

pub const MIN_FAIRNESS_BLOCKS: usize = 500;

pub fn fairness_report<'a>(
    member_sets: impl IntoIterator<Item = &'a [usize]>,
    receivers: usize,
) -> Result<FairnessReport> {
    let mut counts = vec![0usize; receivers];
    let mut blocks = 0;
    for set in member_sets {
        blocks += 1;
        for &i in set {
            *counts.get_mut(i).ok_or_else(|| Error::Config(format!("member {i} out of range")))? += 1;
        }
    }
    if blocks < MIN_FAIRNESS_BLOCKS {
        return Err(Error::Config(format!("fairness needs >= {MIN_FAIRNESS_BLOCKS} blocks, got {blocks}")));
    }
    let total: usize = counts.iter().sum();
    let sum = total as f64;
    let sum_sq: f64 = counts.iter().map(|&c| (c as f64) * (c as f64)).sum();
    let jain_index = if sum_sq > 0.0 { sum * sum / (receivers as f64 * sum_sq) } else { 1.0 };
    let expected = sum / receivers as f64;
    let (chi_square, p_value) = if receivers > 1 && expected > 0.0 {
        let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        let dist = ChiSquared::new((receivers - 1) as f64).expect("positive degrees of freedom");
        (stat, 1.0 - dist.cdf(stat))
    } else {
        (0.0, 1.0)
    };
    Ok(FairnessReport {
        blocks,
        frequency: counts.iter().map(|&c| c as f64 / blocks as f64).collect(),
        counts,
        jain_index,
        chi_square,
        p_value,
    })
}

/// Ordinary least-squares slope of `y` on `x` with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendFit {
    pub slope: f64,
    pub std_error: f64,
    /// One-sided 95 % upper confidence bound on the slope.
    pub upper_95: f64,
}

pub fn trend(samples: &[(f64, f64)]) -> TrendFit {
    let n = samples.len() as f64;
    let mx = kahan(samples.iter().map(|s| s.0)) / n;
    let my = kahan(samples.iter().map(|s| s.1)) / n;
    let sxx = kahan(samples.iter().map(|s| (s.0 - mx) * (s.0 - mx)));
    let sxy = kahan(samples.iter().map(|s| (s.0 - mx) * (s.1 - my)));
    let slope = sxy / sxx;
    let sse = kahan(samples.iter().map(|s| {
        let r = s.1 - my - slope * (s.0 - mx);
        r * r
    }));
    let std_error = (sse / (n - 2.0) / sxx).sqrt();
    TrendFit { slope, std_error, upper_95: slope + 1.645 * std_error }
}

// ---------------------------------------------------------------------------
// Error-versus-feedback sweep

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateSweepSpec {
    pub system: SystemConfig,
    pub training_lengths: Vec<usize>,
    pub trials: usize,
    pub noise: NoiseSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyEnergy {
    pub policy: SchedulerPolicy,
    pub mean_energy: f64,
    /// `100 · mean(1 − E / E_perfect)`.
    pub mean_loss_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatePoint {
    pub training_length: usize,
    pub trials: usize,
    pub training_beams: usize,
    pub phase_error_pct: Summary,
    pub magnitude_error_pct: Summary,
    pub norm_error: Summary,
    pub energies: Vec<PolicyEnergy>,
    /// `100 · mean(E_mrt / E_egt − 1)` over trials.
    pub mrt_over_egt_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateSweep {
    pub spec: EstimateSweepSpec,
    pub points: Vec<EstimatePoint>,
    /// Per-sample `(L, phase error %)` trend.
    pub phase_trend: TrendFit,
    pub magnitude_trend: TrendFit,
}

pub const FIG2_POLICIES: [SchedulerPolicy; 3] =
    [SchedulerPolicy::MrtPerfectCsi, SchedulerPolicy::MrtEstimated, SchedulerPolicy::EgtEstimated];

struct EstimateTrial {
    errors: Vec<estimation::EstimationError>,
    energies: [f64; 3],
    beams: usize,
}

pub fn sweep_error_vs_feedback(spec: &EstimateSweepSpec) -> Result<EstimateSweep> {
    if spec.trials == 0 {
        return Err(Error::Config("trials must be >= 1".into()));
    }
    if spec.training_lengths.is_empty() {
        return Err(Error::Config("training_lengths is empty".into()));
    }
    let seed = spec.system.seed;
    let mut points = Vec::with_capacity(spec.training_lengths.len());
    let mut phase_samples = Vec::new();
    let mut mag_samples = Vec::new();
    for &l in &spec.training_lengths {
        let ctx = BlockContext::new(spec.system.clone(), l, spec.noise, 0.0)?;
        let trials: Vec<EstimateTrial> = (0..spec.trials)
            .into_par_iter()
            .map(|b| {
                let keys = [l as u64, b as u64];
                let channels = block_channels(&ctx.system, seed, &keys)?;
                let training = train(&channels, &ctx, &mut stream(seed, "training", &keys))?;
                let errors = estimation::estimation_error_metrics(&training.estimates, &channels)?;
                let mut energies = [0.0; 3];
                for (slot, policy) in FIG2_POLICIES.iter().enumerate() {
                    let rec =
                        run_block(b, &channels, *policy, &ctx, Some(&training), &mut stream(seed, "policy", &keys))?;
                    energies[slot] = rec.mean_energy();
                }
                Ok(EstimateTrial { errors, energies, beams: training.beams })
            })
            .collect::<Result<_>>()?;
        let phase: Vec<f64> = trials.iter().flat_map(|t| t.errors.iter().map(|e| e.phase_error_pct)).collect();
        let mag: Vec<f64> = trials.iter().flat_map(|t| t.errors.iter().map(|e| e.magnitude_error_pct)).collect();
        let norm: Vec<f64> = trials.iter().flat_map(|t| t.errors.iter().map(|e| e.norm_error)).collect();
        phase_samples.extend(phase.iter().map(|&y| (l as f64, y)));
        mag_samples.extend(mag.iter().map(|&y| (l as f64, y)));
        let energies = FIG2_POLICIES
            .iter()
            .enumerate()
            .map(|(slot, &policy)| PolicyEnergy {
                policy,
                mean_energy: kahan(trials.iter().map(|t| t.energies[slot])) / trials.len() as f64,
                mean_loss_pct: 100.0 * kahan(trials.iter().map(|t| 1.0 - t.energies[slot] / t.energies[0]))
                    / trials.len() as f64,
            })
            .collect();
        points.push(EstimatePoint {
            training_length: l,
            trials: trials.len(),
            training_beams: trials[0].beams,
            phase_error_pct: Summary::of(&phase),
            magnitude_error_pct: Summary::of(&mag),
            norm_error: Summary::of(&norm),
            energies,
            mrt_over_egt_pct: 100.0 * kahan(trials.iter().map(|t| t.energies[1] / t.energies[2] - 1.0))
                / trials.len() as f64,
        });
    }
    let (phase_trend, magnitude_trend) = if spec.training_lengths.len() > 1 {
        (trend(&phase_samples), trend(&mag_samples))
    } else {
        let nan = TrendFit { slope: f64::NAN, std_error: f64::NAN, upper_95: f64::NAN };
        (nan, nan)
    };
    Ok(EstimateSweep { spec: spec.clone(), points, phase_trend, magnitude_trend })
}

// ---------------------------------------------------------------------------
// Harvested-energy sweep

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarvestSweepSpec {
    /// Base system; `antennas` and `receivers` are overridden by the grids.
    pub system: SystemConfig,
    pub training_length: usize,
    pub clusters: Vec<usize>,
    pub receivers: Vec<usize>,
    pub antennas: Vec<usize>,
    pub trials: usize,
    /// Extra policies evaluated at every grid point next to the clustered one.
    pub baselines: Vec<SchedulerPolicy>,
    pub noise: NoiseSpec,
    pub epsilon: EpsilonSpec,
    pub sdp: SdpSettings,
    pub lloyd: LloydSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarvestPoint {
    pub receivers: usize,
    pub antennas: usize,
    pub policy: SchedulerPolicy,
    pub trials: usize,
    pub epsilon: f64,
    /// Mean over blocks of the network-wide mean per-receiver energy.
    pub mean_energy_all: f64,
    /// Mean over blocks of the mean energy of the targeted receivers.
    pub mean_energy_members: Option<f64>,
    pub mean_members: f64,
    pub mean_t_star: Option<f64>,
    /// Share of solves with `λ₂/λ₁ ≤ 1e-3`.
    pub rank_one_fraction: Option<f64>,
    pub fairness: Option<FairnessReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarvestSweep {
    pub spec: HarvestSweepSpec,
    pub points: Vec<HarvestPoint>,
}

impl HarvestSweep {
    pub fn point(&self, receivers: usize, antennas: usize, policy: SchedulerPolicy) -> Option<&HarvestPoint> {
        self.points.iter().find(|p| p.receivers == receivers && p.antennas == antennas && p.policy == policy)
    }
}

impl HarvestSweepSpec {
    pub fn policies(&self) -> Vec<SchedulerPolicy> {
        let mut out: Vec<SchedulerPolicy> =
            self.clusters.iter().map(|&q| SchedulerPolicy::ProposedCluster { q }).collect();
        for &b in &self.baselines {
            if !out.contains(&b) {
                out.push(b);
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be >= 1".into()));
        }
        for (name, grid) in [("clusters", &self.clusters), ("receivers", &self.receivers), ("antennas", &self.antennas)]
        {
            if grid.is_empty() {
                return Err(Error::Config(format!("{name} grid is empty")));
            }
        }
        let n_min = *self.receivers.iter().min().unwrap_or(&0);
        for p in self.policies() {
            if let Some(q) = p.clusters() {
                if q == 0 || q > n_min {
                    return Err(Error::Config(format!("cluster count {q} must be in 1..={n_min} (smallest N)")));
                }
            }
        }
        for &k in &self.antennas {
            for &n in &self.receivers {
                let sys = SystemConfig { antennas: k, receivers: n, ..self.system.clone() };
                codebook::build_schedule(&sys, self.training_length)?;
            }
        }
        self.noise.level()?;
        match self.epsilon {
            EpsilonSpec::Calibrated { percentile, trials } => {
                if !(percentile > 0.0 && percentile <= 100.0) || trials < 100 {
                    return Err(Error::Config(format!(
                        "epsilon calibration needs percentile in (0, 100] and >= 100 trials, got {percentile} / {trials}"
                    )));
                }
            }
            EpsilonSpec::Fixed { value } => {
                if !(value >= 0.0 && value.is_finite()) {
                    return Err(Error::Config(format!("epsilon value {value} must be finite and >= 0")));
                }
            }
        }
        Ok(())
    }
}

pub fn resolve_epsilon(
    spec: &EpsilonSpec,
    system: &SystemConfig,
    training_length: usize,
    noise: NoiseSpec,
) -> Result<f64> {
    match *spec {
        EpsilonSpec::Fixed { value } => Ok(value),
        EpsilonSpec::Calibrated { percentile, trials } => {
            let mut rng = stream(system.seed, "epsilon", &[system.antennas as u64, training_length as u64]);
            let bound =
                estimation::calibrate_epsilon(system, training_length, noise.level()?, trials, percentile, &mut rng)?;
            Ok(bound.epsilon)
        }
    }
}

pub fn sweep_harvest_vs_clusters(spec: &HarvestSweepSpec) -> Result<HarvestSweep> {
    spec.validate()?;
    let policies = spec.policies();
    let mut points = Vec::new();
    for &n in &spec.receivers {
        for &k in &spec.antennas {
            let ctx = point_context(spec, n, k)?;
            let blocks = simulate_point(spec, &ctx)?;
            for (slot, &policy) in policies.iter().enumerate() {
                let recs: Vec<&TrialRecord> = blocks.iter().map(|b| &b[slot]).collect();
                points.push(aggregate(n, k, policy, ctx.epsilon, &recs)?);
            }
        }
    }
    Ok(HarvestSweep { spec: spec.clone(), points })
}

/// Every block at one `(N, K)` grid point: `result[block][policy]`, policies
/// in [`HarvestSweepSpec::policies`] order.
pub fn simulate_point(spec: &HarvestSweepSpec, ctx: &BlockContext) -> Result<Vec<Vec<TrialRecord>>> {
    let seed = spec.system.seed;
    let policies = spec.policies();
    let (n, k) = (ctx.system.receivers, ctx.system.antennas);
    (0..spec.trials)
        .into_par_iter()
        .map(|b| {
            let keys = [n as u64, k as u64, b as u64];
            let channels = block_channels(&ctx.system, seed, &keys)?;
            let training = train(&channels, ctx, &mut stream(seed, "training", &keys))?;
            policies
                .iter()
                .map(|&p| run_block(b, &channels, p, ctx, Some(&training), &mut stream(seed, "policy", &keys)))
                .collect()
        })
        .collect()
}

/// True channels of one block.
pub fn block_channels(system: &SystemConfig, seed: u64, keys: &[u64]) -> Result<Vec<ChannelVector>> {
    Ok(channel::draw_channels(system, &mut stream(seed, "channels", keys))?)
}

/// Context for one `(N, K)` grid point, with `ε` resolved.
pub fn point_context(spec: &HarvestSweepSpec, receivers: usize, antennas: usize) -> Result<BlockContext> {
    let system = SystemConfig { antennas, receivers, ..spec.system.clone() };
    let epsilon = resolve_epsilon(&spec.epsilon, &system, spec.training_length, spec.noise)?;
    let mut ctx = BlockContext::new(system, spec.training_length, spec.noise, epsilon)?;
    ctx.sdp = spec.sdp;
    ctx.lloyd = spec.lloyd;
    Ok(ctx)
}

fn aggregate(n: usize, k: usize, policy: SchedulerPolicy, epsilon: f64, recs: &[&TrialRecord]) -> Result<HarvestPoint> {
    let trials = recs.len();
    let mean = |it: Vec<f64>| (!it.is_empty()).then(|| kahan(it.iter().copied()) / it.len() as f64);
    let members: Vec<f64> = recs.iter().filter_map(|r| r.member_mean_energy()).collect();
    let t_star: Vec<f64> = recs.iter().filter_map(|r| r.t_star).collect();
    let ranks: Vec<f64> = recs.iter().filter_map(|r| r.rank_ratio).map(|r| f64::from(u8::from(r <= 1e-3))).collect();
    let targeted = recs.iter().any(|r| !r.members.is_empty() && r.members.len() < n);
    let fairness = if targeted && trials >= MIN_FAIRNESS_BLOCKS {
        Some(fairness_report(recs.iter().map(|r| r.members.as_slice()), n)?)
    } else {
        None
    };
    Ok(HarvestPoint {
        receivers: n,
        antennas: k,
        policy,
        trials,
        epsilon,
        mean_energy_all: kahan(recs.iter().map(|r| r.mean_energy())) / trials as f64,
        mean_energy_members: mean(members),
        mean_members: kahan(recs.iter().map(|r| r.members.len() as f64)) / trials as f64,
        mean_t_star: mean(t_star),
        rank_one_fraction: mean(ranks),
        fairness,
    })
}
