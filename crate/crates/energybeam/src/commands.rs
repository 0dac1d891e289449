//! Subcommand bodies, separate from argument parsing so tests can drive them.

use std::path::Path;

use energybeam_core::beamformer::{self, BeamSolution, RobustInstance, RobustMember};
use energybeam_core::channel;
use energybeam_core::clustering::{self, ClusterAssignment};
use energybeam_core::estimation::ChannelEstimate;
use energybeam_core::sdp::{self, CertificateReport, SdpProblem, SdpSettings, SdpSolution};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::LoadedConfig;
use crate::experiments::{self, BlockContext, EstimateSweep, HarvestSweep};
use crate::output::{self, Artifacts};
use crate::Error;

pub fn estimate_sweep(cfg: &LoadedConfig, out_dir: &Path) -> Result<(EstimateSweep, Artifacts), Error> {
    let sweep = experiments::sweep_error_vs_feedback(&cfg.config.estimate_spec())?;
    let csv = output::estimate_csv(&sweep)?;
    let files =
        output::write_artifacts(out_dir, "estimate-sweep", &cfg.config, &csv, &sweep, &output::estimate_svg(&sweep))?;
    Ok((sweep, files))
}

pub fn harvest_sweep(cfg: &LoadedConfig, out_dir: &Path) -> Result<(HarvestSweep, Artifacts), Error> {
    let sweep = experiments::sweep_harvest_vs_clusters(&cfg.config.harvest_spec())?;
    let csv = output::harvest_csv(&sweep)?;
    let files =
        output::write_artifacts(out_dir, "harvest-sweep", &cfg.config, &csv, &sweep, &output::harvest_svg(&sweep))?;
    Ok((sweep, files))
}

/// Robust max-min instance on disk. Channels are `[re, im]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub power: f64,
    pub members: Vec<RobustMember>,
    #[serde(default)]
    pub solver: Option<SdpSettings>,
}

impl InstanceFile {
    pub fn read(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}:{}: {e}", path.display(), e.line())))
    }

    pub fn instance(&self) -> Result<RobustInstance, Error> {
        RobustInstance::new(self.members.clone(), self.power).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn settings(&self) -> SdpSettings {
        self.solver.unwrap_or_default()
    }
}

pub fn solve(path: &Path) -> Result<BeamSolution, Error> {
    let file = InstanceFile::read(path)?;
    let instance = file.instance()?;
    Ok(beamformer::solve_maxmin(&instance, &file.settings())?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterDemo {
    pub receivers: usize,
    /// Relative phases the clustering saw (estimated when drawn at random).
    pub phases: Vec<Vec<f64>>,
    pub assignment: ClusterAssignment,
}

pub fn cluster_demo(cfg: &LoadedConfig) -> Result<ClusterDemo, Error> {
    cfg.validate_demo()?;
    let c = &cfg.config;
    let demo = &c.cluster_demo;
    let estimates: Vec<ChannelEstimate> = if demo.phases.is_empty() {
        let system = c.system();
        let noise = c.noise().map_err(|(k, m)| Error::Config(format!("{k}: {m}")))?;
        let ctx = BlockContext::new(system.clone(), demo.training_length, noise, 0.0)?;
        let channels = channel::draw_channels(&system, &mut experiments::stream(c.seed, "demo-channels", &[]))?;
        experiments::train(&channels, &ctx, &mut experiments::stream(c.seed, "demo-training", &[]))?.estimates
    } else {
        demo.phases.iter().map(|p| ChannelEstimate::new(p.clone(), vec![1.0; p.len() + 1])).collect::<Result<_, _>>()?
    };
    let points = clustering::embed_phases(&estimates)?;
    let assignment = clustering::lloyd_cluster(
        &points,
        demo.clusters,
        &mut experiments::stream(c.seed, "demo-lloyd", &[]),
        &c.lloyd(),
    )?;
    Ok(ClusterDemo {
        receivers: estimates.len(),
        phases: estimates.iter().map(|e| e.phases_rel().to_vec()).collect(),
        assignment,
    })
}

pub fn certify(
    instance: &Path,
    solution: &Path,
    tol: f64,
    samples: usize,
    seed: u64,
) -> Result<CertificateReport, Error> {
    let file = InstanceFile::read(instance)?;
    let inst = file.instance()?;
    let text = std::fs::read_to_string(solution).map_err(|e| Error::Config(format!("{}: {e}", solution.display())))?;
    let sol: BeamSolution =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}:{}: {e}", solution.display(), e.line())))?;
    if sol.covariance.antennas() != inst.antennas() || sol.mu.len() != inst.members().len() {
        return Err(Error::Config("solution does not match the instance dimensions".into()));
    }
    let problem = SdpProblem::from_lmi(&beamformer::build_lmi(&inst))?;
    let as_sdp = SdpSolution {
        covariance: sol.covariance.matrix().clone(),
        t: sol.t_star,
        mu: sol.mu.clone(),
        status: sol.status,
        gap: sol.gap,
        relative_gap: f64::NAN,
        newton_iterations: sol.iterations,
        log: Vec::new(),
    };
    Ok(sdp::check_certificate(&problem, &as_sdp, tol, samples, &mut ChaCha8Rng::seed_from_u64(seed)))
}
