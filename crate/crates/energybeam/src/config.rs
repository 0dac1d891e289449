//! TOML run configuration.
//!
//! Every section is optional and every key has a default. Unknown keys are
//! rejected. Any key can be overridden from the command line with
//! `--set section.key=value`, where `value` is TOML (`--set harvest.clusters=[1,3]`).
//! Validation problems are reported as `file:line: key: message`.

use std::path::{Path, PathBuf};

use energybeam_core::channel::SystemConfig;
use energybeam_core::clustering::LloydSettings;
use energybeam_core::codebook;
use energybeam_core::sdp::SdpSettings;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::experiments::{self, EpsilonSpec, EstimateSweepSpec, HarvestSweepSpec, NoiseSpec, SchedulerPolicy};
use crate::Error;

/// Environment variable consulted for the output directory when neither the
/// command line nor the config names one.
pub const OUT_DIR_ENV: &str = "ENERGYBEAM_OUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemSection {
    pub antennas: usize,
    pub receivers: usize,
    pub power: f64,
    pub efficiency: f64,
    pub snr_db: f64,
}

impl Default for SystemSection {
    fn default() -> Self {
        let d = SystemConfig::default();
        Self {
            antennas: d.antennas,
            receivers: d.receivers,
            power: d.power,
            efficiency: d.efficiency,
            snr_db: d.snr_db,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimateSection {
    pub training_lengths: Vec<usize>,
    pub trials: usize,
}

impl Default for EstimateSection {
    fn default() -> Self {
        Self { training_lengths: vec![3, 4, 6, 8, 12, 16], trials: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HarvestSection {
    pub training_length: usize,
    pub clusters: Vec<usize>,
    pub receivers: Vec<usize>,
    pub antennas: Vec<usize>,
    pub trials: usize,
    pub baselines: Vec<SchedulerPolicy>,
}

impl Default for HarvestSection {
    fn default() -> Self {
        Self {
            training_length: 8,
            clusters: vec![1, 2, 3],
            receivers: vec![40],
            antennas: vec![4],
            trials: 1000,
            baselines: vec![SchedulerPolicy::BestChannel, SchedulerPolicy::RandomBeam],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpsilonSection {
    /// `"calibrated"` or `"fixed"`.
    pub mode: String,
    pub percentile: f64,
    pub trials: usize,
    pub value: f64,
}

impl Default for EpsilonSection {
    fn default() -> Self {
        Self { mode: "calibrated".into(), percentile: 95.0, trials: 1000, value: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    /// `"snr"` or `"fixed"`.
    pub mode: String,
    pub sigma2: f64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self { mode: "snr".into(), sigma2: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SdpSettings::default();
        Self { tol: d.tol, max_iter: d.max_iter }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LloydSection {
    pub max_iter: usize,
    pub tol: f64,
    pub restarts: usize,
}

impl Default for LloydSection {
    fn default() -> Self {
        let d = LloydSettings::default();
        Self { max_iter: d.max_iter, tol: d.tol, restarts: d.restarts }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusterDemoSection {
    pub clusters: usize,
    /// Relative phases `[φ_2, …, φ_K]` per receiver. When empty, receivers
    /// are drawn from `[system]` and estimated through training.
    pub phases: Vec<Vec<f64>>,
    pub training_length: usize,
}

impl Default for ClusterDemoSection {
    fn default() -> Self {
        Self { clusters: 2, phases: Vec::new(), training_length: 8 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Output directory; falls back to `$ENERGYBEAM_OUT_DIR`, then `out`.
    pub output_dir: Option<PathBuf>,
    pub system: SystemSection,
    pub noise: NoiseSection,
    pub estimate: EstimateSection,
    pub harvest: HarvestSection,
    pub epsilon: EpsilonSection,
    pub solver: SolverSection,
    pub lloyd: LloydSection,
    pub cluster_demo: ClusterDemoSection,
}

/// A loaded config together with its source text, kept for line anchoring.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub source: String,
    pub path: PathBuf,
}

impl LoadedConfig {
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, Error> {
        let source = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&source, path, overrides)
    }

    pub fn parse(source: &str, path: &Path, overrides: &[String]) -> Result<Self, Error> {
        let shown = path.display();
        let mut table: toml::Table =
            source.parse().map_err(|e: toml::de::Error| Error::Config(format!("{shown}: {e}")))?;
        for item in overrides {
            apply_override(&mut table, item)?;
        }
        let config: RunConfig =
            RunConfig::deserialize(table).map_err(|e| Error::Config(format!("{shown}: {}", e.message())))?;
        let loaded = Self { config, source: source.to_owned(), path: path.to_owned() };
        loaded.config.validate().map_err(|(key, msg)| Error::Config(loaded.anchor(&key, &msg)))?;
        Ok(loaded)
    }

    pub fn validate_demo(&self) -> Result<(), Error> {
        self.config.validate_demo().map_err(|(key, msg)| Error::Config(self.anchor(&key, &msg)))
    }

    /// `file:line: key: message`, with the line of `key` when it is written
    /// in the file.
    fn anchor(&self, key: &str, msg: &str) -> String {
        let shown = self.path.display();
        match locate(&self.source, key) {
            Some(line) => format!("{shown}:{line}: {key}: {msg}"),
            None => format!("{shown}: {key}: {msg}"),
        }
    }

    /// Resolved output directory: command line, config, environment, `out`.
    pub fn output_dir(&self, cli: Option<&Path>) -> PathBuf {
        if let Some(p) = cli {
            return p.to_owned();
        }
        if let Some(p) = &self.config.output_dir {
            return p.clone();
        }
        std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("out"))
    }
}

fn apply_override(table: &mut toml::Table, item: &str) -> Result<(), Error> {
    let (key, raw) =
        item.split_once('=').ok_or_else(|| Error::Config(format!("override {item:?} is not key=value")))?;
    let key = key.trim();
    let value: toml::Value = format!("v = {raw}")
        .parse::<toml::Table>()
        .map(|mut t| t.remove("v").expect("parsed key"))
        .or_else(|_| Ok::<_, Error>(toml::Value::String(raw.trim().to_owned())))?;
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts
        .pop()
        .filter(|s| !s.is_empty())
        .ok_or_else(|| Error::Config(format!("empty override key in {item:?}")))?;
    let mut cur = table;
    for part in parts {
        cur = cur
            .entry(part)
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {key}: {part} is not a section")))?;
    }
    cur.insert(last.to_owned(), value);
    Ok(())
}

/// 1-based line where `section.key` (or a top-level `key`) is assigned.
fn locate(source: &str, key: &str) -> Option<usize> {
    let (section, name) = match key.rsplit_once('.') {
        Some((s, n)) => (s, n),
        None => ("", key),
    };
    let mut current = String::new();
    for (i, line) in source.lines().enumerate() {
        let t = line.trim();
        if let Some(head) = t.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            current = head.trim().to_owned();
            continue;
        }
        if let Some((k, _)) = t.split_once('=') {
            if current == section && k.trim() == name {
                return Some(i + 1);
            }
        }
    }
    None
}

type Invalid = (String, String);

fn invalid(key: &str, msg: impl Into<String>) -> Invalid {
    (key.to_owned(), msg.into())
}

impl RunConfig {
    pub fn system(&self) -> SystemConfig {
        SystemConfig {
            antennas: self.system.antennas,
            receivers: self.system.receivers,
            power: self.system.power,
            efficiency: self.system.efficiency,
            snr_db: self.system.snr_db,
            seed: self.seed,
        }
    }

    pub fn noise(&self) -> Result<NoiseSpec, Invalid> {
        match self.noise.mode.as_str() {
            "snr" => Ok(NoiseSpec::Snr),
            "fixed" => Ok(NoiseSpec::Fixed { sigma2: self.noise.sigma2 }),
            m => Err(invalid("noise.mode", format!("unknown mode {m:?}, expected \"snr\" or \"fixed\""))),
        }
    }

    pub fn epsilon(&self) -> Result<EpsilonSpec, Invalid> {
        match self.epsilon.mode.as_str() {
            "calibrated" => {
                Ok(EpsilonSpec::Calibrated { percentile: self.epsilon.percentile, trials: self.epsilon.trials })
            }
            "fixed" => Ok(EpsilonSpec::Fixed { value: self.epsilon.value }),
            m => Err(invalid("epsilon.mode", format!("unknown mode {m:?}, expected \"calibrated\" or \"fixed\""))),
        }
    }

    pub fn sdp(&self) -> SdpSettings {
        SdpSettings { tol: self.solver.tol, max_iter: self.solver.max_iter }
    }

    pub fn lloyd(&self) -> LloydSettings {
        LloydSettings { max_iter: self.lloyd.max_iter, tol: self.lloyd.tol, restarts: self.lloyd.restarts }
    }

    pub fn estimate_spec(&self) -> EstimateSweepSpec {
        EstimateSweepSpec {
            system: self.system(),
            training_lengths: self.estimate.training_lengths.clone(),
            trials: self.estimate.trials,
            noise: self.noise().unwrap_or(NoiseSpec::Snr),
        }
    }

    pub fn harvest_spec(&self) -> HarvestSweepSpec {
        HarvestSweepSpec {
            system: self.system(),
            training_length: self.harvest.training_length,
            clusters: self.harvest.clusters.clone(),
            receivers: self.harvest.receivers.clone(),
            antennas: self.harvest.antennas.clone(),
            trials: self.harvest.trials,
            baselines: self.harvest.baselines.clone(),
            noise: self.noise().unwrap_or(NoiseSpec::Snr),
            epsilon: self.epsilon().unwrap_or_default(),
            sdp: self.sdp(),
            lloyd: self.lloyd(),
        }
    }

    /// Checks every precondition before any work starts. Errors name the
    /// offending key.
    pub fn validate(&self) -> Result<(), Invalid> {
        let sys = self.system();
        if let Err(e) = sys.validate() {
            let key = match &e {
                energybeam_core::Error::InvalidConfig(m) => {
                    let name = m.split_whitespace().next().unwrap_or("");
                    match name {
                        "antennas" | "receivers" | "power" | "efficiency" | "snr_db" => format!("system.{name}"),
                        _ => "system".into(),
                    }
                }
                _ => "system".into(),
            };
            return Err((key, e.to_string()));
        }
        let noise = self.noise()?;
        if let NoiseSpec::Fixed { sigma2 } = noise {
            if !(sigma2 >= 0.0 && sigma2.is_finite()) {
                return Err(invalid("noise.sigma2", format!("{sigma2} must be finite and >= 0")));
            }
        }
        let eps = self.epsilon()?;
        match eps {
            EpsilonSpec::Calibrated { percentile, trials } => {
                if !(percentile > 0.0 && percentile <= 100.0) {
                    return Err(invalid("epsilon.percentile", format!("{percentile} outside (0, 100]")));
                }
                if trials < 100 {
                    return Err(invalid("epsilon.trials", format!("{trials} < 100")));
                }
            }
            EpsilonSpec::Fixed { value } => {
                if !(value >= 0.0 && value.is_finite()) {
                    return Err(invalid("epsilon.value", format!("{value} must be finite and >= 0")));
                }
            }
        }
        if !(self.solver.tol > 0.0 && self.solver.tol < 1.0) {
            return Err(invalid("solver.tol", format!("{} outside (0, 1)", self.solver.tol)));
        }
        if self.solver.max_iter == 0 {
            return Err(invalid("solver.max_iter", "must be >= 1"));
        }
        if self.lloyd.max_iter == 0 || self.lloyd.restarts == 0 {
            return Err(invalid("lloyd", "max_iter and restarts must be >= 1"));
        }

        if self.estimate.training_lengths.is_empty() {
            return Err(invalid("estimate.training_lengths", "empty"));
        }
        for &l in &self.estimate.training_lengths {
            codebook::build_schedule(&sys, l).map_err(|e| invalid("estimate.training_lengths", e.to_string()))?;
        }
        if self.estimate.trials == 0 {
            return Err(invalid("estimate.trials", "must be >= 1"));
        }

        let h = &self.harvest;
        codebook::build_schedule(&sys, h.training_length)
            .map_err(|e| invalid("harvest.training_length", e.to_string()))?;
        for (key, grid) in
            [("harvest.clusters", &h.clusters), ("harvest.receivers", &h.receivers), ("harvest.antennas", &h.antennas)]
        {
            if grid.is_empty() || grid.contains(&0) {
                return Err(invalid(key, "must be a nonempty list of positive integers"));
            }
        }
        if let Some(&k) = h.antennas.iter().find(|&&k| k < 2) {
            return Err(invalid("harvest.antennas", format!("K = {k}, need K >= 2")));
        }
        let n_min = *h.receivers.iter().min().expect("nonempty");
        if let Some(&q) = h.clusters.iter().find(|&&q| q > n_min) {
            return Err(invalid("harvest.clusters", format!("Q = {q} exceeds the smallest N = {n_min}")));
        }
        if h.trials == 0 {
            return Err(invalid("harvest.trials", "must be >= 1"));
        }
        let spec = self.harvest_spec();
        spec.validate().map_err(|e| invalid("harvest", e.to_string()))?;

        Ok(())
    }

    /// Preconditions of the `cluster-demo` command only.
    pub fn validate_demo(&self) -> Result<(), Invalid> {
        let sys = self.system();
        let demo = &self.cluster_demo;
        if demo.clusters == 0 {
            return Err(invalid("cluster_demo.clusters", "must be >= 1"));
        }
        if !demo.phases.is_empty() {
            let dim = demo.phases[0].len();
            if dim == 0 || demo.phases.iter().any(|p| p.len() != dim || p.iter().any(|x| !x.is_finite())) {
                return Err(invalid("cluster_demo.phases", "rows must be nonempty, equally long and finite"));
            }
            if demo.clusters > demo.phases.len() {
                return Err(invalid("cluster_demo.clusters", "exceeds the number of receivers"));
            }
        } else {
            if demo.clusters > sys.receivers {
                return Err(invalid("cluster_demo.clusters", "exceeds system.receivers"));
            }
            codebook::build_schedule(&sys, demo.training_length)
                .map_err(|e| invalid("cluster_demo.training_length", e.to_string()))?;
        }
        Ok(())
    }

    /// Content hash of everything that determines sweep output.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = None;
        let bytes = serde_json::to_vec(&canonical).expect("config serializes");
        experiments::hex(&Sha256::digest(bytes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, overrides: &[&str]) -> Result<LoadedConfig, Error> {
        let o: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
        LoadedConfig::parse(text, Path::new("run.toml"), &o)
    }

    #[test]
    fn empty_config_uses_defaults() {
        let c = parse("", &[]).unwrap().config;
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.harvest.trials, 1000);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = parse("[system]\nantenas = 4\n", &[]).unwrap_err().to_string();
        assert!(e.contains("antenas"), "{e}");
        assert!(parse("bogus = 1\n", &[]).is_err());
    }

    #[test]
    fn short_training_is_line_anchored() {
        let e = parse("seed = 1\n\n[estimate]\ntraining_lengths = [2, 4]\n", &[]).unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("insufficient training length"), "{msg}");
        assert!(msg.starts_with("run.toml:4:"), "{msg}");
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn overrides_apply() {
        let c = parse(
            "[harvest]\ntrials = 10\n",
            &["harvest.trials=20", "system.snr_db=10.5", "harvest.baselines=[\"random-beam\"]"],
        )
        .unwrap()
        .config;
        assert_eq!(c.harvest.trials, 20);
        assert_eq!(c.system.snr_db, 10.5);
        assert_eq!(c.harvest.baselines, vec![SchedulerPolicy::RandomBeam]);
        assert!(parse("", &["nokey"]).is_err());
        assert!(parse("", &["system.nope=1"]).is_err());
    }

    #[test]
    fn cluster_count_checked_against_receivers() {
        let e = parse("[harvest]\nreceivers = [4]\nclusters = [5]\n", &[]).unwrap_err().to_string();
        assert!(e.starts_with("run.toml:3: harvest.clusters"), "{e}");
    }

    #[test]
    fn hash_ignores_output_dir_only() {
        let a = parse("output_dir = \"x\"\n", &[]).unwrap().config;
        let b = parse("output_dir = \"y\"\n", &[]).unwrap().config;
        let c = parse("seed = 3\n", &[]).unwrap().config;
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
    }
}
