//! Sweep artifacts: CSV tables, JSON sidecars and static SVG line charts.
//!
//! Floats are written with Rust's shortest round-trip formatting, so output
//! bytes depend only on the values.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::experiments::{hex, EstimateSweep, HarvestSweep};
use crate::Error;

pub const ESTIMATE_HEADER: [&str; 12] = [
    "training_length",
    "policy",
    "trials",
    "training_beams",
    "phase_error_mean_pct",
    "phase_error_median_pct",
    "magnitude_error_mean_pct",
    "magnitude_error_median_pct",
    "norm_error_mean",
    "mean_energy",
    "mean_loss_pct",
    "mrt_over_egt_pct",
];

pub const HARVEST_HEADER: [&str; 14] = [
    "receivers",
    "antennas",
    "policy",
    "clusters",
    "epsilon",
    "trials",
    "mean_energy_all",
    "mean_energy_members",
    "mean_members",
    "mean_t_star",
    "rank_one_fraction",
    "jain_index",
    "chi_square",
    "p_value",
];

fn num(x: f64) -> String {
    format!("{x}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn estimate_csv(sweep: &EstimateSweep) -> Result<Vec<u8>, Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(ESTIMATE_HEADER)?;
    for p in &sweep.points {
        for e in &p.energies {
            w.write_record([
                p.training_length.to_string(),
                e.policy.to_string(),
                p.trials.to_string(),
                p.training_beams.to_string(),
                num(p.phase_error_pct.mean),
                num(p.phase_error_pct.median),
                num(p.magnitude_error_pct.mean),
                num(p.magnitude_error_pct.median),
                num(p.norm_error.mean),
                num(e.mean_energy),
                num(e.mean_loss_pct),
                num(p.mrt_over_egt_pct),
            ])?;
        }
    }
    w.into_inner().map_err(|e| Error::Config(e.to_string()))
}

pub fn harvest_csv(sweep: &HarvestSweep) -> Result<Vec<u8>, Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(HARVEST_HEADER)?;
    for p in &sweep.points {
        let f = p.fairness.as_ref();
        w.write_record([
            p.receivers.to_string(),
            p.antennas.to_string(),
            p.policy.to_string(),
            p.policy.clusters().map(|q| q.to_string()).unwrap_or_default(),
            num(p.epsilon),
            p.trials.to_string(),
            num(p.mean_energy_all),
            opt(p.mean_energy_members),
            num(p.mean_members),
            opt(p.mean_t_star),
            opt(p.rank_one_fraction),
            opt(f.map(|f| f.jain_index)),
            opt(f.map(|f| f.chi_square)),
            opt(f.map(|f| f.p_value)),
        ])?;
    }
    w.into_inner().map_err(|e| Error::Config(e.to_string()))
}

#[derive(Debug, Serialize)]
struct Sidecar<'a, T: Serialize> {
    command: &'a str,
    config_hash: String,
    seed: u64,
    csv_file: String,
    csv_sha256: String,
    config: &'a RunConfig,
    result: &'a T,
}

/// Files written by one sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifacts {
    pub csv: PathBuf,
    pub json: PathBuf,
    pub svg: PathBuf,
}

/// Writes `<command>-<hash12>.{csv,json,svg}` into `dir`.
pub fn write_artifacts<T: Serialize>(
    dir: &Path,
    command: &str,
    config: &RunConfig,
    csv: &[u8],
    result: &T,
    svg: &str,
) -> Result<Artifacts, Error> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let hash = config.hash();
    let stem = format!("{command}-{}", &hash[..12]);
    let paths = Artifacts {
        csv: dir.join(format!("{stem}.csv")),
        json: dir.join(format!("{stem}.json")),
        svg: dir.join(format!("{stem}.svg")),
    };
    let sidecar = Sidecar {
        command,
        config_hash: hash,
        seed: config.seed,
        csv_file: format!("{stem}.csv"),
        csv_sha256: hex(&Sha256::digest(csv)),
        config,
        result,
    };
    let mut json = serde_json::to_vec_pretty(&sidecar)?;
    json.push(b'\n');
    std::fs::write(&paths.csv, csv).map_err(|e| Error::io(&paths.csv, e))?;
    std::fs::write(&paths.json, json).map_err(|e| Error::io(&paths.json, e))?;
    std::fs::write(&paths.svg, svg).map_err(|e| Error::io(&paths.svg, e))?;
    Ok(paths)
}

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// Minimal static line chart.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (w, h, m) = (640.0, 400.0, 60.0);
    let finite = || series.iter().flat_map(|s| s.points.iter()).filter(|p| p.0.is_finite() && p.1.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in finite() {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    y0 = y0.min(0.0);
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let sy = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ =
        writeln!(out, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, w / 2.0, escape(title));
    let _ = writeln!(out, r#"<line x1="{m}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, h - m, w - m, h - m);
    let _ = writeln!(out, r#"<line x1="{m}" y1="{m}" x2="{m}" y2="{}" stroke="black"/>"#, h - m);
    for i in 0..=4 {
        let fx = x0 + (x1 - x0) * i as f64 / 4.0;
        let fy = y0 + (y1 - y0) * i as f64 / 4.0;
        let _ = writeln!(out, r#"<text x="{:.1}" y="{}" text-anchor="middle">{:.3}</text>"#, sx(fx), h - m + 18.0, fx);
        let _ = writeln!(out, r#"<text x="{}" y="{:.1}" text-anchor="end">{:.3}</text>"#, m - 6.0, sy(fy) + 4.0, fy);
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, w / 2.0, h - 15.0, escape(x_label));
    let _ = writeln!(
        out,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        h / 2.0,
        h / 2.0,
        escape(y_label)
    );
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ =
            writeln!(out, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, pts.join(" "));
        let ly = m + 16.0 * i as f64;
        let _ = writeln!(out, r#"<text x="{}" y="{ly:.1}" fill="{color}">{}</text>"#, w - m - 150.0, escape(&s.name));
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn estimate_svg(sweep: &EstimateSweep) -> String {
    let xs = |f: &dyn Fn(&crate::experiments::EstimatePoint) -> f64| -> Vec<(f64, f64)> {
        sweep.points.iter().map(|p| (p.training_length as f64, f(p))).collect()
    };
    let mut series = vec![
        Series { name: "phase error %".into(), points: xs(&|p| p.phase_error_pct.mean) },
        Series { name: "magnitude error %".into(), points: xs(&|p| p.magnitude_error_pct.mean) },
    ];
    if let Some(first) = sweep.points.first() {
        for slot in 1..first.energies.len() {
            series.push(Series {
                name: format!("{} loss %", first.energies[slot].policy),
                points: xs(&|p| p.energies[slot].mean_loss_pct),
            });
        }
    }
    line_chart("Estimation error vs training length", "L", "percent", &series)
}

pub fn harvest_svg(sweep: &HarvestSweep) -> String {
    let mut series = Vec::new();
    for &n in &sweep.spec.receivers {
        for &k in &sweep.spec.antennas {
            let points = sweep
                .points
                .iter()
                .filter(|p| p.receivers == n && p.antennas == k)
                .filter_map(|p| p.policy.clusters().map(|q| (q as f64, p.mean_energy_all)))
                .collect();
            series.push(Series { name: format!("N={n} K={k}"), points });
        }
    }
    line_chart("Mean harvested energy per receiver vs clusters", "Q", "energy", &series)
}
