//! Phase-domain clustering of receivers.
//!
//! Receivers are embedded by their estimated relative phases and grouped
//! with Lloyd's algorithm (k-means++ seeding, several restarts). The cluster
//! whose members sit closest to their centroid, by summed Euclidean
//! distance, is the one the beamformer serves.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::estimation::ChannelEstimate;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum PhaseEmbedding {
    /// `(cos φ̂_v, sin φ̂_v)` per paired antenna; wraparound-safe.
    #[default]
    UnitCircle,
    /// Raw wrapped phases `φ̂_v ∈ [0, 2π)`.
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub receiver: usize,
    pub coords: Vec<f64>,
}

pub fn embed_phases(estimates: &[ChannelEstimate]) -> Result<Vec<PhasePoint>> {
    embed_phases_with(estimates, PhaseEmbedding::UnitCircle)
}

pub fn embed_phases_with(estimates: &[ChannelEstimate], embedding: PhaseEmbedding) -> Result<Vec<PhasePoint>> {
    if estimates.is_empty() {
        return Err(Error::Empty("estimate list"));
    }
    Ok(estimates
        .iter()
        .enumerate()
        .map(|(receiver, est)| {
            let coords = match embedding {
                PhaseEmbedding::UnitCircle => {
                    est.phases_rel().iter().flat_map(|&p| [libm::cos(p), libm::sin(p)]).collect()
                }
                PhaseEmbedding::Raw => est.phases_rel().to_vec(),
            };
            PhasePoint { receiver, coords }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LloydSettings {
    pub max_iter: usize,
    /// Stop once no centroid moves farther than this.
    pub tol: f64,
    /// Independent k-means++ restarts; the lowest objective wins.
    pub restarts: usize,
}

impl Default for LloydSettings {
    fn default() -> Self {
        Self { max_iter: 100, tol: 1e-8, restarts: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub q: usize,
    /// Cluster id per input point (input order).
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Receiver ids per cluster.
    pub members: Vec<Vec<usize>>,
    /// Sum of member-to-centroid Euclidean distances per cluster.
    pub dispersion: Vec<f64>,
    /// Id of the selected (tightest nonempty) cluster.
    pub selected: usize,
    /// Within-cluster sum of squared distances of the kept restart.
    pub objective: f64,
    /// Objective after each assignment step of the kept restart.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
}

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid, ties to the lowest id.
fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, cen) in centroids.iter().enumerate() {
        let d = dist_sq(point, cen);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn kmeans_pp<R: Rng + ?Sized>(points: &[&[f64]], q: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(q);
    centroids.push(points[rng.random_range(0..n)].to_vec());
    let mut d2: Vec<f64> = points.iter().map(|p| dist_sq(p, &centroids[0])).collect();
    while centroids.len() < q {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            // Never pick a zero-weight point because of rounding at the tail.
            if d2[chosen] == 0.0 {
                chosen = d2.iter().rposition(|&w| w > 0.0).unwrap_or(chosen);
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = points[pick].to_vec();
        for (w, p) in d2.iter_mut().zip(points) {
            *w = w.min(dist_sq(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

struct Run {
    labels: Vec<usize>,
    centroids: Vec<Vec<f64>>,
    objective: f64,
    trace: Vec<f64>,
    iterations: usize,
}

fn lloyd_run<R: Rng + ?Sized>(points: &[&[f64]], q: usize, settings: &LloydSettings, rng: &mut R) -> Run {
    let n = points.len();
    let dim = points[0].len();
    let mut centroids = kmeans_pp(points, q, rng);
    let mut labels = vec![usize::MAX; n];
    let mut trace = Vec::new();
    let mut iterations = 0;

    loop {
        iterations += 1;
        let mut changed = false;
        let mut objective = 0.0;
        for (i, p) in points.iter().enumerate() {
            let (c, d) = nearest(p, &centroids);
            objective += d;
            if labels[i] != c {
                labels[i] = c;
                changed = true;
            }
        }
        trace.push(objective);
        if !changed || iterations >= settings.max_iter {
            break;
        }

        let mut sums = vec![vec![0.0; dim]; q];
        let mut counts = vec![0usize; q];
        for (p, &c) in points.iter().zip(&labels) {
            counts[c] += 1;
            for (s, x) in sums[c].iter_mut().zip(p.iter()) {
                *s += x;
            }
        }
        let mut movement = 0.0_f64;
        for c in 0..q {
            if counts[c] == 0 {
                continue;
            }
            let new: Vec<f64> = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            movement = movement.max(libm::sqrt(dist_sq(&new, &centroids[c])));
            centroids[c] = new;
        }
        // Empty clusters restart at the point farthest from its centroid.
        for c in 0..q {
            if counts[c] > 0 {
                continue;
            }
            let mut far = (0, -1.0);
            for (i, p) in points.iter().enumerate() {
                let d = dist_sq(p, &centroids[labels[i]]);
                if d > far.1 {
                    far = (i, d);
                }
            }
            centroids[c] = points[far.0].to_vec();
            movement = f64::INFINITY;
        }
        if movement < settings.tol {
            // Final assignment against the settled centroids.
            let mut objective = 0.0;
            for (i, p) in points.iter().enumerate() {
                let (c, d) = nearest(p, &centroids);
                labels[i] = c;
                objective += d;
            }
            trace.push(objective);
            break;
        }
    }
    let objective = *trace.last().unwrap_or(&0.0);
    Run { labels, centroids, objective, trace, iterations }
}

/// Per-cluster sum of unsquared member-to-centroid distances.
pub fn dispersion(points: &[PhasePoint], labels: &[usize], centroids: &[Vec<f64>]) -> Vec<f64> {
    let mut out = vec![0.0; centroids.len()];
    for (p, &c) in points.iter().zip(labels) {
        out[c] += libm::sqrt(dist_sq(&p.coords, &centroids[c]));
    }
    out
}

/// Lloyd's algorithm with k-means++ seeding.
///
/// Points are processed in a canonical (lexicographically sorted) order, so
/// the result does not depend on how the caller ordered the receivers.
pub fn lloyd_cluster<R: Rng + ?Sized>(
    points: &[PhasePoint],
    q: usize,
    rng: &mut R,
    settings: &LloydSettings,
) -> Result<ClusterAssignment> {
    if points.is_empty() {
        return Err(Error::Empty("point list"));
    }
    if q == 0 {
        return Err(Error::InvalidArgument("cluster count must be >= 1".into()));
    }
    if q > points.len() {
        return Err(Error::TooManyClusters { clusters: q, points: points.len() });
    }
    if settings.max_iter == 0 || settings.restarts == 0 {
        return Err(Error::InvalidArgument("max_iter and restarts must be >= 1".into()));
    }
    let dim = points[0].coords.len();
    if let Some(p) = points.iter().find(|p| p.coords.len() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, found: p.coords.len() });
    }

    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[a]
            .coords
            .iter()
            .zip(&points[b].coords)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(core::cmp::Ordering::Equal)
    });
    let sorted: Vec<&[f64]> = order.iter().map(|&i| points[i].coords.as_slice()).collect();

    let mut best: Option<Run> = None;
    for _ in 0..settings.restarts {
        let run = lloyd_run(&sorted, q, settings, rng);
        if best.as_ref().is_none_or(|b| run.objective < b.objective) {
            best = Some(run);
        }
    }
    let run = best.expect("at least one restart");

    let mut labels = vec![0; points.len()];
    for (pos, &i) in order.iter().enumerate() {
        labels[i] = run.labels[pos];
    }
    let disp = dispersion(points, &labels, &run.centroids);
    let mut members = vec![Vec::new(); q];
    for (p, &c) in points.iter().zip(&labels) {
        members[c].push(p.receiver);
    }
    let selected = argmin_nonempty(&disp, &members);
    Ok(ClusterAssignment {
        q,
        labels,
        centroids: run.centroids,
        members,
        dispersion: disp,
        selected,
        objective: run.objective,
        objective_trace: run.trace,
        iterations: run.iterations,
    })
}

fn argmin_nonempty(dispersion: &[f64], members: &[Vec<usize>]) -> usize {
    let mut best: Option<usize> = None;
    for c in 0..dispersion.len() {
        if members[c].is_empty() {
            continue;
        }
        if best.is_none_or(|b| dispersion[c] < dispersion[b]) {
            best = Some(c);
        }
    }
    best.unwrap_or(0)
}

/// Tightest nonempty cluster (lowest id on ties) and its receivers.
pub fn select_cluster(assignment: &ClusterAssignment) -> (usize, Vec<usize>) {
    let id = argmin_nonempty(&assignment.dispersion, &assignment.members);
    (id, assignment.members[id].clone())
}
