//! Dense barrier solver for the robust max-min problem
//!
//! ```text
//! maximize t  s.t.  T_i(C, t, μ_i) ⪰ 0,  C ⪰ 0,  tr C ≤ P,  μ_i ≥ 0.
//! ```
//!
//! The solver follows the central path of
//! `−κ t − Σ log det T_i − log det C − log(P − tr C) − Σ log μ_i`,
//! growing `κ` tenfold per outer step and centering with damped Newton.
//! Newton derivatives are taken on the Hermitian blocks directly; the real
//! embedding has `log det T̃ = 2 log det T`, so both parametrize the same
//! central path and the same gap bound `ν/κ`.
//!
//! Members with `ε = 0` use the scalar constraint `ĥ†Cĥ ≥ t` instead of a
//! block. For them the block has no strictly feasible `μ` at the optimum,
//! and the multiplier reported is `2ĥ†C²ĥ / (ĥ†Cĥ − t)`, which makes the
//! block positive semidefinite at the returned point.
//!
//! Internally the problem is rescaled to `P = 1` and `max ‖ĥ_i‖ = 1`, so the
//! iterate sequence is invariant to the power budget and channel scale.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::beamformer::{self, LmiBlock, LmiSystem};
use crate::linalg::{self, CMatrix, RMatrix};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdpSettings {
    /// Relative duality-gap target.
    pub tol: f64,
    /// Total Newton-step budget across all outer iterations.
    pub max_iter: usize,
}

impl Default for SdpSettings {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: 200 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SdpStatus {
    Optimal,
    MaxIterations,
    NumericalFailure,
}

/// One completed outer (centering) iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub outer: usize,
    pub kappa: f64,
    /// Objective at the centered point.
    pub t: f64,
    /// Newton steps spent in this centering.
    pub newton_steps: usize,
    /// Absolute gap bound `ν/κ` in energy units.
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdpProblem {
    antennas: usize,
    blocks: Vec<LmiBlock>,
    power: f64,
}

impl SdpProblem {
    pub fn new(blocks: Vec<LmiBlock>, power: f64) -> Result<Self> {
        let antennas = blocks.first().map(LmiBlock::antennas).ok_or(Error::Empty("block list"))?;
        if antennas == 0 {
            return Err(Error::Empty("channel vector"));
        }
        if let Some(b) = blocks.iter().find(|b| b.antennas() != antennas) {
            return Err(Error::DimensionMismatch { expected: antennas, found: b.antennas() });
        }
        if blocks.iter().any(|b| !(b.epsilon >= 0.0 && b.epsilon.is_finite())) {
            return Err(Error::InvalidArgument("epsilon must be finite and >= 0".into()));
        }
        if blocks.iter().any(|b| b.channel.iter().any(|z| !z.is_finite())) {
            return Err(Error::InvalidArgument("channel entries must be finite".into()));
        }
        if !(power > 0.0 && power.is_finite()) {
            return Err(Error::InvalidArgument(format!("power {power} must be > 0")));
        }
        Ok(Self { antennas, blocks, power })
    }

    pub fn from_lmi(system: &LmiSystem) -> Result<Self> {
        Self::new(system.blocks.clone(), system.power)
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    pub fn members(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[LmiBlock] {
        &self.blocks
    }

    pub fn power(&self) -> f64 {
        self.power
    }

    fn channel_scale(&self) -> f64 {
        let s = self.blocks.iter().map(|b| linalg::norm(&b.channel)).fold(0.0, f64::max);
        if s > 0.0 {
            s
        } else {
            1.0
        }
    }

    /// Energy scale used by tolerances: `max(1, P, P·max‖ĥ_i‖²)`.
    pub fn energy_scale(&self) -> f64 {
        let hmax = self.blocks.iter().map(|b| linalg::norm_sqr(&b.channel)).fold(0.0, f64::max);
        1f64.max(self.power).max(self.power * hmax)
    }

    /// Strictly feasible starting point `(C, t, μ)`:
    /// `C = (P/2K) I`, `μ_i = P`, `t = −P (3 s² + max ε_i²)` with
    /// `s = max ‖ĥ_i‖`.
    pub fn initial_point(&self) -> (CMatrix, f64, Vec<f64>) {
        let s = self.channel_scale();
        let k = self.antennas as f64;
        let emax = self.blocks.iter().map(|b| b.epsilon / s).fold(0.0, f64::max);
        let c = CMatrix::identity(self.antennas).scale(self.power / (2.0 * k));
        let t = -self.power * s * s * (3.0 + emax * emax);
        (c, t, vec![self.power; self.blocks.len()])
    }

    /// Real symmetric form over the variables `x = (c, t, μ_1..μ_m)` where
    /// `c` holds the `K²` real coordinates of `C` (see [`hermitian_basis`]).
    pub fn to_real_embedding(&self) -> RealSdp {
        let k = self.antennas;
        let basis = hermitian_basis(k);
        let nv = k * k + 1 + self.blocks.len();
        let mut blocks = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            let zero = CMatrix::zeros(k, k);
            let mut coefficients = Vec::with_capacity(nv);
            for e in &basis {
                let ej = basis_matrix(k, e);
                let block = LmiBlock { epsilon: 0.0, ..b.clone() };
                coefficients.push(block.evaluate(&ej, 0.0, 0.0).real_embedding());
            }
            coefficients.push(b.evaluate(&zero, 1.0, 0.0).real_embedding());
            for j in 0..self.blocks.len() {
                if j == i {
                    coefficients.push(b.evaluate(&zero, 0.0, 1.0).real_embedding());
                } else {
                    coefficients.push(RMatrix::zeros(2 * (k + 1), 2 * (k + 1)));
                }
            }
            blocks.push(RealBlock {
                label: format!("T{i}"),
                constant: RMatrix::zeros(2 * (k + 1), 2 * (k + 1)),
                coefficients,
            });
        }
        let mut cov = Vec::with_capacity(nv);
        for e in &basis {
            cov.push(basis_matrix(k, e).real_embedding());
        }
        cov.resize(nv, RMatrix::zeros(2 * k, 2 * k));
        blocks.push(RealBlock { label: "C".into(), constant: RMatrix::zeros(2 * k, 2 * k), coefficients: cov });

        let mut cap: Vec<RMatrix> = basis.iter().map(|e| scalar(-entries_trace(e))).collect();
        cap.resize(nv, scalar(0.0));
        blocks.push(RealBlock { label: "trace".into(), constant: scalar(self.power), coefficients: cap });

        for i in 0..self.blocks.len() {
            let mut coeffs = vec![scalar(0.0); nv];
            coeffs[k * k + 1 + i] = scalar(1.0);
            blocks.push(RealBlock { label: format!("mu{i}"), constant: scalar(0.0), coefficients: coeffs });
        }
        let mut objective = vec![0.0; nv];
        objective[k * k] = 1.0;
        RealSdp { variables: nv, objective, blocks }
    }

    /// Packs `(C, t, μ)` into the embedding's variable vector.
    pub fn pack(&self, c: &CMatrix, t: f64, mu: &[f64]) -> Vec<f64> {
        let mut x = coordinates(c);
        x.push(t);
        x.extend_from_slice(mu);
        x
    }
}

fn scalar(v: f64) -> RMatrix {
    RMatrix::from_fn(1, 1, |_, _| v)
}

/// `maximize objective·x` subject to `constant + Σ x_j coefficients[j] ⪰ 0`
/// for every block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealSdp {
    pub variables: usize,
    pub objective: Vec<f64>,
    pub blocks: Vec<RealBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealBlock {
    pub label: String,
    pub constant: RMatrix,
    pub coefficients: Vec<RMatrix>,
}

impl RealBlock {
    pub fn evaluate(&self, x: &[f64]) -> RMatrix {
        let mut out = self.constant.clone();
        for (c, &xi) in self.coefficients.iter().zip(x) {
            if xi != 0.0 {
                out.add_scaled(c, xi);
            }
        }
        out
    }
}

impl RealSdp {
    pub fn evaluate(&self, x: &[f64]) -> Vec<RMatrix> {
        self.blocks.iter().map(|b| b.evaluate(x)).collect()
    }

    /// Smallest eigenvalue over all blocks.
    pub fn min_eigenvalue(&self, x: &[f64]) -> f64 {
        self.evaluate(x)
            .iter()
            .map(|m| linalg::symmetric_eigen(m).values.last().copied().unwrap_or(0.0))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Nonzero entries `(row, col, value)` of one basis matrix.
pub type BasisEntries = Vec<(usize, usize, Complex64)>;

/// Real basis of `K×K` Hermitian matrices: `E_aa` for each `a`, then for
/// each `a < b` the symmetric pair `e_a e_bᵀ + e_b e_aᵀ` and the
/// antisymmetric pair `i e_a e_bᵀ − i e_b e_aᵀ`.
pub fn hermitian_basis(k: usize) -> Vec<BasisEntries> {
    let one = Complex64::new(1.0, 0.0);
    let i = Complex64::new(0.0, 1.0);
    let mut out: Vec<BasisEntries> = (0..k).map(|a| vec![(a, a, one)]).collect();
    for a in 0..k {
        for b in (a + 1)..k {
            out.push(vec![(a, b, one), (b, a, one)]);
            out.push(vec![(a, b, i), (b, a, -i)]);
        }
    }
    out
}

fn basis_matrix(k: usize, e: &BasisEntries) -> CMatrix {
    let mut m = CMatrix::zeros(k, k);
    for &(a, b, v) in e {
        m[(a, b)] += v;
    }
    m
}

fn entries_trace(e: &BasisEntries) -> f64 {
    e.iter().filter(|(a, b, _)| a == b).map(|(_, _, v)| v.re).sum()
}

/// Coordinates of a Hermitian matrix in [`hermitian_basis`].
pub fn coordinates(c: &CMatrix) -> Vec<f64> {
    let k = c.rows();
    let mut x: Vec<f64> = (0..k).map(|a| c[(a, a)].re).collect();
    for a in 0..k {
        for b in (a + 1)..k {
            x.push(c[(a, b)].re);
            x.push(c[(a, b)].im);
        }
    }
    x
}

fn from_coordinates(k: usize, x: &[f64]) -> CMatrix {
    let mut c = CMatrix::zeros(k, k);
    for a in 0..k {
        c[(a, a)] = Complex64::new(x[a], 0.0);
    }
    let mut j = k;
    for a in 0..k {
        for b in (a + 1)..k {
            let z = Complex64::new(x[j], x[j + 1]);
            c[(a, b)] = z;
            c[(b, a)] = z.conj();
            j += 2;
        }
    }
    c
}

/// `tr(Y E)`.
fn trace_with(y: &CMatrix, e: &BasisEntries) -> f64 {
    e.iter().map(|&(a, b, v)| (v * y[(b, a)]).re).sum()
}

/// `tr(Y E_j Y E_k)`.
fn trace_pair(y: &CMatrix, ej: &BasisEntries, ek: &BasisEntries) -> f64 {
    let mut s = Complex64::new(0.0, 0.0);
    for &(a, b, v) in ej {
        for &(c, d, w) in ek {
            s += v * w * y[(d, a)] * y[(b, c)];
        }
    }
    s.re
}

/// The rescaled problem the Newton iteration runs on.
struct Scaled {
    k: usize,
    blocks: Vec<LmiBlock>,
    /// Index into the multiplier variables for members with `ε > 0`.
    robust: Vec<Option<usize>>,
    n_robust: usize,
    basis: Vec<BasisEntries>,
    basis_trace: Vec<f64>,
}

struct Factored {
    g: Vec<f64>,
    h: RMatrix,
}

impl Scaled {
    fn new(problem: &SdpProblem) -> Self {
        let s = problem.channel_scale();
        let blocks: Vec<LmiBlock> = problem
            .blocks
            .iter()
            .map(|b| LmiBlock { channel: b.channel.iter().map(|z| z / s).collect(), epsilon: b.epsilon / s })
            .collect();
        let mut n_robust = 0;
        let robust = blocks
            .iter()
            .map(|b| {
                (b.epsilon > 0.0).then(|| {
                    n_robust += 1;
                    n_robust - 1
                })
            })
            .collect();
        let k = problem.antennas;
        let basis = hermitian_basis(k);
        let basis_trace = basis.iter().map(entries_trace).collect();
        Self { k, blocks, robust, n_robust, basis, basis_trace }
    }

    fn nvars(&self) -> usize {
        self.k * self.k + 1 + self.n_robust
    }

    fn t_index(&self) -> usize {
        self.k * self.k
    }

    /// Barrier parameter `ν`.
    fn nu(&self) -> f64 {
        let blocks: usize = self.robust.iter().map(|r| if r.is_some() { self.k + 1 } else { 1 }).sum();
        (blocks + self.k + 1 + self.n_robust) as f64
    }

    fn split<'a>(&self, x: &'a [f64]) -> (CMatrix, f64, &'a [f64]) {
        let kk = self.k * self.k;
        (from_coordinates(self.k, &x[..kk]), x[kk], &x[kk + 1..])
    }

    /// `−κ t + barrier`, or `None` outside the interior.
    fn value(&self, x: &[f64], kappa: f64) -> Option<f64> {
        let (c, t, mu) = self.split(x);
        let mut f = -kappa * t;
        for (b, r) in self.blocks.iter().zip(&self.robust) {
            match r {
                Some(r) => {
                    let l = linalg::cholesky_hermitian(&b.evaluate(&c, t, mu[*r]))?;
                    f -= linalg::log_det_from_cholesky(&l);
                }
                None => {
                    let s = c.quad_form(&b.channel) - t;
                    if !(s > 0.0) {
                        return None;
                    }
                    f -= libm::log(s);
                }
            }
        }
        f -= linalg::log_det_from_cholesky(&linalg::cholesky_hermitian(&c)?);
        let slack = 1.0 - c.trace().re;
        if !(slack > 0.0) || mu.iter().any(|&m| !(m > 0.0)) {
            return None;
        }
        f -= libm::log(slack);
        f -= mu.iter().map(|&m| libm::log(m)).sum::<f64>();
        f.is_finite().then_some(f)
    }

    /// Gradient and Hessian of `−κ t + barrier` at an interior point.
    fn derivatives(&self, x: &[f64], kappa: f64) -> Option<Factored> {
        let k = self.k;
        let kk = k * k;
        let ti = self.t_index();
        let n = self.nvars();
        let (c, t, mu) = self.split(x);
        let mut g = vec![0.0; n];
        let mut h = RMatrix::zeros(n, n);
        g[ti] -= kappa;

        for (b, r) in self.blocks.iter().zip(&self.robust) {
            let hv = &b.channel;
            match r {
                Some(r) => {
                    let mi = kk + 1 + r;
                    let tm = b.evaluate(&c, t, mu[*r]);
                    let gm = linalg::inverse_from_cholesky(&linalg::cholesky_hermitian(&tm)?);
                    let d: Vec<f64> = (0..=k).map(|p| if p < k { 1.0 } else { -b.epsilon * b.epsilon }).collect();
                    // GM with M = [I; ĥ†].
                    let gmm = CMatrix::from_fn(k + 1, k, |p, q| gm[(p, q)] + gm[(p, k)] * hv[q].conj());
                    let y = CMatrix::from_fn(k, k, |a, q| gmm[(a, q)] + hv[a] * gmm[(k, q)]);
                    let yd =
                        CMatrix::from_fn(k, k, |a, q| (0..=k).map(|p| gmm[(p, a)].conj() * d[p] * gmm[(p, q)]).sum());
                    let w: Vec<Complex64> = (0..k).map(|a| gm[(a, k)] + hv[a] * gm[(k, k)]).collect();
                    let gkk = gm[(k, k)].re;

                    g[ti] += gkk;
                    g[mi] -= (0..=k).map(|p| d[p] * gm[(p, p)].re).sum::<f64>();
                    for (j, ej) in self.basis.iter().enumerate() {
                        g[j] -= trace_with(&y, ej);
                        for (l, el) in self.basis.iter().enumerate().skip(j) {
                            h[(j, l)] += trace_pair(&y, ej, el);
                        }
                        h[(j, mi)] += trace_with(&yd, ej);
                        h[(j, ti)] -= ej.iter().map(|&(a, bb, v)| (v * w[bb] * w[a].conj()).re).sum::<f64>();
                    }
                    let mut mm = 0.0;
                    let mut mt = 0.0;
                    for p in 0..=k {
                        for q in 0..=k {
                            mm += d[p] * d[q] * gm[(p, q)].norm_sqr();
                        }
                        mt -= d[p] * gm[(p, k)].norm_sqr();
                    }
                    h[(mi, mi)] += mm;
                    h[(ti, mi)] += mt;
                    h[(ti, ti)] += gkk * gkk;
                }
                None => {
                    let s = c.quad_form(hv) - t;
                    if !(s > 0.0) {
                        return None;
                    }
                    let mut q: Vec<f64> = self
                        .basis
                        .iter()
                        .map(|e| e.iter().map(|&(a, bb, v)| (hv[a].conj() * v * hv[bb]).re).sum::<f64>() / s)
                        .collect();
                    q.push(-1.0 / s);
                    for j in 0..=kk {
                        g[j] -= q[j];
                        for l in j..=kk {
                            h[(j, l)] += q[j] * q[l];
                        }
                    }
                }
            }
        }

        let cinv = linalg::inverse_from_cholesky(&linalg::cholesky_hermitian(&c)?);
        let slack = 1.0 - c.trace().re;
        if !(slack > 0.0) {
            return None;
        }
        for (j, ej) in self.basis.iter().enumerate() {
            g[j] += -trace_with(&cinv, ej) + self.basis_trace[j] / slack;
            for (l, el) in self.basis.iter().enumerate().skip(j) {
                h[(j, l)] += trace_pair(&cinv, ej, el) + self.basis_trace[j] * self.basis_trace[l] / (slack * slack);
            }
        }
        for (r, &m) in mu.iter().enumerate() {
            g[kk + 1 + r] -= 1.0 / m;
            h[(kk + 1 + r, kk + 1 + r)] += 1.0 / (m * m);
        }
        for j in 0..n {
            for l in 0..j {
                h[(j, l)] = h[(l, j)];
            }
        }
        Some(Factored { g, h })
    }

    /// Newton direction, with a growing diagonal shift if `H` is not
    /// numerically positive definite.
    fn newton_direction(&self, d: &Factored) -> Option<Vec<f64>> {
        let n = d.g.len();
        let diag_max = (0..n).map(|i| d.h[(i, i)].abs()).fold(0.0, f64::max);
        let rhs: Vec<f64> = d.g.iter().map(|v| -v).collect();
        let mut shift = 0.0;
        for _ in 0..12 {
            let mut hs = d.h.clone();
            for i in 0..n {
                hs[(i, i)] += shift;
            }
            if let Some(l) = linalg::cholesky_real(&hs) {
                let dx = linalg::cholesky_solve(&l, &rhs);
                if dx.iter().all(|v| v.is_finite()) {
                    return Some(dx);
                }
            }
            shift = if shift == 0.0 { 1e-12 * diag_max.max(1.0) } else { shift * 100.0 };
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdpSolution {
    pub covariance: CMatrix,
    pub t: f64,
    pub mu: Vec<f64>,
    pub status: SdpStatus,
    /// Absolute gap bound `ν/κ` in energy units at the returned point.
    pub gap: f64,
    /// `gap` relative to `max(1, |t|)` in normalized units.
    pub relative_gap: f64,
    pub newton_iterations: usize,
    pub log: Vec<IterationLog>,
}

const CENTERING_TOL: f64 = 1e-10;
const KAPPA_GROWTH: f64 = 10.0;
const KAPPA_INITIAL: f64 = 1.0;

/// Path-following solve. Every returned iterate is strictly feasible.
pub fn solve(problem: &SdpProblem, settings: &SdpSettings) -> SdpSolution {
    let sc = Scaled::new(problem);
    let s = problem.channel_scale();
    let energy = problem.power * s * s;

    let (c0, t0, _) = problem.initial_point();
    let mut x = coordinates(&c0.scale(1.0 / problem.power));
    x.push(t0 / energy);
    x.extend(core::iter::repeat_n(1.0, sc.n_robust));

    let nu = sc.nu();
    let mut kappa = KAPPA_INITIAL;
    let mut steps = 0usize;
    let mut log = Vec::new();
    let mut status = SdpStatus::MaxIterations;
    let mut gap_norm = f64::INFINITY;

    'outer: for outer in 0.. {
        let mut inner = 0usize;
        loop {
            let Some(d) = sc.derivatives(&x, kappa) else {
                status = SdpStatus::NumericalFailure;
                break 'outer;
            };
            let Some(dx) = sc.newton_direction(&d) else {
                status = SdpStatus::NumericalFailure;
                break 'outer;
            };
            let dec: f64 = -d.g.iter().zip(&dx).map(|(a, b)| a * b).sum::<f64>();
            if dec / 2.0 <= CENTERING_TOL {
                break;
            }
            if steps >= settings.max_iter {
                break 'outer;
            }
            let f0 = sc.value(&x, kappa).unwrap_or(f64::INFINITY);
            let mut alpha = 1.0;
            let mut accepted = None;
            for _ in 0..60 {
                let cand: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + alpha * b).collect();
                if let Some(f) = sc.value(&cand, kappa) {
                    if f < f0 && f <= f0 - 0.25 * alpha * dec {
                        accepted = Some(cand);
                        break;
                    }
                }
                alpha *= 0.5;
            }
            steps += 1;
            inner += 1;
            match accepted {
                Some(cand) => x = cand,
                // No decrease in floating point: the point is as centered
                // as this precision allows.
                None if dec < 1e-6 => break,
                None => {
                    status = SdpStatus::NumericalFailure;
                    break 'outer;
                }
            }
        }
        gap_norm = nu / kappa;
        let t_norm = x[sc.t_index()];
        log.push(IterationLog { outer, kappa, t: t_norm * energy, newton_steps: inner, gap: gap_norm * energy });
        if gap_norm <= settings.tol * 1f64.max(t_norm.abs()) {
            status = SdpStatus::Optimal;
            break;
        }
        kappa *= KAPPA_GROWTH;
    }

    let (c, t, mu_r) = sc.split(&x);
    let mu = sc
        .blocks
        .iter()
        .zip(&sc.robust)
        .map(|(b, r)| match r {
            Some(r) => mu_r[*r] * problem.power,
            None => {
                let ch = c.mul_vec(&b.channel);
                let slack = c.quad_form(&b.channel) - t;
                2.0 * linalg::norm_sqr(&ch) / slack * problem.power
            }
        })
        .collect();
    let t_norm = t;
    SdpSolution {
        covariance: c.scale(problem.power),
        t: t_norm * energy,
        mu,
        status,
        gap: gap_norm * energy,
        relative_gap: gap_norm / 1f64.max(t_norm.abs()),
        newton_iterations: steps,
        log,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateCheck {
    pub name: String,
    pub passed: bool,
    /// Measured quantity; the check passes when it is at least `threshold`.
    pub value: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub checks: Vec<CertificateCheck>,
    /// `min_i P · max(‖ĥ_i‖ − ε_i, 0)²`, an upper bound on the optimum.
    pub upper_bound: f64,
    /// `upper_bound − t`.
    pub gap_to_upper_bound: f64,
}

impl CertificateReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CertificateCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

/// Independent feasibility audit of `(C, t, μ)`.
///
/// Block eigenvalues are taken from the real embedding. Worst-case energy is
/// checked twice per member: exactly through the ball-constrained quadratic
/// minimum, and by `samples` random perturbations on the sphere.
pub fn check_certificate<R: Rng + ?Sized>(
    problem: &SdpProblem,
    solution: &SdpSolution,
    tol: f64,
    samples: usize,
    rng: &mut R,
) -> CertificateReport {
    let scale = problem.energy_scale().max(solution.t.abs());
    let c = &solution.covariance;
    let mut checks = Vec::new();
    let mut push = |name: String, value: f64, threshold: f64| {
        checks.push(CertificateCheck { name, passed: value >= threshold && value.is_finite(), value, threshold });
    };
    let defect = c.hermitian_defect();
    push("hermitian".into(), -defect, -tol * scale);
    let symmetric = c.add(&c.adjoint()).scale(0.5);
    push("covariance-psd".into(), linalg::hermitian_min_eigenvalue(&symmetric), -tol * scale);
    push("trace".into(), problem.power * (1.0 + tol) - c.trace().re, 0.0);
    let mu_min = solution.mu.iter().copied().fold(f64::INFINITY, f64::min);
    push("mu-sign".into(), if solution.mu.is_empty() { 0.0 } else { mu_min }, -tol);
    if solution.mu.len() != problem.blocks.len() {
        push("mu-count".into(), solution.mu.len() as f64, problem.blocks.len() as f64);
    }
    for (i, b) in problem.blocks.iter().enumerate() {
        let mu = solution.mu.get(i).copied().unwrap_or(0.0);
        let block = b.evaluate(&symmetric, solution.t, mu);
        push(format!("block-{i}-psd"), linalg::hermitian_min_eigenvalue(&block), -tol * scale);
        let exact = beamformer::exact_worst_case(&b.channel, b.epsilon, &symmetric);
        push(format!("worst-case-{i}-exact"), exact - solution.t, -tol * scale);
        if samples > 0 {
            let sampled = beamformer::sampled_worst_case(&b.channel, b.epsilon, &symmetric, samples, rng);
            push(format!("worst-case-{i}-sampled"), sampled - solution.t, -tol * scale);
        }
    }
    let upper_bound = problem
        .blocks
        .iter()
        .map(|b| {
            let r = (linalg::norm(&b.channel) - b.epsilon).max(0.0);
            problem.power * r * r
        })
        .fold(f64::INFINITY, f64::min);
    CertificateReport { checks, upper_bound, gap_to_upper_bound: upper_bound - solution.t }
}
