//! Finite differences, Besov and Hölder (semi)norms on grids, heat-kernel
//! bound verification, the bootstrap exponent iteration and the time-weighted
//! density statistics.
//!
//! `Δ_h^n f(x) = Σ_j (-1)^{n-j} C(n,j) f(x + jh)`. Off-node values come from
//! multilinear interpolation. Stencils leaving the grid are dropped from the
//! `L^p` quadrature and the dropped share of `∫|f|` is reported.
//!
//! The supremum over `|h| ≤ 1` is taken over 20 log-spaced magnitudes in
//! `[2Δx, 1]` along the coordinate axes and the diagonals, both signs. This
//! under-estimates the true supremum for anisotropic functions.

use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::DensityGrid;
use crate::error::{Error, Result};
use crate::fokker_planck::HeatKernelF;
use crate::grid::{Axis, Grid};

pub const LADDER_LEN: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter(
                "grid function has non-finite values".into(),
            ));
        }
        Ok(GridFunction { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        let d = grid.dim();
        let values = (0..grid.len()).map(|i| f(&grid.coords(i)[..d])).collect();
        GridFunction { grid, values }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl From<&DensityGrid> for GridFunction {
    fn from(d: &DensityGrid) -> Self {
        GridFunction {
            grid: d.grid.clone(),
            values: d.values.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BesovParams {
    pub s: f64,
    /// `f64::INFINITY` for the sup norm.
    pub p: f64,
    pub q: f64,
    pub n: u32,
}

impl BesovParams {
    pub fn new(s: f64, p: f64, q: f64, n: u32) -> Result<Self> {
        if !(s > 0.0) {
            return Err(Error::Parameter(format!(
                "smoothness must be positive, got {s}"
            )));
        }
        if !(p >= 1.0) || !(q >= 1.0) {
            return Err(Error::Parameter(format!(
                "need p, q ≥ 1, got p = {p}, q = {q}"
            )));
        }
        if !(n as f64 > s) {
            return Err(Error::Parameter(format!(
                "difference order n = {n} must exceed s = {s}"
            )));
        }
        Ok(BesovParams { s, p, q, n })
    }
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `Δ_h^n f` at `x`; `None` when a stencil point leaves the grid.
pub fn finite_difference_at(f: &GridFunction, h: &[f64], n: u32, x: &[f64]) -> Option<f64> {
    let d = f.grid.dim();
    let mut acc = 0.0;
    let mut y = [0.0; 3];
    for j in 0..=n {
        for a in 0..d {
            y[a] = x[a] + j as f64 * h[a];
        }
        let v = f.grid.interpolate(&f.values, &y[..d])?;
        let sign = if (n - j).is_multiple_of(2) { 1.0 } else { -1.0 };
        acc += sign * binomial(n, j) * v;
    }
    Some(acc)
}

/// `Δ_h^n f` at grid node `node`.
pub fn finite_difference(f: &GridFunction, h: &[f64], n: u32, node: usize) -> Option<f64> {
    let x = f.grid.coords(node);
    finite_difference_at(f, h, n, &x[..f.grid.dim()])
}

/// `‖Δ_h^n f‖_{L^p}` over in-domain stencils and the share of `∫|f|` sitting
/// on excluded nodes.
pub fn difference_norm(f: &GridFunction, h: &[f64], n: u32, p: f64) -> (f64, f64) {
    let g = &f.grid;
    let (acc, excluded, total) = (0..g.len())
        .into_par_iter()
        .map(|i| {
            let w = g.weight(i);
            let mass = w * f.values[i].abs();
            match finite_difference(f, h, n, i) {
                Some(v) => {
                    let contrib = if p.is_infinite() {
                        v.abs()
                    } else {
                        w * v.abs().powf(p)
                    };
                    (contrib, 0.0, mass)
                }
                None => (0.0, mass, mass),
            }
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold((0.0f64, 0.0, 0.0), |(a, e, t), (c, m, tm)| {
            if p.is_infinite() {
                (a.max(c), e + m, t + tm)
            } else {
                (a + c, e + m, t + tm)
            }
        });
    let norm = if p.is_infinite() {
        acc
    } else {
        acc.powf(1.0 / p)
    };
    let frac = if total > 0.0 { excluded / total } else { 0.0 };
    (norm, frac)
}

/// Unit vectors along ± each axis and ± each diagonal.
pub fn directions(d: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for a in 0..d {
        for s in [1.0, -1.0] {
            let mut v = vec![0.0; d];
            v[a] = s;
            out.push(v);
        }
    }
    if d >= 2 {
        let norm = (d as f64).sqrt();
        for signs in 0..(1usize << d) {
            let v: Vec<f64> = (0..d)
                .map(|a| if (signs >> a) & 1 == 1 { -1.0 } else { 1.0 } / norm)
                .collect();
            out.push(v);
        }
    }
    out
}

/// `LADDER_LEN` log-spaced magnitudes in `[2Δx, 1]`.
pub fn h_ladder(grid: &Grid) -> Vec<f64> {
    let lo = (2.0 * grid.max_spacing()).min(1.0);
    if lo >= 1.0 {
        return vec![1.0];
    }
    (0..LADDER_LEN)
        .map(|i| {
            let s = i as f64 / (LADDER_LEN - 1) as f64;
            (lo.ln() * (1.0 - s)).exp()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeminormEstimate {
    pub value: f64,
    /// Largest share of `∫|f|` dropped from any single difference norm.
    pub excluded_mass: f64,
    /// `|h|` attaining the supremum (`q = ∞` only).
    pub argmax_h: Option<f64>,
}

/// For each ladder magnitude, `‖Δ_h^n f‖_{L^p}` for every direction.
fn ladder_norms(f: &GridFunction, n: u32, p: f64) -> (Vec<f64>, Vec<Vec<f64>>, f64) {
    let d = f.grid.dim();
    let dirs = directions(d);
    let ladder = h_ladder(&f.grid);
    let mut excluded: f64 = 0.0;
    let norms = ladder
        .iter()
        .map(|&r| {
            dirs.iter()
                .map(|u| {
                    let h: Vec<f64> = u.iter().map(|c| c * r).collect();
                    let (v, e) = difference_norm(f, &h, n, p);
                    excluded = excluded.max(e);
                    v
                })
                .collect()
        })
        .collect();
    (ladder, norms, excluded)
}

fn sphere_area(d: usize) -> f64 {
    match d {
        1 => 2.0,
        2 => 2.0 * std::f64::consts::PI,
        _ => 4.0 * std::f64::consts::PI,
    }
}

/// `[f]_{B^s_{p,q}}`. For `q = ∞` the supremum over the ladder; otherwise
/// `(∫_{|h|≤1} (‖Δ_h^n f‖_p / |h|^s)^q dh/|h|^d)^{1/q}` written in polar
/// coordinates, trapezoidal in `log|h|` and averaged over the directions.
pub fn besov_seminorm(f: &GridFunction, params: &BesovParams) -> SeminormEstimate {
    let (ladder, norms, excluded) = ladder_norms(f, params.n, params.p);
    if params.q.is_infinite() {
        let mut best = 0.0;
        let mut arg = None;
        for (r, row) in ladder.iter().zip(&norms) {
            for v in row {
                let ratio = v / r.powf(params.s);
                if ratio > best {
                    best = ratio;
                    arg = Some(*r);
                }
            }
        }
        return SeminormEstimate {
            value: best,
            excluded_mass: excluded,
            argmax_h: arg,
        };
    }
    let d = f.grid.dim();
    let q = params.q;
    let integrand: Vec<f64> = ladder
        .iter()
        .zip(&norms)
        .map(|(r, row)| {
            let mean = row
                .iter()
                .map(|v| (v / r.powf(params.s)).powf(q))
                .sum::<f64>()
                / row.len() as f64;
            sphere_area(d) * mean
        })
        .collect();
    let mut acc = 0.0;
    for i in 1..ladder.len() {
        let dl = ladder[i].ln() - ladder[i - 1].ln();
        acc += 0.5 * dl * (integrand[i] + integrand[i - 1]);
    }
    SeminormEstimate {
        value: acc.max(0.0).powf(1.0 / q),
        excluded_mass: excluded,
        argmax_h: None,
    }
}

/// `max|f| + [f]_{B^α_{∞,∞}}` with first differences.
pub fn holder_norm(f: &GridFunction, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Parameter(format!(
            "Hölder exponent must be in (0,1), got {alpha}"
        )));
    }
    let params = BesovParams::new(alpha, f64::INFINITY, f64::INFINITY, 1)?;
    Ok(f.sup_norm() + besov_seminorm(f, &params).value)
}

/// Hölder seminorm alone.
pub fn holder_seminorm(f: &GridFunction, alpha: f64) -> Result<f64> {
    let params = BesovParams::new(alpha, f64::INFINITY, f64::INFINITY, 1)?;
    Ok(besov_seminorm(f, &params).value)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum KernelBound {
    /// `‖℘_t‖_p ≤ c t^{-d/2q}`
    Kernel,
    /// `‖∇℘_t‖_p ≤ c t^{-d/2q - 1/2}`
    Gradient,
    /// `‖Δ_h^n ℘_t‖_p ≤ c t^{-d/2q} (1 ∧ |h|/√t)^n`
    Difference,
    /// `‖Δ_h^n ∇℘_t‖_p ≤ c t^{-d/2q - 1/2} (1 ∧ |h|/√t)^n`
    GradientDifference,
}

impl KernelBound {
    pub const ALL: [KernelBound; 4] = [
        KernelBound::Kernel,
        KernelBound::Gradient,
        KernelBound::Difference,
        KernelBound::GradientDifference,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            KernelBound::Kernel => "kernel",
            KernelBound::Gradient => "gradient",
            KernelBound::Difference => "difference",
            KernelBound::GradientDifference => "gradient_difference",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelBoundRow {
    pub bound: KernelBound,
    pub t: f64,
    pub h: f64,
    #[serde(with = "crate::serde_float")]
    pub p: f64,
    pub lhs: f64,
    pub shape: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelBoundSummary {
    pub bound: KernelBound,
    #[serde(with = "crate::serde_float")]
    pub p: f64,
    /// Fitted constant: largest ratio over the ladder.
    pub constant: f64,
    /// Largest relative spread of the ratio across `t` at fixed `|h|/√t`.
    pub scaling_spread: f64,
    /// Relative spread across `t` of the per-`t` largest ratio.
    pub per_time_spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelBoundTable {
    pub dim: usize,
    pub n: u32,
    pub rows: Vec<KernelBoundRow>,
    pub summaries: Vec<KernelBoundSummary>,
}

impl KernelBoundTable {
    pub fn summary(&self, bound: KernelBound, p: f64) -> Option<&KernelBoundSummary> {
        self.summaries.iter().find(|s| s.bound == bound && s.p == p)
    }

    /// CSV with columns `bound,t,h,p,lhs,rhs_shape,ratio`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "bound,t,h,p,lhs,rhs_shape,ratio")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.bound.name(),
                r.t,
                r.h,
                r.p,
                r.lhs,
                r.shape,
                r.ratio
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

fn conj_exponent_inv(p: f64) -> f64 {
    // 1/q with 1/p + 1/q = 1
    if p.is_infinite() {
        1.0
    } else {
        1.0 - 1.0 / p
    }
}

fn lp_norm(weights: &[f64], values: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        values.iter().fold(0.0, |m, v| m.max(v.abs()))
    } else {
        weights
            .iter()
            .zip(values)
            .map(|(w, v)| w * v.abs().powf(p))
            .sum::<f64>()
            .powf(1.0 / p)
    }
}

/// Evaluates the four heat-kernel bounds on quadrature grids that scale with
/// `√t`, with `h` along the first axis. Norms come from analytic kernel values,
/// so the only discretization is the quadrature.
pub fn verify_kernel_bounds(
    hk: &HeatKernelF,
    t_ladder: &[f64],
    h_ladder: &[f64],
    p_set: &[f64],
    n: u32,
) -> Result<KernelBoundTable> {
    let d = hk.dim();
    if t_ladder.iter().any(|&t| !(t > 0.0)) || h_ladder.iter().any(|&h| !(h > 0.0)) {
        return Err(Error::Parameter("ladders must be positive".into()));
    }
    let nodes = match d {
        1 => 4001,
        2 => 301,
        _ => 81,
    };
    let sd_max: f64 = (0..d)
        .map(|a| hk.covariance()[(a, a)].sqrt())
        .fold(0.0, f64::max);
    let mut rows = Vec::new();
    for &t in t_ladder {
        for &h in h_ladder {
            let st = t.sqrt();
            let half = st * 8.0 * sd_max + n as f64 * h;
            let grid = Grid::new(vec![Axis::centered(half, nodes)?; d])?;
            let weights = grid.weights();
            let mut hv = vec![0.0; d];
            hv[0] = h;
            let evals: Vec<(f64, f64, f64, f64)> = (0..grid.len())
                .into_par_iter()
                .map(|i| {
                    let c = grid.coords(i);
                    let x = &c[..d];
                    let k = hk.kernel_eval(t, x).expect("t > 0");
                    let g = hk.grad_eval(t, x).expect("t > 0");
                    let mut dk = 0.0;
                    let mut dg = vec![0.0; d];
                    let mut y = vec![0.0; d];
                    for j in 0..=n {
                        for a in 0..d {
                            y[a] = x[a] + j as f64 * hv[a];
                        }
                        let sign = if (n - j).is_multiple_of(2) { 1.0 } else { -1.0 };
                        let b = sign * binomial(n, j);
                        dk += b * hk.kernel_eval(t, &y).expect("t > 0");
                        for (acc, gv) in dg.iter_mut().zip(hk.grad_eval(t, &y).expect("t > 0")) {
                            *acc += b * gv;
                        }
                    }
                    let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let dgn = dg.iter().map(|v| v * v).sum::<f64>().sqrt();
                    (k, gn, dk, dgn)
                })
                .collect();
            let col =
                |f: fn(&(f64, f64, f64, f64)) -> f64| -> Vec<f64> { evals.iter().map(f).collect() };
            let columns = [col(|e| e.0), col(|e| e.1), col(|e| e.2), col(|e| e.3)];
            let cut = (h / st).min(1.0).powi(n as i32);
            for &p in p_set {
                let base = t.powf(-(d as f64) * conj_exponent_inv(p) / 2.0);
                for (bi, bound) in KernelBound::ALL.iter().enumerate() {
                    let shape = match bound {
                        KernelBound::Kernel => base,
                        KernelBound::Gradient => base / st,
                        KernelBound::Difference => base * cut,
                        KernelBound::GradientDifference => base / st * cut,
                    };
                    let lhs = lp_norm(&weights, &columns[bi], p);
                    rows.push(KernelBoundRow {
                        bound: *bound,
                        t,
                        h,
                        p,
                        lhs,
                        shape,
                        ratio: lhs / shape,
                    });
                }
            }
        }
    }
    let summaries = summarize(&rows, p_set);
    Ok(KernelBoundTable {
        dim: d,
        n,
        rows,
        summaries,
    })
}

fn spread(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    if min > 0.0 {
        max / min - 1.0
    } else {
        f64::INFINITY
    }
}

fn summarize(rows: &[KernelBoundRow], p_set: &[f64]) -> Vec<KernelBoundSummary> {
    let mut out = Vec::new();
    for bound in KernelBound::ALL {
        for &p in p_set {
            let sel: Vec<&KernelBoundRow> = rows
                .iter()
                .filter(|r| r.bound == bound && r.p == p)
                .collect();
            if sel.is_empty() {
                continue;
            }
            let constant = sel.iter().map(|r| r.ratio).fold(0.0, f64::max);
            // group by |h|/√t on a 1e-9 relative key
            let mut groups: Vec<(f64, Vec<f64>)> = Vec::new();
            for r in &sel {
                let key = match bound {
                    KernelBound::Kernel | KernelBound::Gradient => 0.0,
                    _ => (r.h / r.t.sqrt()).ln(),
                };
                match groups.iter_mut().find(|(k, _)| (k - key).abs() < 1e-9) {
                    Some((_, v)) => v.push(r.ratio),
                    None => groups.push((key, vec![r.ratio])),
                }
            }
            let scaling_spread = groups
                .iter()
                .filter(|(_, v)| v.len() > 1)
                .map(|(_, v)| spread(v))
                .fold(0.0, f64::max);
            let mut times: Vec<f64> = sel.iter().map(|r| r.t).collect();
            times.dedup();
            let per_t: Vec<f64> = times
                .iter()
                .map(|&t| {
                    sel.iter()
                        .filter(|r| r.t == t)
                        .map(|r| r.ratio)
                        .fold(0.0, f64::max)
                })
                .collect();
            out.push(KernelBoundSummary {
                bound,
                p,
                constant,
                scaling_spread,
                per_time_spread: spread(&per_t),
            });
        }
    }
    out
}

/// `α_{j+1} = max(d/2, d/(2q) + α_j/p - 1/2)` from `α₀` until `d/2`.
pub fn bootstrap_exponents(d: usize, p: f64, alpha0: f64) -> Result<Vec<f64>> {
    if d == 0 {
        return Err(Error::Parameter("dimension must be positive".into()));
    }
    let upper = if d == 1 {
        f64::INFINITY
    } else {
        d as f64 / (d as f64 - 1.0)
    };
    if !(p > 1.0 && p < upper) {
        return Err(Error::Parameter(format!(
            "p = {p} outside the admissible range (1, {upper})"
        )));
    }
    let half = d as f64 / 2.0;
    if !(alpha0 >= half) || !alpha0.is_finite() {
        return Err(Error::Parameter(format!(
            "α₀ = {alpha0} must be at least d/2 = {half}"
        )));
    }
    let q_inv = 1.0 - 1.0 / p;
    let mut seq = vec![alpha0];
    let mut a = alpha0;
    while a > half {
        a = half.max(half * q_inv + a / p - 0.5);
        seq.push(a);
        if seq.len() > 1_000_000 {
            return Err(Error::Parameter(
                "bootstrap iteration did not terminate".into(),
            ));
        }
    }
    Ok(seq)
}

/// Number of steps the bootstrap needs from gap `α₀ - d/2`: the gap obeys
/// `g ↦ g/p - 1/2`, whose fixed point is `-q/2`, so
/// `g_j + q/2 = (g₀ + q/2) p^{-j}`.
pub fn bootstrap_step_bound(p: f64, gap0: f64) -> usize {
    if gap0 <= 0.0 {
        return 0;
    }
    let q = p / (p - 1.0);
    let geometric = ((1.0 + 2.0 * gap0 / q).ln() / p.ln()).ceil();
    let linear = (2.0 * gap0).ceil();
    geometric.min(linear).max(1.0) as usize
}

/// `max_{t_min ≤ t ≤ T} t^α ‖f(t)‖_∞` over the trajectory.
pub fn f_alpha_functional(
    traj: &[DensityGrid],
    alpha: f64,
    horizon: f64,
    t_min: f64,
) -> Result<f64> {
    Ok(f_alpha_table(traj, alpha, horizon, t_min)?
        .iter()
        .map(|r| r.1)
        .fold(0.0, f64::max))
}

pub fn f_alpha_table(
    traj: &[DensityGrid],
    alpha: f64,
    horizon: f64,
    t_min: f64,
) -> Result<Vec<(f64, f64)>> {
    check_window(t_min, horizon)?;
    Ok(in_window(traj, horizon, t_min)
        .map(|f| (f.time, f.time.powf(alpha) * f.max_value()))
        .collect())
}

fn check_window(t_min: f64, horizon: f64) -> Result<()> {
    if !(t_min > 0.0) || !(horizon >= t_min) {
        return Err(Error::Parameter(format!(
            "need 0 < t_min ≤ T, got t_min = {t_min}, T = {horizon}"
        )));
    }
    Ok(())
}

fn in_window(traj: &[DensityGrid], horizon: f64, t_min: f64) -> impl Iterator<Item = &DensityGrid> {
    let eps = 1e-12 * horizon.max(1.0);
    traj.iter()
        .filter(move |f| f.time >= t_min - eps && f.time <= horizon + eps)
}

/// `max_{t_min ≤ t ≤ T} t^{(d+α)/2} ‖f(t)‖_{C^α}`.
pub fn main_theorem_statistic(
    traj: &[DensityGrid],
    alpha: f64,
    horizon: f64,
    t_min: f64,
) -> Result<f64> {
    Ok(main_theorem_table(traj, alpha, horizon, t_min)?
        .iter()
        .map(|r| r.1)
        .fold(0.0, f64::max))
}

pub fn main_theorem_table(
    traj: &[DensityGrid],
    alpha: f64,
    horizon: f64,
    t_min: f64,
) -> Result<Vec<(f64, f64)>> {
    check_window(t_min, horizon)?;
    in_window(traj, horizon, t_min)
        .map(|f| {
            let d = f.dim() as f64;
            let h = holder_norm(&GridFunction::from(f), alpha)?;
            Ok((f.time, f.time.powf((d + alpha) / 2.0) * h))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BesovAuditRow {
    pub t: f64,
    pub g1: f64,
    /// `max_h ‖Δ_h² f‖_{L¹} / (4 (1∧t)^{-1/2} (1 + 𝒢₁) |h|)`.
    pub constant: f64,
    /// `(|h|, ‖Δ_h² f‖_{L¹})` with the norm maximized over directions.
    pub ladder: Vec<(f64, f64)>,
}

/// Fits the constant in `‖Δ_h² f‖_{L¹} ≤ 4c (1∧t)^{-1/2} (1 + 𝒢₁(t)) |h|`.
pub fn besov_bound_audit(f: &DensityGrid, g1: f64) -> BesovAuditRow {
    let gf = GridFunction::from(f);
    let (ladder, norms, _) = ladder_norms(&gf, 2, 1.0);
    let scale = 4.0 / f.time.min(1.0).sqrt() * (1.0 + g1);
    let rows: Vec<(f64, f64)> = ladder
        .iter()
        .zip(&norms)
        .map(|(r, row)| (*r, row.iter().cloned().fold(0.0, f64::max)))
        .collect();
    let constant = rows
        .iter()
        .map(|(r, v)| v / (scale * r))
        .fold(0.0, f64::max);
    BesovAuditRow {
        t: f.time,
        g1,
        constant,
        ladder: rows,
    }
}
