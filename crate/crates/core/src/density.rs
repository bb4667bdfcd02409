//! Kernel density estimation of the marginal law of `π_F u`, Nadaraya–Watson
//! regression of the conditional drift, and the drift moment functionals.
//!
//! Both estimators scatter a truncated Gaussian product kernel (cut at eight
//! bandwidths) from each sample onto the grid. Samples are processed in fixed
//! chunks whose partial grids are summed in chunk order, so the result does not
//! depend on the thread count.

use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Axis, Grid, MAX_DIM};
use crate::sde::EnsembleSnapshot;

/// Kernel support in bandwidths.
pub const KERNEL_CUTOFF: f64 = 8.0;
/// Nodes whose kernel weight is below this many peak kernel values are masked.
pub const MIN_EFFECTIVE_SAMPLES: f64 = 10.0;
pub const MIN_SAMPLES: usize = 100;
const CHUNK: usize = 2048;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Extent {
    /// Sample mean ± this many sample standard deviations on every axis.
    StdDevs(f64),
    /// Explicit `(min, max)` per axis.
    Explicit(Vec<(f64, f64)>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nodes: usize,
    pub extent: Extent,
}

impl GridSpec {
    pub fn auto(nodes: usize) -> Self {
        GridSpec {
            nodes,
            extent: Extent::StdDevs(6.0),
        }
    }

    pub fn symmetric(nodes: usize, half_width: f64, dim: usize) -> Self {
        GridSpec {
            nodes,
            extent: Extent::Explicit(vec![(-half_width, half_width); dim]),
        }
    }

    pub fn resolve(&self, points: &[f64], dim: usize) -> Result<Grid> {
        let axes = match &self.extent {
            Extent::Explicit(ranges) => {
                if ranges.len() != dim {
                    return Err(Error::GridMismatch(format!(
                        "grid has {} axes, data has dimension {dim}",
                        ranges.len()
                    )));
                }
                ranges
                    .iter()
                    .map(|&(lo, hi)| Axis::new(lo, hi, self.nodes))
                    .collect::<Result<Vec<_>>>()?
            }
            Extent::StdDevs(k) => {
                let (mean, sd) = column_stats(points, dim);
                (0..dim)
                    .map(|a| {
                        if !(sd[a] > 0.0) {
                            return Err(Error::DegenerateSample { axis: a });
                        }
                        Axis::new(mean[a] - k * sd[a], mean[a] + k * sd[a], self.nodes)
                    })
                    .collect::<Result<Vec<_>>>()?
            }
        };
        Grid::new(axes)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BandwidthRule {
    /// `h_j = σ̂_j (4 / ((d+2) n))^{1/(d+4)}`.
    Silverman,
    /// Silverman bandwidth times a factor.
    Scaled(f64),
    /// Same bandwidth on every axis.
    Fixed(f64),
    PerAxis(Vec<f64>),
}

impl BandwidthRule {
    pub fn bandwidths(&self, points: &[f64], dim: usize) -> Result<Vec<f64>> {
        let n = points.len() / dim.max(1);
        let silverman = || -> Result<Vec<f64>> {
            let (_, sd) = column_stats(points, dim);
            let factor = (4.0 / ((dim as f64 + 2.0) * n as f64)).powf(1.0 / (dim as f64 + 4.0));
            sd.iter()
                .enumerate()
                .map(|(a, s)| {
                    if *s > 0.0 {
                        Ok(s * factor)
                    } else {
                        Err(Error::DegenerateSample { axis: a })
                    }
                })
                .collect()
        };
        let h = match self {
            BandwidthRule::Silverman => silverman()?,
            BandwidthRule::Scaled(c) => silverman()?.into_iter().map(|h| h * c).collect(),
            BandwidthRule::Fixed(h) => vec![*h; dim],
            BandwidthRule::PerAxis(h) => {
                if h.len() != dim {
                    return Err(Error::Parameter(format!(
                        "{} bandwidths given for dimension {dim}",
                        h.len()
                    )));
                }
                h.clone()
            }
        };
        if h.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::Parameter(format!(
                "bandwidths must be positive: {h:?}"
            )));
        }
        Ok(h)
    }
}

/// Per-axis sample mean and standard deviation (`n - 1` normalization).
pub fn column_stats(points: &[f64], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let n = points.len() / dim;
    let mut mean = vec![0.0; dim];
    let mut sd = vec![0.0; dim];
    if n == 0 {
        return (mean, sd);
    }
    for a in 0..dim {
        let col: Vec<f64> = (0..n).map(|j| points[j * dim + a]).collect();
        let m = crate::sde::pairwise_sum(&col) / n as f64;
        let dev: Vec<f64> = col.iter().map(|x| (x - m).powi(2)).collect();
        mean[a] = m;
        sd[a] = if n > 1 {
            (crate::sde::pairwise_sum(&dev) / (n as f64 - 1.0)).sqrt()
        } else {
            0.0
        };
    }
    (mean, sd)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub grid: Grid,
    pub values: Vec<f64>,
    /// Per-axis bandwidth; empty for densities not produced by a KDE.
    pub bandwidth: Vec<f64>,
    pub time: f64,
    /// `∫ f - 1` by trapezoidal quadrature.
    pub mass_defect: f64,
}

impl DensityGrid {
    pub fn from_values(grid: Grid, values: Vec<f64>, time: f64) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        let mass_defect = grid.integrate(&values) - 1.0;
        Ok(DensityGrid {
            grid,
            values,
            bandwidth: Vec::new(),
            time,
            mass_defect,
        })
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    pub fn mass(&self) -> f64 {
        1.0 + self.mass_defect
    }

    /// CSV with columns `x_1..x_d,value` plus a JSON sidecar next to it.
    pub fn write(&self, csv_path: &Path) -> Result<()> {
        let d = self.dim();
        let mut w = BufWriter::new(std::fs::File::create(csv_path)?);
        let mut header: Vec<String> = (1..=d).map(|i| format!("x_{i}")).collect();
        header.push("value".into());
        writeln!(w, "{}", header.join(","))?;
        for (i, v) in self.values.iter().enumerate() {
            let c = self.grid.coords(i);
            let mut row: Vec<String> = c[..d].iter().map(|x| format!("{x}")).collect();
            row.push(format!("{v}"));
            writeln!(w, "{}", row.join(","))?;
        }
        w.flush()?;
        let sidecar = DensitySidecar {
            grid: self.grid.clone(),
            bandwidth: self.bandwidth.clone(),
            time: self.time,
            mass_defect: self.mass_defect,
        };
        std::fs::write(
            sidecar_path(csv_path),
            serde_json::to_string_pretty(&sidecar)?,
        )?;
        Ok(())
    }

    /// Reads a density written by [`DensityGrid::write`].
    pub fn read(csv_path: &Path) -> Result<Self> {
        let side: DensitySidecar =
            serde_json::from_str(&std::fs::read_to_string(sidecar_path(csv_path))?)?;
        let d = side.grid.dim();
        let rows = read_csv_rows(csv_path, d + 1)?;
        let values: Vec<f64> = rows.iter().map(|r| r[d]).collect();
        let mut out = DensityGrid::from_values(side.grid, values, side.time)?;
        out.bandwidth = side.bandwidth;
        Ok(out)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DensitySidecar {
    grid: Grid,
    bandwidth: Vec<f64>,
    time: f64,
    mass_defect: f64,
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

fn read_csv_rows(path: &Path, width: usize) -> Result<Vec<Vec<f64>>> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (ln, line) in file.lines().enumerate().skip(1) {
        let line = line?;
        let row: Vec<f64> = line
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parameter(format!("{}:{}: {e}", path.display(), ln + 1)))?;
        if row.len() != width {
            return Err(Error::Parameter(format!(
                "{}:{}: expected {width} columns",
                path.display(),
                ln + 1
            )));
        }
        out.push(row);
    }
    Ok(out)
}

/// Kernel sums at every node: `Σ_j K(x - X_j)` and, when targets are given,
/// `Σ_j K(x - X_j) Y_j` (row-major `nodes × m`). The kernel is the
/// unnormalized `exp(-|(x - X)/h|²/2)`.
fn scatter(
    grid: &Grid,
    points: &[f64],
    dim: usize,
    h: &[f64],
    targets: Option<(&[f64], usize)>,
) -> (Vec<f64>, Vec<f64>) {
    let n = points.len() / dim;
    let m = targets.map_or(0, |t| t.1);
    let nodes = grid.len();
    let strides = grid.strides();
    let axes = grid.axes();
    let partials: Vec<(Vec<f64>, Vec<f64>)> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut dens = vec![0.0; nodes];
            let mut tgt = vec![0.0; nodes * m];
            let mut lo = [0usize; MAX_DIM];
            let mut w1d: [Vec<f64>; MAX_DIM] = Default::default();
            for j in c * CHUNK..((c + 1) * CHUNK).min(n) {
                let x = &points[j * dim..(j + 1) * dim];
                let mut empty = false;
                for a in 0..dim {
                    let ax = &axes[a];
                    let sp = ax.spacing();
                    let reach = KERNEL_CUTOFF * h[a];
                    let first = ((x[a] - reach - ax.min) / sp).ceil().max(0.0);
                    let last = ((x[a] + reach - ax.min) / sp)
                        .floor()
                        .min((ax.nodes - 1) as f64);
                    w1d[a].clear();
                    if last < first {
                        empty = true;
                        break;
                    }
                    lo[a] = first as usize;
                    for i in first as usize..=last as usize {
                        let z = (ax.coord(i) - x[a]) / h[a];
                        w1d[a].push((-0.5 * z * z).exp());
                    }
                }
                if empty {
                    continue;
                }
                let y = targets.map(|(t, m)| &t[j * m..(j + 1) * m]);
                match dim {
                    1 => {
                        for (i, &w) in w1d[0].iter().enumerate() {
                            let node = lo[0] + i;
                            dens[node] += w;
                            if let Some(y) = y {
                                for (k, yk) in y.iter().enumerate() {
                                    tgt[node * m + k] += w * yk;
                                }
                            }
                        }
                    }
                    2 => {
                        for (i0, &w0) in w1d[0].iter().enumerate() {
                            let base = (lo[0] + i0) * strides[0] + lo[1];
                            for (i1, &w1) in w1d[1].iter().enumerate() {
                                let node = base + i1;
                                let w = w0 * w1;
                                dens[node] += w;
                                if let Some(y) = y {
                                    for (k, yk) in y.iter().enumerate() {
                                        tgt[node * m + k] += w * yk;
                                    }
                                }
                            }
                        }
                    }
                    _ => {
                        for (i0, &w0) in w1d[0].iter().enumerate() {
                            for (i1, &w1) in w1d[1].iter().enumerate() {
                                let base =
                                    (lo[0] + i0) * strides[0] + (lo[1] + i1) * strides[1] + lo[2];
                                for (i2, &w2) in w1d[2].iter().enumerate() {
                                    let node = base + i2;
                                    let w = w0 * w1 * w2;
                                    dens[node] += w;
                                    if let Some(y) = y {
                                        for (k, yk) in y.iter().enumerate() {
                                            tgt[node * m + k] += w * yk;
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
            (dens, tgt)
        })
        .collect();
    let mut dens = vec![0.0; nodes];
    let mut tgt = vec![0.0; nodes * m];
    for (pd, pt) in partials {
        dens.iter_mut().zip(&pd).for_each(|(a, b)| *a += b);
        tgt.iter_mut().zip(&pt).for_each(|(a, b)| *a += b);
    }
    (dens, tgt)
}

fn kernel_peak(h: &[f64]) -> f64 {
    h.iter()
        .map(|hj| 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * hj))
        .product()
}

fn check_sample(points: &[f64], dim: usize) -> Result<usize> {
    if dim == 0 || dim > MAX_DIM {
        return Err(Error::UnsupportedDimension(dim));
    }
    let n = points.len() / dim;
    if n < MIN_SAMPLES {
        return Err(Error::InsufficientData {
            got: n,
            need: MIN_SAMPLES,
        });
    }
    Ok(n)
}

/// Gaussian product-kernel density estimate of `points` (row-major
/// `n × dim`) on the grid.
pub fn kde_on_grid(
    points: &[f64],
    dim: usize,
    grid: &Grid,
    bandwidth: &BandwidthRule,
    time: f64,
) -> Result<DensityGrid> {
    let n = check_sample(points, dim)?;
    if grid.dim() != dim {
        return Err(Error::GridMismatch(format!(
            "grid dimension {} vs data dimension {dim}",
            grid.dim()
        )));
    }
    let h = bandwidth.bandwidths(points, dim)?;
    let (sums, _) = scatter(grid, points, dim, &h, None);
    let norm = kernel_peak(&h) / n as f64;
    let values: Vec<f64> = sums.iter().map(|s| s * norm).collect();
    let mut out = DensityGrid::from_values(grid.clone(), values, time)?;
    out.bandwidth = h;
    Ok(out)
}

pub fn kde_marginal(
    snapshot: &EnsembleSnapshot,
    spec: &GridSpec,
    bandwidth: &BandwidthRule,
) -> Result<DensityGrid> {
    check_sample(&snapshot.coords, snapshot.dim)?;
    let grid = spec.resolve(&snapshot.coords, snapshot.dim)?;
    kde_on_grid(
        &snapshot.coords,
        snapshot.dim,
        &grid,
        bandwidth,
        snapshot.time,
    )
}

/// Nadaraya–Watson regression result: conditional mean per node (row-major
/// `nodes × m`) and kernel weight in units of the peak kernel value, i.e. the
/// effective number of samples near the node.
#[derive(Debug, Clone, PartialEq)]
pub struct Regression {
    pub mean: Vec<f64>,
    pub effective_count: Vec<f64>,
    pub bandwidth: Vec<f64>,
}

pub fn nadaraya_watson(
    points: &[f64],
    targets: &[f64],
    dim: usize,
    grid: &Grid,
    bandwidth: &BandwidthRule,
) -> Result<Regression> {
    let n = check_sample(points, dim)?;
    if !targets.len().is_multiple_of(n) {
        return Err(Error::Parameter(format!(
            "{} targets for {n} samples",
            targets.len()
        )));
    }
    let m = targets.len() / n;
    let h = bandwidth.bandwidths(points, dim)?;
    let (den, num) = scatter(grid, points, dim, &h, Some((targets, m)));
    let mean = num
        .chunks(m)
        .zip(&den)
        .flat_map(|(row, &d)| row.iter().map(move |v| if d > 0.0 { v / d } else { 0.0 }))
        .collect();
    Ok(Regression {
        mean,
        effective_count: den,
        bandwidth: h,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftField {
    pub grid: Grid,
    /// `ν A_F x' + E[π_F B | π_F u = x']`, row-major `nodes × d`. Masked nodes
    /// carry the linear part only.
    pub drift: Vec<f64>,
    /// Regression part alone, zero on masked nodes.
    pub conditional: Vec<f64>,
    pub mask: Vec<bool>,
    pub time: f64,
    pub nu: f64,
    pub stokes: Vec<f64>,
    pub bandwidth: Vec<f64>,
}

impl DriftField {
    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn at(&self, node: usize) -> &[f64] {
        let d = self.dim();
        &self.drift[node * d..(node + 1) * d]
    }

    /// Drift `ν A_F x' + c(x')` from an explicit conditional mean function.
    pub fn from_fn(
        grid: Grid,
        nu: f64,
        stokes: Vec<f64>,
        time: f64,
        conditional: impl Fn(&[f64]) -> Vec<f64>,
    ) -> Self {
        let d = grid.dim();
        let mut cond = Vec::with_capacity(grid.len() * d);
        let mut drift = Vec::with_capacity(grid.len() * d);
        for i in 0..grid.len() {
            let x = grid.coords(i);
            let c = conditional(&x[..d]);
            for a in 0..d {
                cond.push(c[a]);
                drift.push(nu * stokes[a] * x[a] + c[a]);
            }
        }
        let mask = vec![false; grid.len()];
        DriftField {
            grid,
            drift,
            conditional: cond,
            mask,
            time,
            nu,
            stokes,
            bandwidth: Vec::new(),
        }
    }

    pub fn masked_fraction(&self) -> f64 {
        self.mask.iter().filter(|&&m| m).count() as f64 / self.mask.len() as f64
    }

    /// Linear interpolation in time between two fields on the same grid.
    pub fn lerp(a: &DriftField, b: &DriftField, t: f64) -> Result<DriftField> {
        a.grid.check_same(&b.grid)?;
        let span = b.time - a.time;
        let w = if span.abs() > 0.0 {
            ((t - a.time) / span).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let mix = |x: &[f64], y: &[f64]| -> Vec<f64> {
            x.iter()
                .zip(y)
                .map(|(p, q)| (1.0 - w) * p + w * q)
                .collect()
        };
        Ok(DriftField {
            grid: a.grid.clone(),
            drift: mix(&a.drift, &b.drift),
            conditional: mix(&a.conditional, &b.conditional),
            mask: a.mask.iter().zip(&b.mask).map(|(p, q)| *p || *q).collect(),
            time: t,
            nu: a.nu,
            stokes: a.stokes.clone(),
            bandwidth: a.bandwidth.clone(),
        })
    }

    /// CSV with columns `x_1..x_d,G_1..G_d,masked` plus a JSON sidecar.
    pub fn write(&self, csv_path: &Path) -> Result<()> {
        let d = self.dim();
        let mut w = BufWriter::new(std::fs::File::create(csv_path)?);
        let mut header: Vec<String> = (1..=d).map(|i| format!("x_{i}")).collect();
        header.extend((1..=d).map(|i| format!("G_{i}")));
        header.push("masked".into());
        writeln!(w, "{}", header.join(","))?;
        for i in 0..self.grid.len() {
            let c = self.grid.coords(i);
            let mut row: Vec<String> = c[..d].iter().map(|x| format!("{x}")).collect();
            row.extend(self.at(i).iter().map(|g| format!("{g}")));
            row.push(if self.mask[i] { "1" } else { "0" }.into());
            writeln!(w, "{}", row.join(","))?;
        }
        w.flush()?;
        let side = serde_json::json!({
            "grid": self.grid,
            "bandwidth": self.bandwidth,
            "time": self.time,
            "nu": self.nu,
            "stokes": self.stokes,
            "masked_fraction": self.masked_fraction(),
        });
        std::fs::write(sidecar_path(csv_path), serde_json::to_string_pretty(&side)?)?;
        Ok(())
    }
}

/// Regression of `π_F B` on `π_F u` plus the linear term `ν|k|² x'`.
pub fn estimate_drift(
    snapshot: &EnsembleSnapshot,
    grid: &Grid,
    bandwidth: &BandwidthRule,
    nu: f64,
) -> Result<DriftField> {
    let d = snapshot.dim;
    let reg = nadaraya_watson(&snapshot.coords, &snapshot.nonlinear, d, grid, bandwidth)?;
    let mut drift = Vec::with_capacity(grid.len() * d);
    let mut conditional = Vec::with_capacity(grid.len() * d);
    let mut mask = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let masked = reg.effective_count[i] < MIN_EFFECTIVE_SAMPLES;
        mask.push(masked);
        let x = grid.coords(i);
        for a in 0..d {
            let c = if masked { 0.0 } else { reg.mean[i * d + a] };
            conditional.push(c);
            drift.push(nu * snapshot.stokes[a] * x[a] + c);
        }
    }
    Ok(DriftField {
        grid: grid.clone(),
        drift,
        conditional,
        mask,
        time: snapshot.time,
        nu,
        stokes: snapshot.stokes.clone(),
        bandwidth: reg.bandwidth,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub value: f64,
    /// Fraction of the density mass sitting on masked nodes.
    pub masked_mass: f64,
    pub warning: Option<String>,
}

fn masked_mass(drift: &DriftField, density: &DensityGrid) -> (f64, Option<String>) {
    let g = &density.grid;
    let (mut total, mut masked) = (0.0, 0.0);
    for (i, f) in density.values.iter().enumerate() {
        let w = g.weight(i) * f;
        total += w;
        if drift.mask[i] {
            masked += w;
        }
    }
    let frac = if total > 0.0 { masked / total } else { 0.0 };
    let warning = (frac > 0.1).then(|| {
        format!(
            "masked nodes carry {:.1}% of the density mass; drift moment is unreliable",
            100.0 * frac
        )
    });
    (frac, warning)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `(∫ |G|^p f dx')^{1/p}` over unmasked nodes.
pub fn moment_g(drift: &DriftField, density: &DensityGrid, p: f64) -> Result<MomentEstimate> {
    drift.grid.check_same(&density.grid)?;
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::Parameter(format!(
            "moment exponent must be in [1, ∞), got {p}"
        )));
    }
    let g = &density.grid;
    let mut acc = 0.0;
    for (i, f) in density.values.iter().enumerate() {
        if !drift.mask[i] {
            acc += g.weight(i) * norm(drift.at(i)).powf(p) * f;
        }
    }
    let (frac, warning) = masked_mass(drift, density);
    Ok(MomentEstimate {
        value: acc.powf(1.0 / p),
        masked_mass: frac,
        warning,
    })
}

/// `∫ exp(λ|G|) f dx'` over unmasked nodes.
pub fn exp_moment_g(
    drift: &DriftField,
    density: &DensityGrid,
    lambda: f64,
) -> Result<MomentEstimate> {
    drift.grid.check_same(&density.grid)?;
    let g = &density.grid;
    let mut acc = 0.0;
    for (i, f) in density.values.iter().enumerate() {
        if !drift.mask[i] {
            acc += g.weight(i) * (lambda * norm(drift.at(i))).exp() * f;
        }
    }
    let (frac, warning) = masked_mass(drift, density);
    Ok(MomentEstimate {
        value: acc,
        masked_mass: frac,
        warning,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductNorm {
    /// `‖G f‖_{L^p}`.
    pub lhs: f64,
    /// `𝒢_p ℱ^{1/q} t^{-d/(2q)}`.
    pub rhs: f64,
    pub moment: MomentEstimate,
}

/// `‖G f‖_{L^p}` together with the bound obtained from Hölder's inequality and
/// `‖f(t)‖_∞ ≤ ℱ t^{-d/2}`, where `f_functional` is `sup_s s^{d/2} ‖f(s)‖_∞`.
pub fn product_norm(
    drift: &DriftField,
    density: &DensityGrid,
    p: f64,
    f_functional: f64,
) -> Result<ProductNorm> {
    let moment = moment_g(drift, density, p)?;
    let g = &density.grid;
    let mut acc = 0.0;
    for (i, f) in density.values.iter().enumerate() {
        if !drift.mask[i] {
            acc += g.weight(i) * (norm(drift.at(i)) * f).powf(p);
        }
    }
    let q_inv = 1.0 - 1.0 / p;
    let d = density.dim() as f64;
    let rhs = moment.value * f_functional.powf(q_inv) * density.time.powf(-d * q_inv / 2.0);
    Ok(ProductNorm {
        lhs: acc.powf(1.0 / p),
        rhs,
        moment,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normals(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn point_mass_reproduces_kernel() {
        for d in 1..=3 {
            let pts = vec![0.0; 200 * d];
            let grid = Grid::cube(d, 1.0, 21).unwrap();
            let h = 0.3;
            let est = kde_on_grid(&pts, d, &grid, &BandwidthRule::Fixed(h), 0.0).unwrap();
            let center = grid.len() / 2;
            let expected =
                (2.0 * std::f64::consts::PI).powf(-(d as f64) / 2.0) * h.powi(-(d as i32));
            assert!((est.values[center] - expected).abs() < 1e-12 * expected);
        }
    }

    #[test]
    fn silverman_on_degenerate_sample_errors() {
        let pts = vec![0.0; 200];
        let grid = Grid::cube(1, 1.0, 21).unwrap();
        assert!(matches!(
            kde_on_grid(&pts, 1, &grid, &BandwidthRule::Silverman, 0.0),
            Err(Error::DegenerateSample { axis: 0 })
        ));
    }

    #[test]
    fn too_few_samples() {
        let grid = Grid::cube(1, 1.0, 21).unwrap();
        assert!(matches!(
            kde_on_grid(&[0.1; 50], 1, &grid, &BandwidthRule::Fixed(0.1), 0.0),
            Err(Error::InsufficientData { got: 50, .. })
        ));
    }

    #[test]
    fn standard_gaussian_sample() {
        let pts = normals(100_000, 1);
        let grid = Grid::cube(1, 6.0, 241).unwrap();
        let est = kde_on_grid(&pts, 1, &grid, &BandwidthRule::Silverman, 0.0).unwrap();
        let max_err = (0..grid.len())
            .map(|i| {
                let x = grid.coords(i)[0];
                let exact = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
                (est.values[i] - exact).abs()
            })
            .fold(0.0, f64::max);
        assert!(max_err <= 0.01, "max node error {max_err}");
        assert!(est.mass_defect.abs() < 0.02);
        assert!(est.values.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn independent_of_chunking_order() {
        let pts = normals(10_000, 2);
        let grid = Grid::cube(2, 4.0, 31).unwrap();
        let a = kde_on_grid(&pts, 2, &grid, &BandwidthRule::Silverman, 0.0).unwrap();
        let b = rayon::ThreadPoolBuilder::new()
            .num_threads(3)
            .build()
            .unwrap()
            .install(|| kde_on_grid(&pts, 2, &grid, &BandwidthRule::Silverman, 0.0).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn regression_of_constant_is_constant() {
        let pts = normals(4000, 3);
        let n = pts.len() / 2;
        let targets: Vec<f64> = (0..n).flat_map(|_| [1.5, -0.25]).collect();
        let grid = Grid::cube(2, 3.0, 15).unwrap();
        let reg = nadaraya_watson(&pts, &targets, 2, &grid, &BandwidthRule::Silverman).unwrap();
        for i in 0..grid.len() {
            if reg.effective_count[i] > 0.0 {
                assert!((reg.mean[2 * i] - 1.5).abs() < 1e-12);
                assert!((reg.mean[2 * i + 1] + 0.25).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn regression_is_linear_in_targets() {
        let pts = normals(3000, 4);
        let y1 = normals(3000, 5);
        let y2 = normals(3000, 6);
        let comb: Vec<f64> = y1.iter().zip(&y2).map(|(a, b)| 2.0 * a - 0.5 * b).collect();
        let grid = Grid::cube(1, 4.0, 41).unwrap();
        let r = |y: &[f64]| nadaraya_watson(&pts, y, 1, &grid, &BandwidthRule::Silverman).unwrap();
        let (a, b, c) = (r(&y1), r(&y2), r(&comb));
        for i in 0..grid.len() {
            let expect = 2.0 * a.mean[i] - 0.5 * b.mean[i];
            assert!((c.mean[i] - expect).abs() < 1e-12 * (1.0 + expect.abs()));
        }
    }

    #[test]
    fn linear_target_has_gaussian_shrinkage_bias() {
        // With a N(0,1) design and a Gaussian kernel of width h, the
        // large-sample local-constant fit of y = L x is L x / (1 + h²).
        let pts = normals(200_000, 7);
        let lin = -1.3;
        let targets: Vec<f64> = pts.iter().map(|x| lin * x).collect();
        let grid = Grid::cube(1, 2.0, 21).unwrap();
        for h in [0.1, 0.2, 0.4] {
            let reg = nadaraya_watson(&pts, &targets, 1, &grid, &BandwidthRule::Fixed(h)).unwrap();
            for i in 0..grid.len() {
                let x = grid.coords(i)[0];
                let limit = lin * x / (1.0 + h * h);
                assert!((reg.mean[i] - limit).abs() < 0.02, "h={h} x={x}");
                assert!((reg.mean[i] - lin * x).abs() <= lin.abs() * 2.0 * h * h * x.abs() + 0.02);
            }
        }
    }

    fn gaussian_density(grid: &Grid, s: f64) -> DensityGrid {
        let values = (0..grid.len())
            .map(|i| {
                let x = grid.coords(i)[0];
                (-0.5 * x * x / (s * s)).exp() / ((2.0 * std::f64::consts::PI).sqrt() * s)
            })
            .collect();
        DensityGrid::from_values(grid.clone(), values, 1.0).unwrap()
    }

    #[test]
    fn moment_of_zero_and_constant_drift() {
        let grid = Grid::cube(1, 8.0, 801).unwrap();
        let f = gaussian_density(&grid, 1.0);
        let zero = DriftField::from_fn(grid.clone(), 0.0, vec![1.0], 1.0, |_| vec![0.0]);
        assert_eq!(moment_g(&zero, &f, 1.0).unwrap().value, 0.0);
        assert_eq!(product_norm(&zero, &f, 2.0, 1.0).unwrap().lhs, 0.0);
        let c = DriftField::from_fn(grid.clone(), 0.0, vec![1.0], 1.0, |_| vec![-2.5]);
        for p in [1.0, 2.0, 4.0] {
            let m = moment_g(&c, &f, p).unwrap().value;
            assert!((m - 2.5).abs() < 1e-9, "p={p}: {m}");
        }
    }

    #[test]
    fn first_moment_of_linear_drift() {
        let (nu, lam, s) = (0.7, 2.0, 0.8);
        let grid = Grid::cube(1, 8.0 * s, 1601).unwrap();
        let f = gaussian_density(&grid, s);
        let g = DriftField::from_fn(grid, nu, vec![lam], 1.0, |_| vec![0.0]);
        let m = moment_g(&g, &f, 1.0).unwrap().value;
        let exact = nu * lam * s * (2.0 / std::f64::consts::PI).sqrt();
        assert!((m - exact).abs() < 1e-5 * exact);
        let pn = product_norm(&g, &f, 1.0, 1.0).unwrap();
        assert_eq!(pn.lhs, m);
        let ms: Vec<f64> = [1.0, 2.0, 4.0]
            .iter()
            .map(|&p| moment_g(&g, &f, p).unwrap().value)
            .collect();
        assert!(ms[0] <= ms[1] && ms[1] <= ms[2]);
    }

    #[test]
    fn masked_mass_warning() {
        let grid = Grid::cube(1, 4.0, 81).unwrap();
        let f = gaussian_density(&grid, 1.0);
        let mut g = DriftField::from_fn(grid, 1.0, vec![1.0], 1.0, |_| vec![0.0]);
        for m in g.mask.iter_mut().skip(30).take(21) {
            *m = true;
        }
        let est = moment_g(&g, &f, 1.0).unwrap();
        assert!(est.masked_mass > 0.1);
        assert!(est.warning.is_some());
    }

    #[test]
    fn density_csv_round_trip() {
        let grid = Grid::cube(2, 2.0, 7).unwrap();
        let vals: Vec<f64> = (0..grid.len()).map(|i| i as f64 * 0.01).collect();
        let d = DensityGrid::from_values(grid, vals, 0.5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        d.write(&p).unwrap();
        assert_eq!(DensityGrid::read(&p).unwrap(), d);
    }
}
