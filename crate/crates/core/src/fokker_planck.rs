//! The conditioned Fokker–Planck equation on `F`,
//! `∂_t f = ½ Tr(Σ D²f) + div(G f)`, marched with its mild formulation
//!
//! ```text
//! f(t+dt) = ℘_dt ⋆ f(t) + dt Σ_a (∂_a ℘_{dt/2}) ⋆ (G_a f)(t)
//! ```
//!
//! with `G` taken at the step midpoint. `℘_t` is the centered Gaussian with
//! covariance `tΣ`. Convolutions are discrete sums over nodes with the stencil
//! truncated at eight standard deviations; mass leaving the box is lost. The
//! Dirac initial condition is handled by starting from `℘_dt(· - x₀)`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{moment_g, DensityGrid, DriftField};
use crate::error::{Error, Result};
use crate::grid::{Grid, MAX_DIM};
use crate::noise::SubspaceF;

pub const STENCIL_CUTOFF: f64 = 8.0;
pub const NEGATIVITY_TOLERANCE: f64 = 1e-6;
/// Smallest kernel standard deviation, in grid spacings, that a stencil may
/// have before its discrete moments degrade.
pub const MIN_RESOLUTION: f64 = 0.75;

#[derive(Debug, Clone)]
pub struct HeatKernelF {
    cov: DMatrix<f64>,
    inv: DMatrix<f64>,
    det: f64,
}

impl HeatKernelF {
    pub fn new(cov: DMatrix<f64>) -> Result<Self> {
        let d = cov.nrows();
        if d == 0 || d > MAX_DIM || cov.ncols() != d {
            return Err(Error::UnsupportedDimension(d));
        }
        let chol = cov.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
        let inv = chol.inverse();
        let det = chol.l().diagonal().iter().map(|x| x * x).product();
        Ok(HeatKernelF { cov, inv, det })
    }

    pub fn from_subspace(f: &SubspaceF) -> Result<Self> {
        HeatKernelF::new(f.covariance())
    }

    pub fn dim(&self) -> usize {
        self.cov.nrows()
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn determinant(&self) -> f64 {
        self.det
    }

    fn check_time(t: f64) -> Result<()> {
        if t > 0.0 && t.is_finite() {
            Ok(())
        } else {
            Err(Error::Domain(format!("heat kernel needs t > 0, got {t}")))
        }
    }

    fn quad(&self, x: &[f64]) -> f64 {
        let v = DVector::from_column_slice(&x[..self.dim()]);
        (v.transpose() * &self.inv * &v)[(0, 0)]
    }

    /// `℘_t(x)`.
    pub fn kernel_eval(&self, t: f64, x: &[f64]) -> Result<f64> {
        Self::check_time(t)?;
        let d = self.dim() as f64;
        let norm = (2.0 * std::f64::consts::PI * t).powf(-d / 2.0) / self.det.sqrt();
        Ok(norm * (-0.5 * self.quad(x) / t).exp())
    }

    /// `∇℘_t(x) = -Σ⁻¹x/t · ℘_t(x)`.
    pub fn grad_eval(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        let p = self.kernel_eval(t, x)?;
        let v = DVector::from_column_slice(&x[..self.dim()]);
        let g = &self.inv * v * (-p / t);
        Ok(g.iter().copied().collect())
    }

    /// Standard deviation of `℘_t` along each axis.
    pub fn axis_sd(&self, t: f64) -> Vec<f64> {
        (0..self.dim())
            .map(|a| (t * self.cov[(a, a)]).sqrt())
            .collect()
    }

    /// `(2π)^{-d/2} det(Σ)^{-1/2}`: `t^{d/2} ‖℘_t‖_∞` for every `t`.
    pub fn peak_constant(&self) -> f64 {
        (2.0 * std::f64::consts::PI).powf(-(self.dim() as f64) / 2.0) / self.det.sqrt()
    }
}

/// Offsets (in nodes) and weights of a discrete convolution kernel.
#[derive(Debug, Clone)]
struct Stencil {
    offsets: Vec<[isize; MAX_DIM]>,
    weights: Vec<f64>,
}

impl Stencil {
    fn build(
        grid: &Grid,
        hk: &HeatKernelF,
        t: f64,
        value: impl Fn(&[f64]) -> Result<f64>,
    ) -> Result<Stencil> {
        let d = grid.dim();
        let sp = grid.spacings();
        let sd = hk.axis_sd(t);
        let reach: Vec<isize> = (0..d)
            .map(|a| (STENCIL_CUTOFF * sd[a] / sp[a]).ceil() as isize)
            .collect();
        let vol = grid.cell_volume();
        let mut offsets = Vec::new();
        let mut weights = Vec::new();
        let mut idx = [0isize; MAX_DIM];
        let total: usize = reach.iter().map(|r| (2 * r + 1) as usize).product();
        for flat in 0..total {
            let mut rem = flat;
            for a in (0..d).rev() {
                let w = (2 * reach[a] + 1) as usize;
                idx[a] = (rem % w) as isize - reach[a];
                rem /= w;
            }
            let x: Vec<f64> = (0..d).map(|a| idx[a] as f64 * sp[a]).collect();
            let w = value(&x)? * vol;
            if w != 0.0 {
                offsets.push(idx);
                weights.push(w);
            }
        }
        Ok(Stencil { offsets, weights })
    }

    fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    fn scale(&mut self, s: f64) {
        self.weights.iter_mut().for_each(|w| *w *= s);
    }

    /// `(K ⋆ f)(x_i) = Σ_j K(x_i - x_j) f(x_j) vol`, with `f = 0` off the grid.
    fn apply(&self, grid: &Grid, f: &[f64]) -> Vec<f64> {
        let d = grid.dim();
        let strides = grid.strides();
        let n: Vec<isize> = grid.axes().iter().map(|a| a.nodes as isize).collect();
        (0..grid.len())
            .into_par_iter()
            .map(|i| {
                let idx = grid.multi_index(i);
                let mut acc = 0.0;
                'offsets: for (off, w) in self.offsets.iter().zip(&self.weights) {
                    let mut j = 0usize;
                    for a in 0..d {
                        let s = idx[a] as isize - off[a];
                        if s < 0 || s >= n[a] {
                            continue 'offsets;
                        }
                        j += s as usize * strides[a];
                    }
                    acc += w * f[j];
                }
                acc
            })
            .collect()
    }
}

/// `℘_t ⋆ f` on the grid, with the discrete stencil normalized to unit mass.
pub fn heat_convolve(hk: &HeatKernelF, grid: &Grid, f: &[f64], t: f64) -> Result<Vec<f64>> {
    check_resolution(hk, grid, t)?;
    let mut st = Stencil::build(grid, hk, t, |x| hk.kernel_eval(t, x))?;
    let s = st.sum();
    st.scale(1.0 / s);
    Ok(st.apply(grid, f))
}

fn check_resolution(hk: &HeatKernelF, grid: &Grid, t: f64) -> Result<()> {
    if hk.dim() != grid.dim() {
        return Err(Error::GridMismatch(format!(
            "kernel dimension {} vs grid dimension {}",
            hk.dim(),
            grid.dim()
        )));
    }
    for (sd, sp) in hk.axis_sd(t).iter().zip(grid.spacings()) {
        if sd / sp < MIN_RESOLUTION {
            return Err(Error::KernelUnderResolved {
                sd: *sd,
                spacing: sp,
                ratio: sd / sp,
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FPState {
    pub density: DensityGrid,
    pub time: f64,
    /// `(t, 𝒢₁(t))` at the states produced so far.
    pub g1_history: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FpOptions {
    /// Rescale to unit mass after every step.
    pub renormalize: bool,
    pub negativity_tolerance: f64,
}

impl Default for FpOptions {
    fn default() -> Self {
        FpOptions {
            renormalize: false,
            negativity_tolerance: NEGATIVITY_TOLERANCE,
        }
    }
}

/// Cached stencils for a fixed grid and step.
#[derive(Debug, Clone)]
pub struct DuhamelStepper {
    grid: Grid,
    dt: f64,
    heat: Stencil,
    grads: Vec<Stencil>,
    options: FpOptions,
}

impl DuhamelStepper {
    pub fn new(hk: &HeatKernelF, grid: &Grid, dt: f64, options: FpOptions) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::Parameter(format!("dt must be positive, got {dt}")));
        }
        check_resolution(hk, grid, dt / 2.0)?;
        let mut heat = Stencil::build(grid, hk, dt, |x| hk.kernel_eval(dt, x))?;
        let s = heat.sum();
        heat.scale(1.0 / s);
        let grads = (0..grid.dim())
            .map(|a| Stencil::build(grid, hk, dt / 2.0, |x| Ok(hk.grad_eval(dt / 2.0, x)?[a])))
            .collect::<Result<Vec<_>>>()?;
        Ok(DuhamelStepper {
            grid: grid.clone(),
            dt,
            heat,
            grads,
            options,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// One step from `f` at time `t` with the drift at the step midpoint.
    pub fn step_values(&self, f: &[f64], drift: &DriftField, t: f64) -> Result<Vec<f64>> {
        self.grid.check_same(&drift.grid)?;
        let d = self.grid.dim();
        let mut out = self.heat.apply(&self.grid, f);
        for a in 0..d {
            let flux: Vec<f64> = f
                .iter()
                .enumerate()
                .map(|(i, v)| drift.drift[i * d + a] * v)
                .collect();
            let conv = self.grads[a].apply(&self.grid, &flux);
            out.iter_mut()
                .zip(&conv)
                .for_each(|(o, c)| *o += self.dt * c);
        }
        let t_new = t + self.dt;
        let min = out.iter().cloned().fold(f64::INFINITY, f64::min);
        if min < -self.options.negativity_tolerance {
            return Err(Error::FpInstability {
                time: t_new,
                min_value: min,
                tolerance: self.options.negativity_tolerance,
            });
        }
        if self.options.renormalize {
            let m = self.grid.integrate(&out);
            if m > 0.0 {
                out.iter_mut().for_each(|v| *v /= m);
            }
        }
        Ok(out)
    }

    pub fn step(&self, state: &FPState, drift: &DriftField) -> Result<FPState> {
        let values = self.step_values(&state.density.values, drift, state.time)?;
        let time = state.time + self.dt;
        let mut density = DensityGrid::from_values(self.grid.clone(), values, time)?;
        density.bandwidth = state.density.bandwidth.clone();
        Ok(FPState {
            density,
            time,
            g1_history: state.g1_history.clone(),
        })
    }
}

/// Single step convenience wrapper; builds the stencils every call.
pub fn duhamel_step(
    hk: &HeatKernelF,
    state: &FPState,
    drift: &DriftField,
    dt: f64,
) -> Result<FPState> {
    DuhamelStepper::new(hk, &state.density.grid, dt, FpOptions::default())?.step(state, drift)
}

/// `℘_t(· - x0)` sampled on the grid.
pub fn initial_density(hk: &HeatKernelF, grid: &Grid, x0: &[f64], t: f64) -> Result<DensityGrid> {
    let d = grid.dim();
    let values = (0..grid.len())
        .map(|i| {
            let c = grid.coords(i);
            let x: Vec<f64> = (0..d).map(|a| c[a] - x0[a]).collect();
            hk.kernel_eval(t, &x)
        })
        .collect::<Result<Vec<_>>>()?;
    DensityGrid::from_values(grid.clone(), values, t)
}

/// Drift at time `t` from a time-sorted schedule: linear in time between
/// neighbours, constant beyond the ends.
pub fn drift_at(schedule: &[DriftField], t: f64) -> Result<DriftField> {
    let first = schedule
        .first()
        .ok_or_else(|| Error::Parameter("empty drift schedule".into()))?;
    if t <= first.time {
        return Ok(first.clone());
    }
    for w in schedule.windows(2) {
        if t <= w[1].time {
            return DriftField::lerp(&w[0], &w[1], t);
        }
    }
    Ok(schedule.last().expect("non-empty").clone())
}

/// Marches from the Dirac mass at `x0` to `horizon` and returns the states at
/// the drift-schedule times (snapped to the step grid).
pub fn solve_fp(
    hk: &HeatKernelF,
    x0: &[f64],
    schedule: &[DriftField],
    horizon: f64,
    dt: f64,
    grid: &Grid,
    options: FpOptions,
) -> Result<Vec<FPState>> {
    if x0.len() != grid.dim() {
        return Err(Error::GridMismatch(format!(
            "initial point has {} coordinates for a {}-dimensional grid",
            x0.len(),
            grid.dim()
        )));
    }
    let steps = (horizon / dt).round() as usize;
    if steps == 0 {
        return Err(Error::Parameter("horizon shorter than one step".into()));
    }
    let mut targets: Vec<usize> = schedule
        .iter()
        .map(|d| ((d.time / dt).round() as usize).max(1))
        .filter(|&s| s <= steps)
        .collect();
    targets.dedup();
    let stepper = DuhamelStepper::new(hk, grid, dt, options)?;
    let mut values = initial_density(hk, grid, x0, dt)?.values;
    let mut out = Vec::new();
    let mut history = Vec::new();
    let mut next = 0;
    for n in 1..=steps {
        if n > 1 {
            let t = (n - 1) as f64 * dt;
            let drift = drift_at(schedule, t + 0.5 * dt)?;
            values = stepper.step_values(&values, &drift, t)?;
        }
        if next < targets.len() && targets[next] == n {
            let t = n as f64 * dt;
            let density = DensityGrid::from_values(grid.clone(), values.clone(), t)?;
            let g1 = moment_g(&drift_at(schedule, t)?, &density, 1.0)?.value;
            history.push((t, g1));
            out.push(FPState {
                density,
                time: t,
                g1_history: history.clone(),
            });
            next += 1;
        }
    }
    Ok(out)
}

/// L¹ norm over interior nodes of `½ Tr(Σ D²k) + div(G k)` by second-order
/// central differences.
pub fn stationary_residual(hk: &HeatKernelF, k: &DensityGrid, drift: &DriftField) -> Result<f64> {
    let grid = &k.grid;
    grid.check_same(&drift.grid)?;
    let d = grid.dim();
    if hk.dim() != d {
        return Err(Error::GridMismatch(
            "kernel and density dimensions differ".into(),
        ));
    }
    let sp = grid.spacings();
    let strides = grid.strides();
    let n: Vec<usize> = grid.axes().iter().map(|a| a.nodes).collect();
    let cov = hk.covariance();
    let f = &k.values;
    let flux = |i: usize, a: usize| drift.drift[i * d + a] * f[i];
    let mut acc = 0.0;
    for i in 0..grid.len() {
        let idx = grid.multi_index(i);
        if (0..d).any(|a| idx[a] == 0 || idx[a] + 1 == n[a]) {
            continue;
        }
        let mut r = 0.0;
        for a in 0..d {
            let (p, m) = (i + strides[a], i - strides[a]);
            r += 0.5 * cov[(a, a)] * (f[p] - 2.0 * f[i] + f[m]) / (sp[a] * sp[a]);
            r += (flux(p, a) - flux(m, a)) / (2.0 * sp[a]);
            for b in 0..a {
                let c = cov[(a, b)];
                if c != 0.0 {
                    let (sa, sb) = (strides[a], strides[b]);
                    let mixed = (f[i + sa + sb] - f[i + sa - sb] - f[i - sa + sb] + f[i - sa - sb])
                        / (4.0 * sp[a] * sp[b]);
                    r += c * mixed;
                }
            }
        }
        acc += grid.weight(i) * r.abs();
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::l1_distance;

    fn unit(d: usize) -> HeatKernelF {
        HeatKernelF::new(DMatrix::identity(d, d)).unwrap()
    }

    #[test]
    fn standard_normal_peak() {
        let v = unit(1).kernel_eval(1.0, &[0.0]).unwrap();
        assert!((v - 0.398_942_280_401_432_7).abs() < 1e-15);
        assert!(matches!(
            unit(1).kernel_eval(0.0, &[0.0]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn parabolic_scaling() {
        let hk = HeatKernelF::new(DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 0.5])).unwrap();
        for &(t, x, y) in &[(0.3, 0.1, -0.4), (2.5, 1.2, 0.7), (0.01, 0.05, 0.02)] {
            let lhs = hk.kernel_eval(t, &[x, y]).unwrap();
            let s = t.sqrt();
            let rhs = hk.kernel_eval(1.0, &[x / s, y / s]).unwrap() / t;
            assert!((lhs - rhs).abs() <= 1e-13 * lhs.abs());
        }
    }

    #[test]
    fn rejects_singular_covariance() {
        assert!(matches!(
            HeatKernelF::new(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0])),
            Err(Error::NotPositiveDefinite)
        ));
    }

    #[test]
    fn kernel_normalized_and_gradient_odd() {
        let hk = unit(1);
        for t in [0.1f64, 1.0, 4.0] {
            let g = Grid::cube(1, 8.0 * t.sqrt(), 2001).unwrap();
            let vals: Vec<f64> = (0..g.len())
                .map(|i| hk.kernel_eval(t, &[g.coords(i)[0]]).unwrap())
                .collect();
            assert!((g.integrate(&vals) - 1.0).abs() < 1e-6);
            let grads: Vec<f64> = (0..g.len())
                .map(|i| hk.grad_eval(t, &[g.coords(i)[0]]).unwrap()[0])
                .collect();
            assert!(g.integrate(&grads).abs() < 1e-10);
        }
    }

    #[test]
    fn semigroup_on_grid() {
        let hk = unit(1);
        let g = Grid::cube(1, 10.0, 1001).unwrap();
        for (t, s) in [(0.1, 0.1), (0.3, 1.0), (1.0, 1.0)] {
            let pt = initial_density(&hk, &g, &[0.0], t).unwrap().values;
            let conv = heat_convolve(&hk, &g, &pt, s).unwrap();
            let exact = initial_density(&hk, &g, &[0.0], t + s).unwrap().values;
            assert!(l1_distance(&g, &conv, &exact) < 1e-5);
        }
    }

    #[test]
    fn under_resolved_kernel_is_rejected() {
        let g = Grid::cube(1, 5.0, 101).unwrap();
        assert!(matches!(
            DuhamelStepper::new(&unit(1), &g, 1e-4, FpOptions::default()),
            Err(Error::KernelUnderResolved { .. })
        ));
    }

    #[test]
    fn pure_diffusion_matches_kernel() {
        let hk = unit(2);
        let g = Grid::cube(2, 5.0, 101).unwrap();
        let zero = DriftField::from_fn(g.clone(), 0.0, vec![1.0, 1.0], 1.0, |_| vec![0.0, 0.0]);
        let x0 = [0.3, -0.2];
        let states = solve_fp(&hk, &x0, &[zero], 1.0, 0.02, &g, FpOptions::default()).unwrap();
        let last = states.last().unwrap();
        assert!((last.time - 1.0).abs() < 1e-12);
        let exact = initial_density(&hk, &g, &x0, 1.0).unwrap();
        assert!(l1_distance(&g, &last.density.values, &exact.values) < 1e-4);
        let peak = last.density.max_value();
        assert!((peak - hk.peak_constant()).abs() < 1e-3 * peak);
    }

    #[test]
    fn step_is_linear_in_density() {
        let hk = unit(1);
        let g = Grid::cube(1, 5.0, 201).unwrap();
        let drift =
            DriftField::from_fn(g.clone(), 1.0, vec![1.0], 0.0, |x| vec![0.3 * x[0] * x[0]]);
        let st = DuhamelStepper::new(&hk, &g, 0.01, FpOptions::default()).unwrap();
        let a = initial_density(&hk, &g, &[0.5], 0.2).unwrap().values;
        let b = initial_density(&hk, &g, &[-0.5], 0.4).unwrap().values;
        let comb: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.25 * x + 0.75 * y).collect();
        let sa = st.step_values(&a, &drift, 0.0).unwrap();
        let sb = st.step_values(&b, &drift, 0.0).unwrap();
        let sc = st.step_values(&comb, &drift, 0.0).unwrap();
        for i in 0..g.len() {
            assert!((sc[i] - (0.25 * sa[i] + 0.75 * sb[i])).abs() < 1e-14);
        }
    }

    #[test]
    fn ou_drift_matches_exact_gaussian() {
        let (sigma2, nu, lam) = (1.0, 1.0, 1.0);
        let hk = HeatKernelF::new(DMatrix::from_element(1, 1, sigma2)).unwrap();
        let g = Grid::cube(1, 4.0, 512).unwrap();
        let drift = DriftField::from_fn(g.clone(), nu, vec![lam], 1.0, |_| vec![0.0]);
        let states = solve_fp(&hk, &[0.0], &[drift], 1.0, 1e-3, &g, FpOptions::default()).unwrap();
        let var = sigma2 * (1.0 - (-2.0 * nu * lam).exp()) / (2.0 * nu * lam);
        let exact = HeatKernelF::new(DMatrix::from_element(1, 1, var)).unwrap();
        let ex = initial_density(&exact, &g, &[0.0], 1.0).unwrap();
        let err = l1_distance(&g, &states[0].density.values, &ex.values);
        assert!(err < 0.02, "L1 error {err}");
        assert!(states[0].density.mass_defect.abs() < 1e-3);
    }

    fn ou_stationary(grid: &Grid) -> (HeatKernelF, DensityGrid, DriftField) {
        // σ² = 2, ν|k|² = 1: stationary variance 1.
        let hk = HeatKernelF::new(DMatrix::from_element(1, 1, 2.0)).unwrap();
        let var = HeatKernelF::new(DMatrix::from_element(1, 1, 1.0)).unwrap();
        let k = initial_density(&var, grid, &[0.0], 1.0).unwrap();
        let drift = DriftField::from_fn(grid.clone(), 1.0, vec![1.0], 0.0, |_| vec![0.0]);
        (hk, k, drift)
    }

    #[test]
    fn stationary_residual_converges_second_order() {
        let mut g = Grid::cube(1, 6.0, 31).unwrap();
        let mut prev = f64::NAN;
        for _ in 0..3 {
            let (hk, k, drift) = ou_stationary(&g);
            let r = stationary_residual(&hk, &k, &drift).unwrap();
            if prev.is_finite() {
                assert!(prev / r >= 3.5, "ratio {}", prev / r);
            }
            prev = r;
            g = g.refined();
        }
    }

    #[test]
    fn heat_kernel_is_not_stationary() {
        let g = Grid::cube(1, 8.0, 1601).unwrap();
        let hk = unit(1);
        let k = initial_density(&hk, &g, &[0.0], 1.0).unwrap();
        let zero = DriftField::from_fn(g.clone(), 0.0, vec![1.0], 0.0, |_| vec![0.0]);
        let r = stationary_residual(&hk, &k, &zero).unwrap();
        // ½ ℘'' = ∂_t ℘ = ℘ (x² - 1) / 2 at t = 1
        let exact: f64 = g.integrate(
            &(0..g.len())
                .map(|i| {
                    let x = g.coords(i)[0];
                    (hk.kernel_eval(1.0, &[x]).unwrap() * (x * x - 1.0) / 2.0).abs()
                })
                .collect::<Vec<_>>(),
        );
        assert!(r > 0.1);
        assert!((r - exact).abs() < 1e-3 * exact);
    }
}
