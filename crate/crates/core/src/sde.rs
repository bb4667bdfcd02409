//! Semi-implicit Euler–Maruyama integration of the Galerkin SDE
//! `du + (νAu + B^N(u)) dt = π_N 𝒮 dW`, ensemble management and the
//! polynomial / exponential moment monitors.
//!
//! One step is `u⁺ = (I + ν dt A)⁻¹ (u - dt B^N(u,u) + ξ)` with `ξ` Gaussian,
//! variance `σ² dt` per real coordinate. `A` is diagonal so the solve is a
//! per-mode division.
//!
//! Each member draws from its own ChaCha8 stream selected by
//! `(seed, member index)`; draws within a stream are consumed in step order,
//! so results do not depend on thread scheduling.

use std::io::{BufRead, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{NoiseSpec, SubspaceF};
use crate::nonlinearity::BilinearWorkspace;
use crate::spectral::{norm_sq, ModeSet, RealCoord, SpectralField};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InitialCondition {
    Zero,
    /// Listed real coordinates set to the given values, everything else zero.
    Coords(Vec<(RealCoord, f64)>),
}

impl InitialCondition {
    pub fn build(&self, modes: &Arc<ModeSet>) -> Result<SpectralField> {
        match self {
            InitialCondition::Zero => Ok(SpectralField::zeros(modes.clone())),
            InitialCondition::Coords(list) => {
                let (coords, values): (Vec<_>, Vec<_>) = list.iter().cloned().unzip();
                crate::spectral::embed_subspace(modes.clone(), &coords, &values)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub cutoff: u32,
    pub nu: f64,
    pub dt: f64,
    pub horizon: f64,
    pub ensemble_size: usize,
    pub seed: u64,
    pub initial: InitialCondition,
    /// Drop the nonlinearity (pure Ornstein–Uhlenbeck dynamics).
    pub linear_only: bool,
    /// Exponents `p` whose moment integrals are accumulated online.
    pub tracked_moments: Vec<f64>,
    /// Exclude blown-up members instead of failing the run.
    pub drop_blowups: bool,
}

impl SimConfig {
    /// Checks the fields and returns non-fatal warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        if self.cutoff < 1 {
            return Err(Error::InvalidCutoff(self.cutoff as i64));
        }
        for (name, v) in [("nu", self.nu), ("dt", self.dt), ("horizon", self.horizon)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Parameter(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.dt > self.horizon {
            return Err(Error::Parameter(format!(
                "dt = {} exceeds the horizon {}",
                self.dt, self.horizon
            )));
        }
        if self.ensemble_size == 0 {
            return Err(Error::Parameter("ensemble_size must be positive".into()));
        }
        if self.tracked_moments.iter().any(|&p| !(p >= 1.0)) {
            return Err(Error::Parameter(
                "tracked moment exponents must be >= 1".into(),
            ));
        }
        let mut warnings = Vec::new();
        let stiffness = self.dt * self.nu * (self.cutoff as f64).powi(2);
        if stiffness > 2.0 {
            warnings.push(format!(
                "dt·ν·N² = {stiffness:.3} exceeds 2: an explicit linear step would be unstable \
                 (the semi-implicit scheme used here is not affected)"
            ));
        }
        Ok(warnings)
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    fn moments(&self) -> Vec<f64> {
        let mut p = self.tracked_moments.clone();
        if !p.contains(&1.0) {
            p.insert(0, 1.0);
        }
        p
    }
}

/// One semi-implicit Euler–Maruyama step. `ws = None` is the linear-only
/// variant. Fails with [`Error::BlowUp`] (member 0) when the result is not
/// finite.
pub fn step(
    u: &SpectralField,
    dt: f64,
    noise_increment: &SpectralField,
    nu: f64,
    ws: Option<&BilinearWorkspace>,
    step_index: usize,
) -> Result<SpectralField> {
    u.check_same_modes(noise_increment)?;
    let mut next = u.clone();
    if let Some(ws) = ws {
        let b = ws.bilinear(u, u)?;
        next.axpy(-dt, &b)?;
    }
    next.axpy(1.0, noise_increment)?;
    let modes = u.mode_set().clone();
    for (i, a) in next.coeffs_mut().iter_mut().enumerate() {
        let k2 = norm_sq(&modes.wavevectors()[i / 2]) as f64;
        *a /= 1.0 + nu * dt * k2;
    }
    if !next.is_finite() {
        return Err(Error::BlowUp {
            member: 0,
            step: step_index,
        });
    }
    Ok(next)
}

/// Ensemble state at one snapshot time, stored column-wise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSnapshot {
    pub time: f64,
    pub step: usize,
    pub dim: usize,
    pub nu: f64,
    /// `|k|²` for each axis of `F`.
    pub stokes: Vec<f64>,
    /// `π_F u_j`, row-major `members × dim`.
    pub coords: Vec<f64>,
    /// `π_F B^N(u_j, u_j)`, row-major `members × dim`.
    pub nonlinear: Vec<f64>,
    pub h_norm: Vec<f64>,
    pub v_norm: Vec<f64>,
    /// Running `sup_{[0,t]} ‖u‖_H²` per member (empty when loaded from CSV).
    pub sup_h2: Vec<f64>,
    /// Running `∫₀^t ‖u‖_V² ds` per member.
    pub int_v2: Vec<f64>,
    pub tracked_p: Vec<f64>,
    /// Running `∫₀^t ‖u‖_V² ‖u‖_H^{2p-2} ds`, row-major `members × tracked_p`.
    pub int_weighted: Vec<f64>,
}

impl EnsembleSnapshot {
    pub fn len(&self) -> usize {
        self.h_norm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h_norm.is_empty()
    }

    pub fn point(&self, j: usize) -> &[f64] {
        &self.coords[j * self.dim..(j + 1) * self.dim]
    }

    pub fn nonlinear_at(&self, j: usize) -> &[f64] {
        &self.nonlinear[j * self.dim..(j + 1) * self.dim]
    }

    /// Sample of this snapshot restricted to the given members.
    pub fn subset(&self, members: std::ops::Range<usize>) -> EnsembleSnapshot {
        let d = self.dim;
        let np = self.tracked_p.len();
        let slice = |v: &Vec<f64>, w: usize| -> Vec<f64> {
            if v.is_empty() {
                Vec::new()
            } else {
                v[members.start * w..members.end * w].to_vec()
            }
        };
        EnsembleSnapshot {
            time: self.time,
            step: self.step,
            dim: d,
            nu: self.nu,
            stokes: self.stokes.clone(),
            coords: slice(&self.coords, d),
            nonlinear: slice(&self.nonlinear, d),
            h_norm: slice(&self.h_norm, 1),
            v_norm: slice(&self.v_norm, 1),
            sup_h2: slice(&self.sup_h2, 1),
            int_v2: slice(&self.int_v2, 1),
            tracked_p: self.tracked_p.clone(),
            int_weighted: slice(&self.int_weighted, np),
        }
    }

    /// Pools several snapshots into one sample (time of the last one).
    pub fn pool(snaps: &[EnsembleSnapshot]) -> Result<EnsembleSnapshot> {
        let first = snaps
            .first()
            .ok_or_else(|| Error::Parameter("cannot pool zero snapshots".into()))?;
        let mut out = first.clone();
        for s in &snaps[1..] {
            if s.dim != out.dim {
                return Err(Error::Parameter(
                    "pooled snapshots differ in dimension".into(),
                ));
            }
            out.coords.extend_from_slice(&s.coords);
            out.nonlinear.extend_from_slice(&s.nonlinear);
            out.h_norm.extend_from_slice(&s.h_norm);
            out.v_norm.extend_from_slice(&s.v_norm);
            out.sup_h2.extend_from_slice(&s.sup_h2);
            out.int_v2.extend_from_slice(&s.int_v2);
            out.int_weighted.extend_from_slice(&s.int_weighted);
            out.time = s.time;
            out.step = s.step;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct Ensemble {
    pub snapshots: Vec<EnsembleSnapshot>,
    pub dropped_members: Vec<usize>,
    pub warnings: Vec<String>,
}

struct MemberRecord {
    coords: Vec<f64>,
    nonlinear: Vec<f64>,
    h: f64,
    v: f64,
    sup_h2: f64,
    int_v2: f64,
    int_weighted: Vec<f64>,
}

struct Integrator {
    modes: Arc<ModeSet>,
    ws: Option<BilinearWorkspace>,
    quad_ws: BilinearWorkspace,
    damping: Vec<f64>,
    k2: Vec<f64>,
    noise_scale: Vec<f64>,
    f_real: Vec<(usize, usize, usize)>,
    dt: f64,
    moments: Vec<f64>,
}

impl Integrator {
    fn new(cfg: &SimConfig, noise: &NoiseSpec, f: &SubspaceF) -> Result<Self> {
        let modes = noise.mode_set().clone();
        if modes.cutoff() != cfg.cutoff {
            return Err(Error::ModeSetMismatch {
                left: modes.cutoff(),
                right: cfg.cutoff,
            });
        }
        let quad_ws = BilinearWorkspace::new(modes.clone());
        let ws = if cfg.linear_only || quad_ws.is_trivial() {
            None
        } else {
            Some(quad_ws.clone())
        };
        let k2: Vec<f64> = (0..modes.num_modes())
            .map(|i| norm_sq(&modes.wavevectors()[i / 2]) as f64)
            .collect();
        let damping = k2
            .iter()
            .map(|k| 1.0 / (1.0 + cfg.nu * cfg.dt * k))
            .collect();
        let sqrt_dt = cfg.dt.sqrt();
        let noise_scale = noise.real_sigmas().iter().map(|s| s * sqrt_dt).collect();
        // (wavevector, conjugate, pol offset) per F axis, plus part in the tuple sign
        let mut f_real = Vec::new();
        for c in f.coords() {
            let w = modes
                .wavevector_index(&c.k)
                .ok_or(Error::SubspaceMismatch {
                    k: c.k,
                    pol: c.pol,
                    cutoff: modes.cutoff(),
                })?;
            let part = match c.part {
                crate::spectral::Part::Cos => 0,
                crate::spectral::Part::Sin => 1,
            };
            f_real.push((w, 2 * (c.pol as usize - 1) + part, modes.conjugate_of(w)));
        }
        Ok(Integrator {
            modes,
            ws,
            quad_ws,
            damping,
            k2,
            noise_scale,
            f_real,
            dt: cfg.dt,
            moments: cfg.moments(),
        })
    }

    fn project(&self, coeffs: &[Complex64], out: &mut Vec<f64>) {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        out.clear();
        for &(w, slot, wc) in &self.f_real {
            let p = slot / 2;
            let a = coeffs[2 * w + p];
            let b = coeffs[2 * wc + p];
            out.push(if slot % 2 == 0 {
                (a.re + b.re) * s
            } else {
                (b.im - a.im) * s
            });
        }
    }

    fn norms(&self, coeffs: &[Complex64]) -> (f64, f64) {
        let mut h = 0.0;
        let mut v = 0.0;
        for (a, k) in coeffs.iter().zip(&self.k2) {
            let n = a.norm_sqr();
            h += n;
            v += k * n;
        }
        (h, v)
    }

    fn record(
        &self,
        u: &SpectralField,
        vel: &mut Vec<[Complex64; 3]>,
        bbuf: &mut [Complex64],
        tracker: &Tracker,
    ) -> MemberRecord {
        let mut coords = Vec::with_capacity(self.f_real.len());
        self.project(u.coeffs(), &mut coords);
        self.quad_ws.quadratic_into(u, vel, bbuf);
        let mut nonlinear = Vec::with_capacity(self.f_real.len());
        self.project(bbuf, &mut nonlinear);
        let (h2, v2) = self.norms(u.coeffs());
        MemberRecord {
            coords,
            nonlinear,
            h: h2.sqrt(),
            v: v2.sqrt(),
            sup_h2: tracker.sup_h2,
            int_v2: tracker.int_v2,
            int_weighted: tracker.int_weighted.clone(),
        }
    }

    fn run_member(
        &self,
        cfg: &SimConfig,
        u0: &SpectralField,
        snapshot_steps: &[usize],
        member: usize,
    ) -> Result<Vec<MemberRecord>> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(member as u64);
        let nsteps = snapshot_steps.last().copied().unwrap_or(0);
        let mut u = u0.clone();
        let mut noise = SpectralField::zeros(self.modes.clone());
        let mut real = vec![0.0; self.modes.real_dim()];
        let mut bbuf = vec![Complex64::new(0.0, 0.0); self.modes.num_modes()];
        let mut vel = Vec::new();
        let (h2, v2) = self.norms(u.coeffs());
        let mut tracker = Tracker::new(h2, v2, &self.moments);
        let mut out = Vec::with_capacity(snapshot_steps.len());
        let mut next_snap = 0;
        while next_snap < snapshot_steps.len() && snapshot_steps[next_snap] == 0 {
            out.push(self.record(&u, &mut vel, &mut bbuf, &tracker));
            next_snap += 1;
        }
        let all_zero_noise = self.noise_scale.iter().all(|&s| s == 0.0);
        for n in 1..=nsteps {
            for (r, s) in real.iter_mut().zip(&self.noise_scale) {
                let z: f64 = StandardNormal.sample(&mut rng);
                *r = if all_zero_noise { 0.0 } else { s * z };
            }
            noise.set_from_real(&real);
            if let Some(ws) = &self.ws {
                ws.quadratic_into(&u, &mut vel, &mut bbuf);
            }
            let dt = self.dt;
            let nonlinear = self.ws.is_some();
            for (i, a) in u.coeffs_mut().iter_mut().enumerate() {
                let mut x = *a + noise.coeffs()[i];
                if nonlinear {
                    x -= bbuf[i] * dt;
                }
                *a = x * self.damping[i];
            }
            if !u.is_finite() {
                return Err(Error::BlowUp { member, step: n });
            }
            let (h2, v2) = self.norms(u.coeffs());
            tracker.advance(h2, v2, dt, &self.moments);
            while next_snap < snapshot_steps.len() && snapshot_steps[next_snap] == n {
                out.push(self.record(&u, &mut vel, &mut bbuf, &tracker));
                next_snap += 1;
            }
        }
        Ok(out)
    }
}

struct Tracker {
    sup_h2: f64,
    int_v2: f64,
    int_weighted: Vec<f64>,
    last_h2: f64,
    last_v2: f64,
}

impl Tracker {
    fn new(h2: f64, v2: f64, moments: &[f64]) -> Self {
        Tracker {
            sup_h2: h2,
            int_v2: 0.0,
            int_weighted: vec![0.0; moments.len()],
            last_h2: h2,
            last_v2: v2,
        }
    }

    fn advance(&mut self, h2: f64, v2: f64, dt: f64, moments: &[f64]) {
        self.sup_h2 = self.sup_h2.max(h2);
        self.int_v2 += 0.5 * dt * (self.last_v2 + v2);
        for (acc, &p) in self.int_weighted.iter_mut().zip(moments) {
            let g0 = self.last_v2 * self.last_h2.powf(p - 1.0);
            let g1 = v2 * h2.powf(p - 1.0);
            *acc += 0.5 * dt * (g0 + g1);
        }
        self.last_h2 = h2;
        self.last_v2 = v2;
    }
}

/// Snaps requested times to the step grid.
pub fn snapshot_steps(cfg: &SimConfig, times: &[f64]) -> Result<Vec<usize>> {
    let total = cfg.steps();
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        if !(t >= 0.0) || t > cfg.horizon + 0.5 * cfg.dt {
            return Err(Error::Parameter(format!(
                "snapshot time {t} outside [0, {}]",
                cfg.horizon
            )));
        }
        let s = ((t / cfg.dt).round() as usize).min(total);
        if out.last().is_some_and(|&prev| s < prev) {
            return Err(Error::Parameter("snapshot times must be sorted".into()));
        }
        out.push(s);
    }
    Ok(out)
}

pub fn simulate_ensemble(
    cfg: &SimConfig,
    noise: &NoiseSpec,
    f: &SubspaceF,
    snapshot_times: &[f64],
) -> Result<Ensemble> {
    let warnings = cfg.validate()?;
    let integrator = Integrator::new(cfg, noise, f)?;
    let steps = snapshot_steps(cfg, snapshot_times)?;
    let u0 = cfg.initial.build(&integrator.modes)?;

    let results: Vec<Result<Vec<MemberRecord>>> = (0..cfg.ensemble_size)
        .into_par_iter()
        .map(|m| integrator.run_member(cfg, &u0, &steps, m))
        .collect();

    let mut kept = Vec::with_capacity(results.len());
    let mut dropped = Vec::new();
    for (m, r) in results.into_iter().enumerate() {
        match r {
            Ok(rec) => kept.push(rec),
            Err(e @ Error::BlowUp { .. }) => {
                if cfg.drop_blowups {
                    dropped.push(m);
                } else {
                    return Err(e);
                }
            }
            Err(e) => return Err(e),
        }
    }

    let d = f.dim();
    let moments = cfg.moments();
    let snapshots = steps
        .iter()
        .enumerate()
        .map(|(si, &s)| {
            let n = kept.len();
            let mut snap = EnsembleSnapshot {
                time: s as f64 * cfg.dt,
                step: s,
                dim: d,
                nu: cfg.nu,
                stokes: f.stokes_diagonal(),
                coords: Vec::with_capacity(n * d),
                nonlinear: Vec::with_capacity(n * d),
                h_norm: Vec::with_capacity(n),
                v_norm: Vec::with_capacity(n),
                sup_h2: Vec::with_capacity(n),
                int_v2: Vec::with_capacity(n),
                tracked_p: moments.clone(),
                int_weighted: Vec::with_capacity(n * moments.len()),
            };
            for rec in &kept {
                let r = &rec[si];
                snap.coords.extend_from_slice(&r.coords);
                snap.nonlinear.extend_from_slice(&r.nonlinear);
                snap.h_norm.push(r.h);
                snap.v_norm.push(r.v);
                snap.sup_h2.push(r.sup_h2);
                snap.int_v2.push(r.int_v2);
                snap.int_weighted.extend_from_slice(&r.int_weighted);
            }
            snap
        })
        .collect();
    let mut warnings = warnings;
    if !dropped.is_empty() {
        warnings.push(format!(
            "{} member(s) blew up and were excluded from statistics",
            dropped.len()
        ));
    }
    Ok(Ensemble {
        snapshots,
        dropped_members: dropped,
        warnings,
    })
}

/// Sum in a fixed binary-tree order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n if n <= 8 => values.iter().sum(),
        n => {
            let (a, b) = values.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonitorEstimate {
    pub value: f64,
    pub std_error: f64,
}

pub fn mean_and_std_error(values: &[f64]) -> MonitorEstimate {
    let n = values.len() as f64;
    let mean = pairwise_sum(values) / n;
    let dev: Vec<f64> = values.iter().map(|v| (v - mean).powi(2)).collect();
    let var = if values.len() > 1 {
        pairwise_sum(&dev) / (n - 1.0)
    } else {
        0.0
    };
    MonitorEstimate {
        value: mean,
        std_error: (var / n).sqrt(),
    }
}

/// Monte Carlo estimate of `E[sup_{[0,t]} ‖u‖_H^{2p} + ν ∫₀^t ‖u‖_V² ‖u‖_H^{2p-2}]`.
pub fn moment_monitor(s: &EnsembleSnapshot, p: f64) -> Result<MonitorEstimate> {
    let pi = s
        .tracked_p
        .iter()
        .position(|&q| q == p)
        .ok_or(Error::UntrackedMoment(p))?;
    if s.sup_h2.is_empty() {
        return Err(Error::UntrackedMoment(p));
    }
    let np = s.tracked_p.len();
    let values: Vec<f64> = (0..s.len())
        .map(|j| s.sup_h2[j].powf(p) + s.nu * s.int_weighted[j * np + pi])
        .collect();
    Ok(mean_and_std_error(&values))
}

/// The two parts of the `p`-moment separately: the running supremum and the
/// dissipation integral.
pub fn moment_parts(s: &EnsembleSnapshot, p: f64) -> Result<(MonitorEstimate, MonitorEstimate)> {
    let pi = s
        .tracked_p
        .iter()
        .position(|&q| q == p)
        .ok_or(Error::UntrackedMoment(p))?;
    let np = s.tracked_p.len();
    let sup: Vec<f64> = s.sup_h2.iter().map(|v| v.powf(p)).collect();
    let int: Vec<f64> = (0..s.len())
        .map(|j| s.nu * s.int_weighted[j * np + pi])
        .collect();
    Ok((mean_and_std_error(&sup), mean_and_std_error(&int)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpMonitorEstimate {
    pub value: f64,
    pub std_error: f64,
    /// Share of the sum carried by the largest 1% of members.
    pub top_share: f64,
    /// Set when fewer than 1% of members carry more than half of the sum.
    pub heavy_tail: bool,
}

/// Monte Carlo estimate of `E[exp(λ sup ‖u‖_H² + νλ ∫ ‖u‖_V²)]`.
pub fn exp_moment_monitor(s: &EnsembleSnapshot, lambda: f64) -> Result<ExpMonitorEstimate> {
    if s.sup_h2.is_empty() {
        return Err(Error::UntrackedMoment(1.0));
    }
    if lambda == 0.0 {
        return Ok(ExpMonitorEstimate {
            value: 1.0,
            std_error: 0.0,
            top_share: (s.len() as f64 * 0.01).ceil() / s.len() as f64,
            heavy_tail: false,
        });
    }
    let values: Vec<f64> = (0..s.len())
        .map(|j| (lambda * s.sup_h2[j] + s.nu * lambda * s.int_v2[j]).exp())
        .collect();
    let est = mean_and_std_error(&values);
    let mut sorted = values.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let top = ((values.len() as f64) * 0.01).ceil() as usize;
    let total = pairwise_sum(&values);
    let top_share = pairwise_sum(&sorted[..top.max(1)]) / total;
    Ok(ExpMonitorEstimate {
        value: est.value,
        std_error: est.std_error,
        top_share,
        heavy_tail: top_share > 0.5 || !est.value.is_finite(),
    })
}

/// Writes snapshots as CSV with columns
/// `t, member, x_1..x_d, b_1..b_d, h_norm, v_norm`.
pub fn write_snapshots_csv(path: &Path, snaps: &[EnsembleSnapshot]) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    let d = snaps.first().map_or(0, |s| s.dim);
    let mut header = vec!["t".to_string(), "member".to_string()];
    header.extend((1..=d).map(|i| format!("x_{i}")));
    header.extend((1..=d).map(|i| format!("b_{i}")));
    header.push("h_norm".into());
    header.push("v_norm".into());
    writeln!(w, "{}", header.join(","))?;
    for s in snaps {
        for j in 0..s.len() {
            let mut row = vec![format!("{}", s.time), j.to_string()];
            row.extend(s.point(j).iter().map(|v| format!("{v}")));
            row.extend(s.nonlinear_at(j).iter().map(|v| format!("{v}")));
            row.push(format!("{}", s.h_norm[j]));
            row.push(format!("{}", s.v_norm[j]));
            writeln!(w, "{}", row.join(","))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads the CSV written by [`write_snapshots_csv`]. Monitor accumulators are
/// not part of the file and come back empty.
pub fn read_snapshots_csv(path: &Path, nu: f64, stokes: &[f64]) -> Result<Vec<EnsembleSnapshot>> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut lines = file.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parameter("empty snapshot file".into()))??;
    let cols = header.split(',').count();
    if cols < 4 || (cols - 4) % 2 != 0 {
        return Err(Error::Parameter(format!(
            "malformed snapshot header `{header}`"
        )));
    }
    let d = (cols - 4) / 2;
    let mut out: Vec<EnsembleSnapshot> = Vec::new();
    for (ln, line) in lines.enumerate() {
        let line = line?;
        let vals: Vec<f64> = line
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parameter(format!("snapshot line {}: {e}", ln + 2)))?;
        if vals.len() != cols {
            return Err(Error::Parameter(format!(
                "snapshot line {} has wrong width",
                ln + 2
            )));
        }
        let t = vals[0];
        if out.last().is_none_or(|s| s.time != t) {
            out.push(EnsembleSnapshot {
                time: t,
                step: 0,
                dim: d,
                nu,
                stokes: stokes.to_vec(),
                coords: Vec::new(),
                nonlinear: Vec::new(),
                h_norm: Vec::new(),
                v_norm: Vec::new(),
                sup_h2: Vec::new(),
                int_v2: Vec::new(),
                tracked_p: Vec::new(),
                int_weighted: Vec::new(),
            });
        }
        let s = out.last_mut().expect("pushed above");
        s.coords.extend_from_slice(&vals[2..2 + d]);
        s.nonlinear.extend_from_slice(&vals[2 + d..2 + 2 * d]);
        s.h_norm.push(vals[2 + 2 * d]);
        s.v_norm.push(vals[3 + 2 * d]);
    }
    Ok(out)
}
