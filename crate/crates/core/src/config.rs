//! Flat `key = value` run configuration, presets, and the assumption checks
//! performed at load time.
//!
//! Lines are `key = value`; `#` starts a comment; blank lines are ignored.
//! Unknown or repeated keys are rejected. List values are whitespace
//! separated items, numeric lists are comma separated.

use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::density::BandwidthRule;
use crate::error::{Error, Result};
use crate::noise::{check_f_nondegenerate, hypoellipticity_report, NoiseSpec, SubspaceF};
use crate::sde::{InitialCondition, SimConfig};
use crate::spectral::{ModeSet, Part, RealCoord, WaveMode, Wavevector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    PowerLaw,
    SingleLine,
    Zero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub cutoff: u32,
    pub nu: f64,
    pub dt: f64,
    pub horizon: f64,
    pub ensemble_size: usize,
    pub seed: u64,
    pub initial: InitialCondition,
    pub linear_only: bool,
    pub drop_blowups: bool,
    pub noise: NoiseKind,
    pub noise_decay: f64,
    /// Multiplies the base amplitudes before per-shell and per-mode overrides.
    pub noise_amplitude: f64,
    pub noise_line: Wavevector,
    pub noise_shells: Vec<(i64, f64)>,
    pub noise_modes: Vec<(WaveMode, f64)>,
    pub subspace: Vec<RealCoord>,
    pub snapshot_times: Vec<f64>,
    pub kde_nodes: usize,
    /// Half-width of the density grids in sample standard deviations.
    pub kde_extent: f64,
    pub bandwidth: BandwidthRule,
    pub fp: bool,
    pub fp_dt: f64,
    pub fp_nodes: usize,
    pub fp_half_width: f64,
    pub fp_renormalize: bool,
    pub alphas: Vec<f64>,
    pub moment_ps: Vec<f64>,
    pub exp_lambda: f64,
    /// Lower end of every time-sup statistic; `10·dt` when unset.
    pub t_min: Option<f64>,
    /// Snapshots with `t ≥ stationary_tail · horizon` are pooled for the
    /// stationary residual.
    pub stationary_tail: f64,
    pub stationary_bandwidth: BandwidthRule,
    pub output_dir: String,
    pub force: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            cutoff: 1,
            nu: 1.0,
            dt: 1e-3,
            horizon: 1.0,
            ensemble_size: 10_000,
            seed: 1,
            initial: InitialCondition::Zero,
            linear_only: false,
            drop_blowups: false,
            noise: NoiseKind::PowerLaw,
            noise_decay: 2.0,
            noise_amplitude: 1.0,
            noise_line: [1, 0, 0],
            noise_shells: Vec::new(),
            noise_modes: Vec::new(),
            subspace: vec![RealCoord {
                k: [1, 0, 0],
                pol: 1,
                part: Part::Cos,
            }],
            snapshot_times: vec![0.25, 0.5, 1.0],
            kde_nodes: 201,
            kde_extent: 6.0,
            bandwidth: BandwidthRule::Silverman,
            fp: true,
            fp_dt: 0.005,
            fp_nodes: 256,
            fp_half_width: 5.0,
            fp_renormalize: false,
            alphas: vec![0.25, 0.5, 0.75],
            moment_ps: vec![1.0, 2.0],
            exp_lambda: 0.05,
            t_min: None,
            stationary_tail: 0.5,
            stationary_bandwidth: BandwidthRule::Silverman,
            output_dir: "nsfp-run".into(),
            force: false,
        }
    }
}

pub const KEYS: &[&str] = &[
    "cutoff",
    "nu",
    "dt",
    "horizon",
    "ensemble_size",
    "seed",
    "initial",
    "linear_only",
    "drop_blowups",
    "noise",
    "noise_decay",
    "noise_amplitude",
    "noise_line",
    "noise_shells",
    "noise_modes",
    "subspace",
    "snapshot_times",
    "kde_nodes",
    "kde_extent",
    "bandwidth",
    "fp",
    "fp_dt",
    "fp_nodes",
    "fp_half_width",
    "fp_renormalize",
    "alphas",
    "moment_ps",
    "exp_lambda",
    "t_min",
    "stationary_tail",
    "stationary_bandwidth",
    "output_dir",
    "force",
];

/// Keys that do not influence any computed number.
const PLUMBING_KEYS: &[&str] = &["output_dir", "force"];

pub const PRESETS: &[&str] = &["ou-linear", "n1-pair", "n2-d1", "degenerate-line"];

fn parse_f64(v: &str) -> Result<f64> {
    v.parse::<f64>()
        .map_err(|_| Error::Parameter(format!("expected a number, got `{v}`")))
}

fn parse_int<T: std::str::FromStr>(v: &str) -> Result<T> {
    v.parse::<T>()
        .map_err(|_| Error::Parameter(format!("expected an integer, got `{v}`")))
}

fn parse_bool(v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Parameter(format!(
            "expected true or false, got `{v}`"
        ))),
    }
}

fn parse_f64_list(v: &str) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| parse_f64(s.trim())).collect()
}

fn parse_wavevector(v: &str) -> Result<Wavevector> {
    let parts: Vec<&str> = v.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(Error::Parameter(format!("expected k1,k2,k3, got `{v}`")));
    }
    let mut k = [0i32; 3];
    for (slot, p) in k.iter_mut().zip(parts) {
        *slot = parse_int(p)?;
    }
    Ok(k)
}

fn parse_mode(v: &str) -> Result<WaveMode> {
    let (k, pol) = v
        .split_once(':')
        .ok_or_else(|| Error::Parameter(format!("expected k1,k2,k3:pol, got `{v}`")))?;
    WaveMode::new(parse_wavevector(k)?, parse_int(pol)?)
}

fn parse_coord(v: &str) -> Result<RealCoord> {
    let mut it = v.split(':');
    let (k, pol, part) = match (it.next(), it.next(), it.next(), it.next()) {
        (Some(k), Some(pol), Some(part), None) => (k, pol, part),
        _ => {
            return Err(Error::Parameter(format!(
                "expected k1,k2,k3:pol:cos|sin, got `{v}`"
            )))
        }
    };
    let part = match part {
        "cos" => Part::Cos,
        "sin" => Part::Sin,
        other => {
            return Err(Error::Parameter(format!(
                "expected cos or sin, got `{other}`"
            )))
        }
    };
    let k = parse_wavevector(k)?;
    let c = RealCoord::new(k, parse_int(pol)?, part)?;
    if c.k != k {
        return Err(Error::Parameter(format!(
            "wavevector {k:?} is not sign-canonical; use {:?}",
            c.k
        )));
    }
    Ok(c)
}

fn split_assignment(item: &str) -> Result<(&str, f64)> {
    let (lhs, rhs) = item
        .rsplit_once('=')
        .ok_or_else(|| Error::Parameter(format!("expected item=value, got `{item}`")))?;
    Ok((lhs, parse_f64(rhs)?))
}

fn parse_bandwidth(v: &str) -> Result<BandwidthRule> {
    if v == "silverman" {
        return Ok(BandwidthRule::Silverman);
    }
    let rule = match v.split_once(':') {
        Some(("scaled", x)) => BandwidthRule::Scaled(parse_f64(x)?),
        Some(("fixed", x)) => BandwidthRule::Fixed(parse_f64(x)?),
        _ => {
            return Err(Error::Parameter(format!(
                "expected silverman, scaled:<factor> or fixed:<h>, got `{v}`"
            )))
        }
    };
    match rule {
        BandwidthRule::Scaled(x) | BandwidthRule::Fixed(x) if !(x > 0.0 && x.is_finite()) => Err(
            Error::Parameter(format!("bandwidth parameter must be positive, got {x}")),
        ),
        r => Ok(r),
    }
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

fn fmt_k(k: &Wavevector) -> String {
    format!("{},{},{}", k[0], k[1], k[2])
}

fn fmt_coord(c: &RealCoord) -> String {
    format!("{}:{}:{}", fmt_k(&c.k), c.pol, c.part)
}

fn fmt_bandwidth(b: &BandwidthRule) -> String {
    match b {
        BandwidthRule::Silverman => "silverman".into(),
        BandwidthRule::Scaled(x) => format!("scaled:{x}"),
        BandwidthRule::Fixed(x) => format!("fixed:{x}"),
        BandwidthRule::PerAxis(v) => format!("per_axis:{}", fmt_list(v)),
    }
}

impl RunConfig {
    /// Parses config text on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    /// Applies the keys present in config text on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body.split_once('=').ok_or(Error::Config {
                line,
                message: format!("expected `key = value`, got `{body}`"),
            })?;
            let key = key.trim();
            if !seen.insert(key.to_string()) && KEYS.contains(&key) {
                return Err(Error::Config {
                    line,
                    message: format!("key `{key}` given twice"),
                });
            }
            self.set(key, value.trim()).map_err(|e| Error::Config {
                line,
                message: match e {
                    Error::Parameter(m) => m,
                    other => other.to_string(),
                },
            })?;
        }
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        RunConfig::parse(&std::fs::read_to_string(path)?)
    }

    pub fn preset(name: &str) -> Result<Self> {
        let d = RunConfig::default();
        let cos = |k: Wavevector| RealCoord {
            k,
            pol: 1,
            part: Part::Cos,
        };
        let sin = |k: Wavevector| RealCoord {
            k,
            pol: 1,
            part: Part::Sin,
        };
        let times = vec![0.01, 0.02, 0.05, 0.1, 0.25, 0.5, 1.0];
        let cfg = match name {
            "ou-linear" => RunConfig {
                linear_only: true,
                noise_amplitude: 5.0,
                snapshot_times: times,
                fp_dt: 1e-3,
                fp_nodes: 512,
                fp_half_width: 20.0,
                output_dir: "ou-linear".into(),
                ..d
            },
            "n1-pair" => RunConfig {
                ensemble_size: 100_000,
                seed: 7,
                subspace: vec![cos([1, 0, 0]), sin([1, 0, 0])],
                snapshot_times: times,
                kde_nodes: 81,
                fp_dt: 0.0125,
                fp_nodes: 81,
                fp_half_width: 4.0,
                output_dir: "n1-pair".into(),
                ..d
            },
            "n2-d1" => RunConfig {
                cutoff: 2,
                seed: 11,
                initial: InitialCondition::Coords(vec![(cos([1, 0, 0]), 0.5)]),
                snapshot_times: times,
                output_dir: "n2-d1".into(),
                ..d
            },
            "degenerate-line" => RunConfig {
                cutoff: 2,
                ensemble_size: 1000,
                noise: NoiseKind::SingleLine,
                output_dir: "degenerate-line".into(),
                ..d
            },
            other => {
                return Err(Error::Parameter(format!(
                    "unknown preset `{other}`; available: {}",
                    PRESETS.join(", ")
                )))
            }
        };
        Ok(cfg)
    }

    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "cutoff" => self.cutoff = parse_int(v)?,
            "nu" => self.nu = parse_f64(v)?,
            "dt" => self.dt = parse_f64(v)?,
            "horizon" => self.horizon = parse_f64(v)?,
            "ensemble_size" => self.ensemble_size = parse_int(v)?,
            "seed" => self.seed = parse_int(v)?,
            "initial" => {
                self.initial = if v == "zero" {
                    InitialCondition::Zero
                } else {
                    let list = v
                        .split_whitespace()
                        .map(|item| {
                            let (c, x) = split_assignment(item)?;
                            Ok((parse_coord(c)?, x))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    InitialCondition::Coords(list)
                }
            }
            "linear_only" => self.linear_only = parse_bool(v)?,
            "drop_blowups" => self.drop_blowups = parse_bool(v)?,
            "noise" => {
                self.noise = match v {
                    "power_law" => NoiseKind::PowerLaw,
                    "single_line" => NoiseKind::SingleLine,
                    "zero" => NoiseKind::Zero,
                    _ => {
                        return Err(Error::Parameter(format!(
                            "expected power_law, single_line or zero, got `{v}`"
                        )))
                    }
                }
            }
            "noise_decay" => self.noise_decay = parse_f64(v)?,
            "noise_amplitude" => self.noise_amplitude = parse_f64(v)?,
            "noise_line" => self.noise_line = parse_wavevector(v)?,
            "noise_shells" => {
                self.noise_shells = v
                    .split_whitespace()
                    .map(|item| {
                        let (s, x) = split_assignment(item)?;
                        Ok((parse_int(s)?, x))
                    })
                    .collect::<Result<_>>()?
            }
            "noise_modes" => {
                self.noise_modes = v
                    .split_whitespace()
                    .map(|item| {
                        let (m, x) = split_assignment(item)?;
                        Ok((parse_mode(m)?, x))
                    })
                    .collect::<Result<_>>()?
            }
            "subspace" => {
                self.subspace = v
                    .split_whitespace()
                    .map(parse_coord)
                    .collect::<Result<_>>()?
            }
            "snapshot_times" => self.snapshot_times = parse_f64_list(v)?,
            "kde_nodes" => self.kde_nodes = parse_int(v)?,
            "kde_extent" => self.kde_extent = parse_f64(v)?,
            "bandwidth" => self.bandwidth = parse_bandwidth(v)?,
            "fp" => self.fp = parse_bool(v)?,
            "fp_dt" => self.fp_dt = parse_f64(v)?,
            "fp_nodes" => self.fp_nodes = parse_int(v)?,
            "fp_half_width" => self.fp_half_width = parse_f64(v)?,
            "fp_renormalize" => self.fp_renormalize = parse_bool(v)?,
            "alphas" => self.alphas = parse_f64_list(v)?,
            "moment_ps" => self.moment_ps = parse_f64_list(v)?,
            "exp_lambda" => self.exp_lambda = parse_f64(v)?,
            "t_min" => {
                self.t_min = if v == "auto" {
                    None
                } else {
                    Some(parse_f64(v)?)
                }
            }
            "stationary_tail" => self.stationary_tail = parse_f64(v)?,
            "stationary_bandwidth" => self.stationary_bandwidth = parse_bandwidth(v)?,
            "output_dir" => self.output_dir = v.to_string(),
            "force" => self.force = parse_bool(v)?,
            other => {
                return Err(Error::Parameter(format!(
                    "unknown key `{other}`; known keys: {}",
                    KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Text form of one key.
    pub fn get(&self, key: &str) -> Option<String> {
        let s = match key {
            "cutoff" => self.cutoff.to_string(),
            "nu" => self.nu.to_string(),
            "dt" => self.dt.to_string(),
            "horizon" => self.horizon.to_string(),
            "ensemble_size" => self.ensemble_size.to_string(),
            "seed" => self.seed.to_string(),
            "initial" => match &self.initial {
                InitialCondition::Zero => "zero".into(),
                InitialCondition::Coords(list) => list
                    .iter()
                    .map(|(c, x)| format!("{}={x}", fmt_coord(c)))
                    .collect::<Vec<_>>()
                    .join(" "),
            },
            "linear_only" => self.linear_only.to_string(),
            "drop_blowups" => self.drop_blowups.to_string(),
            "noise" => match self.noise {
                NoiseKind::PowerLaw => "power_law",
                NoiseKind::SingleLine => "single_line",
                NoiseKind::Zero => "zero",
            }
            .into(),
            "noise_decay" => self.noise_decay.to_string(),
            "noise_amplitude" => self.noise_amplitude.to_string(),
            "noise_line" => fmt_k(&self.noise_line),
            "noise_shells" => self
                .noise_shells
                .iter()
                .map(|(s, x)| format!("{s}={x}"))
                .collect::<Vec<_>>()
                .join(" "),
            "noise_modes" => self
                .noise_modes
                .iter()
                .map(|(m, x)| format!("{}:{}={x}", fmt_k(&m.k), m.pol))
                .collect::<Vec<_>>()
                .join(" "),
            "subspace" => self
                .subspace
                .iter()
                .map(fmt_coord)
                .collect::<Vec<_>>()
                .join(" "),
            "snapshot_times" => fmt_list(&self.snapshot_times),
            "kde_nodes" => self.kde_nodes.to_string(),
            "kde_extent" => self.kde_extent.to_string(),
            "bandwidth" => fmt_bandwidth(&self.bandwidth),
            "fp" => self.fp.to_string(),
            "fp_dt" => self.fp_dt.to_string(),
            "fp_nodes" => self.fp_nodes.to_string(),
            "fp_half_width" => self.fp_half_width.to_string(),
            "fp_renormalize" => self.fp_renormalize.to_string(),
            "alphas" => fmt_list(&self.alphas),
            "moment_ps" => fmt_list(&self.moment_ps),
            "exp_lambda" => self.exp_lambda.to_string(),
            "t_min" => self.t_min.map_or("auto".into(), |t| t.to_string()),
            "stationary_tail" => self.stationary_tail.to_string(),
            "stationary_bandwidth" => fmt_bandwidth(&self.stationary_bandwidth),
            "output_dir" => self.output_dir.clone(),
            "force" => self.force.to_string(),
            _ => return None,
        };
        Some(s)
    }

    /// Every key, one per line, in a fixed order.
    pub fn to_text(&self) -> String {
        self.render(KEYS.iter().copied())
    }

    /// Keys that affect results only; the basis of the config hash and of
    /// replay.
    pub fn canonical_text(&self) -> String {
        self.render(KEYS.iter().copied().filter(|k| !PLUMBING_KEYS.contains(k)))
    }

    fn render<'a>(&self, keys: impl Iterator<Item = &'a str>) -> String {
        let mut out = String::new();
        for k in keys {
            let _ = writeln!(out, "{k} = {}", self.get(k).expect("known key"));
        }
        out
    }

    pub fn effective_t_min(&self) -> f64 {
        self.t_min.unwrap_or(10.0 * self.dt)
    }

    /// `p = 1` and every requested moment exponent, sorted and deduplicated.
    pub fn tracked_moments(&self) -> Vec<f64> {
        let mut ps = vec![1.0];
        ps.extend(self.moment_ps.iter().copied());
        ps.sort_by(f64::total_cmp);
        ps.dedup();
        ps
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            cutoff: self.cutoff,
            nu: self.nu,
            dt: self.dt,
            horizon: self.horizon,
            ensemble_size: self.ensemble_size,
            seed: self.seed,
            initial: self.initial.clone(),
            linear_only: self.linear_only,
            tracked_moments: self.tracked_moments(),
            drop_blowups: self.drop_blowups,
        }
    }

    /// Snapshot times with the horizon appended when missing.
    pub fn snapshot_schedule(&self) -> Vec<f64> {
        let mut t = self.snapshot_times.clone();
        if t.last().is_none_or(|&l| (l - self.horizon).abs() > 1e-12) {
            t.push(self.horizon);
        }
        t
    }

    fn check_ranges(&self) -> Result<()> {
        let positive = |name: &str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(Error::Parameter(format!(
                    "{name} must be positive, got {x}"
                )))
            }
        };
        positive("fp_dt", self.fp_dt)?;
        positive("fp_half_width", self.fp_half_width)?;
        positive("kde_extent", self.kde_extent)?;
        if self.kde_nodes < 3 || self.fp_nodes < 3 {
            return Err(Error::Parameter(
                "grids need at least 3 nodes per axis".into(),
            ));
        }
        if let Some(&a) = self.alphas.iter().find(|&&a| !(a > 0.0 && a < 1.0)) {
            return Err(Error::Parameter(format!(
                "Hölder exponents must lie in (0, 1), got {a}"
            )));
        }
        if let Some(&p) = self
            .moment_ps
            .iter()
            .find(|&&p| !(p >= 1.0 && p.is_finite()))
        {
            return Err(Error::Parameter(format!(
                "moment exponents must lie in [1, ∞), got {p}"
            )));
        }
        if !(self.exp_lambda >= 0.0 && self.exp_lambda.is_finite()) {
            return Err(Error::Parameter("exp_lambda must be nonnegative".into()));
        }
        if !(0.0..=1.0).contains(&self.stationary_tail) {
            return Err(Error::Parameter(
                "stationary_tail must lie in [0, 1]".into(),
            ));
        }
        let t_min = self.effective_t_min();
        if !(t_min > 0.0 && t_min <= self.horizon) {
            return Err(Error::Parameter(format!(
                "t_min = {t_min} must lie in (0, horizon]"
            )));
        }
        Ok(())
    }

    /// Noise specification built from the noise keys.
    pub fn noise_spec(&self, modes: Arc<ModeSet>) -> Result<NoiseSpec> {
        let mut spec = match self.noise {
            NoiseKind::PowerLaw => NoiseSpec::power_law(modes, self.noise_decay),
            NoiseKind::SingleLine => {
                NoiseSpec::single_line(modes, self.noise_line, self.noise_decay)?
            }
            NoiseKind::Zero => NoiseSpec::zero(modes),
        }
        .scaled(self.noise_amplitude)?;
        for &(shell, a) in &self.noise_shells {
            spec = spec.with_shell(shell, a)?;
        }
        for &(mode, a) in &self.noise_modes {
            spec = spec.with_mode(mode, a)?;
        }
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionCheck {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

/// Everything derived from a config that later stages need.
#[derive(Debug, Clone)]
pub struct Model {
    pub modes: Arc<ModeSet>,
    pub noise: NoiseSpec,
    pub subspace: SubspaceF,
    pub sim: SimConfig,
}

#[derive(Debug, Clone)]
pub struct Validation {
    pub checks: Vec<AssumptionCheck>,
    pub warnings: Vec<String>,
    pub model: Model,
}

impl Validation {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    /// Error listing the failed checks unless all passed or `force` is set.
    pub fn enforce(&self, force: bool) -> Result<()> {
        if self.passed() || force {
            return Ok(());
        }
        let failed: Vec<String> = self
            .checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| format!("{}: {}", c.name, c.detail))
            .collect();
        Err(Error::Assumption(failed.join("; ")))
    }
}

/// Builds the model and runs the forcing assumptions. Structural errors
/// (bad cutoff, a subspace outside the lattice) are returned as errors;
/// assumption failures are reported in the checks.
pub fn validate(cfg: &RunConfig) -> Result<Validation> {
    cfg.check_ranges()?;
    let sim = cfg.sim_config();
    let mut warnings = sim.validate()?;
    let modes = Arc::new(ModeSet::new(cfg.cutoff as i64)?);
    let noise = cfg.noise_spec(modes.clone())?;
    sim.initial.build(&modes)?;
    let mut checks = vec![AssumptionCheck {
        name: "diagonal_covariance".into(),
        pass: true,
        detail: "amplitudes are assigned per Stokes eigenmode, equal on ±k".into(),
    }];

    let hypo = hypoellipticity_report(&noise)?;
    checks.push(AssumptionCheck {
        name: "lattice_generation".into(),
        pass: hypo.pass,
        detail: format!(
            "{} forced wavevectors, invariant factors {:?}: {}",
            hypo.forced.len(),
            hypo.lattice.invariant_factors,
            hypo.lattice.diagnostic
        ),
    });

    let subspace = SubspaceF::new(cfg.subspace.clone(), &noise)?;
    let fits = subspace.fits_in(&modes);
    checks.push(AssumptionCheck {
        name: "finite_subspace".into(),
        pass: fits,
        detail: format!(
            "F spans {} real coordinates inside the cutoff-{} lattice",
            subspace.dim(),
            cfg.cutoff
        ),
    });

    let nondeg = check_f_nondegenerate(&noise, &subspace);
    let detail = if nondeg.nonsingular {
        format!(
            "projected covariance on F is a non-singular matrix (condition number {:.3e})",
            nondeg.condition_number
        )
    } else {
        let zero: Vec<String> = subspace
            .coords()
            .iter()
            .filter(|c| noise.coord_sigma(c).is_none_or(|s| s == 0.0))
            .map(fmt_coord)
            .collect();
        format!(
            "σ = 0 on F coordinate(s) {}: projected covariance on F is not a non-singular matrix",
            zero.join(" ")
        )
    };
    checks.push(AssumptionCheck {
        name: "nondegenerate_f".into(),
        pass: nondeg.nonsingular,
        detail,
    });

    if cfg.fp && cfg.fp_dt < cfg.dt {
        warnings.push(format!(
            "fp_dt = {} is below the SDE step {}; FP stepping will be slower than the data supports",
            cfg.fp_dt, cfg.dt
        ));
    }
    Ok(Validation {
        checks,
        warnings,
        model: Model {
            modes,
            noise,
            subspace,
            sim,
        },
    })
}
