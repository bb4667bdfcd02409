//! Run report schema, plot-data emission and replay comparison.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::besov::{KernelBoundRow, KernelBoundSummary};
use crate::config::AssumptionCheck;
use crate::error::{Error, Result};
use crate::grid::Grid;

/// Shape of the grid a row was computed on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridInfo {
    pub nodes: Vec<usize>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl GridInfo {
    pub fn of(grid: &Grid) -> Self {
        GridInfo {
            nodes: grid.axes().iter().map(|a| a.nodes).collect(),
            min: grid.axes().iter().map(|a| a.min).collect(),
            max: grid.axes().iter().map(|a| a.max).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// SHA-256 of the canonical config text.
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    /// Canonical config text; enough to replay the run.
    pub config: String,
}

impl Provenance {
    pub fn new(canonical_config: &str, seed: u64) -> Self {
        Provenance {
            config_hash: sha256_hex(canonical_config.as_bytes()),
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: canonical_config.to_string(),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

/// Path-space moment monitor `E[sup |u|² ^p + ν ∫ ‖u‖²_V |u|^{2(p-1)}]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub t: f64,
    pub p: f64,
    #[serde(with = "crate::serde_float")]
    pub value: f64,
    #[serde(with = "crate::serde_float")]
    pub std_error: f64,
    #[serde(with = "crate::serde_float")]
    pub sup_part: f64,
    #[serde(with = "crate::serde_float")]
    pub integral_part: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpMomentRow {
    pub t: f64,
    pub lambda: f64,
    #[serde(with = "crate::serde_float")]
    pub value: f64,
    #[serde(with = "crate::serde_float")]
    pub std_error: f64,
    pub heavy_tail: bool,
}

/// Drift moment `(∫ |G|^p f)^{1/p}` at one snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpRow {
    pub t: f64,
    pub p: f64,
    #[serde(with = "crate::serde_float")]
    pub value: f64,
    pub masked_mass: f64,
    pub grid: GridInfo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpGRow {
    pub t: f64,
    pub lambda: f64,
    #[serde(with = "crate::serde_float")]
    pub value: f64,
    pub masked_mass: f64,
    pub grid: GridInfo,
}

/// `t^α ‖f(t)‖_∞`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FAlphaRow {
    pub t: f64,
    pub alpha: f64,
    pub value: f64,
    pub grid: GridInfo,
}

/// `‖G f‖_{L^p}` against `𝒢_p ℱ^{1-1/p} t^{-d(1-1/p)/2}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductNormRow {
    pub t: f64,
    pub p: f64,
    #[serde(with = "crate::serde_float")]
    pub lhs: f64,
    #[serde(with = "crate::serde_float")]
    pub rhs: f64,
    pub grid: GridInfo,
}

/// `t^{(d+α)/2} ‖f(t)‖_{C^α}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MainTheoremRow {
    pub t: f64,
    pub alpha: f64,
    pub value: f64,
    pub grid: GridInfo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatisticRow {
    pub alpha: f64,
    pub t_min: f64,
    pub horizon: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BesovAuditEntry {
    pub t: f64,
    pub g1: f64,
    pub constant: f64,
    pub grid: GridInfo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpKdeRow {
    pub t: f64,
    pub l1: f64,
    pub fp_mass: f64,
    pub kde_mass: f64,
    pub grid: GridInfo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryRow {
    pub t_from: f64,
    pub t_to: f64,
    pub snapshots: usize,
    pub samples: usize,
    pub residual: f64,
    pub grid: GridInfo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelBoundSection {
    pub dim: usize,
    pub n: u32,
    pub summaries: Vec<KernelBoundSummary>,
    pub rows: Vec<KernelBoundRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub provenance: Provenance,
    pub dim: usize,
    pub assumptions: Vec<AssumptionCheck>,
    pub warnings: Vec<String>,
    pub ensemble_size: usize,
    pub dropped_members: usize,
    pub moments: Vec<MomentRow>,
    pub exp_moments: Vec<ExpMomentRow>,
    pub g_p: Vec<GpRow>,
    pub exp_g: Vec<ExpGRow>,
    pub f_alpha: Vec<FAlphaRow>,
    pub product_norms: Vec<ProductNormRow>,
    pub main_theorem: Vec<MainTheoremRow>,
    pub main_theorem_statistic: Vec<StatisticRow>,
    pub besov_audit: Vec<BesovAuditEntry>,
    pub fp_vs_kde: Vec<FpKdeRow>,
    pub kernel_bounds: Option<KernelBoundSection>,
    pub stationary: Vec<StationaryRow>,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        RunReport::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

pub const STATISTICS: &[&str] = &[
    "main_theorem",
    "kernel_bounds",
    "g_p",
    "exp_g",
    "f_alpha",
    "product_norm",
    "fp_vs_kde",
    "moments",
    "besov_audit",
    "stationary",
];

/// CSV text for one report section. Every schema starts with the snapshot
/// time where one exists:
///
/// | name | columns |
/// |---|---|
/// | `main_theorem` | `t,alpha,value` |
/// | `kernel_bounds` | `bound,p,t,h,ratio` |
/// | `g_p` | `t,p,value,masked_mass` |
/// | `exp_g` | `t,lambda,value,masked_mass` |
/// | `f_alpha` | `t,alpha,value` |
/// | `product_norm` | `t,p,lhs,rhs` |
/// | `fp_vs_kde` | `t,l1` |
/// | `moments` | `t,p,value,std_error` |
/// | `besov_audit` | `t,g1,constant` |
/// | `stationary` | `t_from,t_to,residual` |
pub fn emit_plot_data(report: &RunReport, which: &str) -> Result<String> {
    let mut out = String::new();
    macro_rules! rows {
        ($header:expr, $iter:expr, |$r:ident| $($arg:expr),+) => {{
            let _ = writeln!(out, "{}", $header);
            for $r in $iter {
                let fields: Vec<String> = vec![$($arg.to_string()),+];
                let _ = writeln!(out, "{}", fields.join(","));
            }
        }};
    }
    match which {
        "main_theorem" => rows!(
            "t,alpha,value",
            &report.main_theorem,
            |r| r.t,
            r.alpha,
            r.value
        ),
        "kernel_bounds" => rows!(
            "bound,p,t,h,ratio",
            report.kernel_bounds.iter().flat_map(|k| &k.rows),
            |r| r.bound.name(),
            r.p,
            r.t,
            r.h,
            r.ratio
        ),
        "g_p" => rows!(
            "t,p,value,masked_mass",
            &report.g_p,
            |r| r.t,
            r.p,
            r.value,
            r.masked_mass
        ),
        "exp_g" => rows!(
            "t,lambda,value,masked_mass",
            &report.exp_g,
            |r| r.t,
            r.lambda,
            r.value,
            r.masked_mass
        ),
        "f_alpha" => rows!("t,alpha,value", &report.f_alpha, |r| r.t, r.alpha, r.value),
        "product_norm" => rows!(
            "t,p,lhs,rhs",
            &report.product_norms,
            |r| r.t,
            r.p,
            r.lhs,
            r.rhs
        ),
        "fp_vs_kde" => rows!("t,l1", &report.fp_vs_kde, |r| r.t, r.l1),
        "moments" => rows!(
            "t,p,value,std_error",
            &report.moments,
            |r| r.t,
            r.p,
            r.value,
            r.std_error
        ),
        "besov_audit" => rows!(
            "t,g1,constant",
            &report.besov_audit,
            |r| r.t,
            r.g1,
            r.constant
        ),
        "stationary" => rows!(
            "t_from,t_to,residual",
            &report.stationary,
            |r| r.t_from,
            r.t_to,
            r.residual
        ),
        other => {
            return Err(Error::UnknownStatistic {
                name: other.to_string(),
                options: STATISTICS.join(", "),
            })
        }
    }
    Ok(out)
}

/// Writes every statistic as `<dir>/<name>.csv`.
pub fn write_plot_bundle(report: &RunReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for name in STATISTICS {
        std::fs::write(
            dir.join(format!("{name}.csv")),
            emit_plot_data(report, name)?,
        )?;
    }
    Ok(())
}

/// JSON paths at which two report texts differ, at most `limit` of them.
pub fn diff_reports(a: &str, b: &str, limit: usize) -> Result<Vec<String>> {
    let va: serde_json::Value = serde_json::from_str(a)?;
    let vb: serde_json::Value = serde_json::from_str(b)?;
    let mut out = Vec::new();
    diff_values(&va, &vb, String::new(), &mut out, limit);
    if out.is_empty() && a != b {
        out.push("(formatting only)".into());
    }
    Ok(out)
}

fn diff_values(
    a: &serde_json::Value,
    b: &serde_json::Value,
    path: String,
    out: &mut Vec<String>,
    limit: usize,
) {
    use serde_json::Value;
    if out.len() >= limit {
        return;
    }
    match (a, b) {
        (Value::Object(x), Value::Object(y)) => {
            let mut keys: Vec<&String> = x.keys().chain(y.keys()).collect();
            keys.sort();
            keys.dedup();
            for k in keys {
                let p = format!("{path}.{k}");
                match (x.get(k), y.get(k)) {
                    (Some(u), Some(v)) => diff_values(u, v, p, out, limit),
                    _ => out.push(format!("{p}: present on one side only")),
                }
            }
        }
        (Value::Array(x), Value::Array(y)) => {
            if x.len() != y.len() {
                out.push(format!("{path}: length {} vs {}", x.len(), y.len()));
                return;
            }
            for (i, (u, v)) in x.iter().zip(y).enumerate() {
                diff_values(u, v, format!("{path}[{i}]"), out, limit);
            }
        }
        _ if a != b => out.push(format!("{path}: {a} vs {b}")),
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn empty_report() -> RunReport {
        RunReport {
            provenance: Provenance::new("nu = 1\n", 3),
            dim: 1,
            assumptions: Vec::new(),
            warnings: Vec::new(),
            ensemble_size: 0,
            dropped_members: 0,
            moments: Vec::new(),
            exp_moments: Vec::new(),
            g_p: Vec::new(),
            exp_g: Vec::new(),
            f_alpha: Vec::new(),
            product_norms: Vec::new(),
            main_theorem: Vec::new(),
            main_theorem_statistic: Vec::new(),
            besov_audit: Vec::new(),
            fp_vs_kde: Vec::new(),
            kernel_bounds: None,
            stationary: Vec::new(),
        }
    }

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn empty_section_gives_header_only() {
        let r = empty_report();
        for name in STATISTICS {
            let csv = emit_plot_data(&r, name).unwrap();
            assert_eq!(csv.lines().count(), 1, "{name}");
        }
    }

    #[test]
    fn main_theorem_projection() {
        let mut r = empty_report();
        let grid = GridInfo {
            nodes: vec![5],
            min: vec![-1.0],
            max: vec![1.0],
        };
        r.main_theorem.push(MainTheoremRow {
            t: 0.5,
            alpha: 0.25,
            value: 1.5,
            grid,
        });
        assert_eq!(
            emit_plot_data(&r, "main_theorem").unwrap(),
            "t,alpha,value\n0.5,0.25,1.5\n"
        );
    }

    #[test]
    fn unknown_statistic_lists_options() {
        match emit_plot_data(&empty_report(), "nope") {
            Err(Error::UnknownStatistic { name, options }) => {
                assert_eq!(name, "nope");
                assert!(options.contains("kernel_bounds"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn json_round_trip_and_diff() {
        let mut r = empty_report();
        r.moments.push(MomentRow {
            t: 1.0,
            p: 2.0,
            value: f64::INFINITY,
            std_error: 0.0,
            sup_part: 1.0,
            integral_part: 0.5,
        });
        let text = r.to_json().unwrap();
        let back = RunReport::from_json(&text).unwrap();
        assert_eq!(back, r);
        assert!(diff_reports(&text, &text, 10).unwrap().is_empty());
        let mut other = r.clone();
        other.moments[0].sup_part = 2.0;
        let d = diff_reports(&text, &other.to_json().unwrap(), 10).unwrap();
        assert_eq!(d.len(), 1);
        assert!(d[0].starts_with(".moments[0].sup_part"), "{d:?}");
    }
}
