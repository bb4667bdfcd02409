//! End-to-end run: validate, simulate, estimate densities and drifts, solve
//! the conditioned Fokker–Planck equation, analyze, and write the bundle.
//!
//! Each stage writes its outputs as soon as it finishes, so a failing run
//! leaves everything computed before the failure on disk.

use std::path::{Path, PathBuf};

use crate::besov::{
    besov_bound_audit, f_alpha_functional, f_alpha_table, main_theorem_statistic,
    main_theorem_table, verify_kernel_bounds, KernelBoundTable,
};
use crate::config::{validate, Model, RunConfig, Validation};
use crate::density::{
    estimate_drift, exp_moment_g, kde_on_grid, moment_g, product_norm, DensityGrid, DriftField,
    Extent, GridSpec,
};
use crate::error::{Error, Result};
use crate::fokker_planck::{solve_fp, FpOptions, HeatKernelF, NEGATIVITY_TOLERANCE};
use crate::grid::{l1_distance, Grid};
use crate::report::{
    write_plot_bundle, BesovAuditEntry, ExpGRow, ExpMomentRow, FAlphaRow, FpKdeRow, GpRow,
    GridInfo, KernelBoundSection, MainTheoremRow, MomentRow, ProductNormRow, Provenance, RunReport,
    StationaryRow, StatisticRow,
};
use crate::sde::{
    exp_moment_monitor, moment_monitor, moment_parts, simulate_ensemble, Ensemble, EnsembleSnapshot,
};
use crate::spectral::project_subspace;

/// Environment variable naming the directory that relative output
/// directories are resolved against.
pub const OUTPUT_ROOT_ENV: &str = "NSFP_OUTPUT_ROOT";

/// `output_dir` resolved against the output root, when it is relative.
pub fn resolve_output_dir(cfg: &RunConfig) -> PathBuf {
    let dir = PathBuf::from(&cfg.output_dir);
    if dir.is_absolute() {
        return dir;
    }
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if !root.is_empty() => PathBuf::from(root).join(dir),
        _ => dir,
    }
}

/// Heat-kernel verification ladders: `t ∈ [10⁻², 10]` and `|h| ∈ [10⁻², 1]`.
pub fn kernel_t_ladder() -> Vec<f64> {
    (0..=6).map(|j| 10f64.powf(-2.0 + j as f64 / 2.0)).collect()
}

pub fn kernel_h_ladder() -> Vec<f64> {
    (0..=8).map(|i| 10f64.powf(-2.0 + i as f64 / 4.0)).collect()
}

pub const KERNEL_P_SET: [f64; 3] = [1.0, 2.0, f64::INFINITY];

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(name))
}

/// Validates the config and applies the `force` policy. Failed checks under
/// `force` become warnings.
pub fn validate_stage(cfg: &RunConfig) -> Result<Validation> {
    stage(
        "validate",
        (|| {
            let mut v = validate(cfg)?;
            v.enforce(cfg.force)?;
            if !v.passed() {
                v.warnings.push(
                    "WARNING: assumption checks failed; continuing because force is set".into(),
                );
            }
            Ok(v)
        })(),
    )
}

pub fn simulate_stage(cfg: &RunConfig, model: &Model) -> Result<Ensemble> {
    stage(
        "simulate",
        simulate_ensemble(
            &model.sim,
            &model.noise,
            &model.subspace,
            &cfg.snapshot_schedule(),
        ),
    )
}

/// Snapshots strictly after time zero; the initial state is a point mass.
pub fn positive_snapshots(snaps: &[EnsembleSnapshot]) -> Vec<&EnsembleSnapshot> {
    snaps.iter().filter(|s| s.time > 0.0).collect()
}

pub fn density_grid_spec(cfg: &RunConfig) -> GridSpec {
    GridSpec {
        nodes: cfg.kde_nodes,
        extent: Extent::StdDevs(cfg.kde_extent),
    }
}

pub fn fp_grid(cfg: &RunConfig, dim: usize) -> Result<Grid> {
    Grid::cube(dim, cfg.fp_half_width, cfg.fp_nodes)
}

/// Kernel density estimates on per-snapshot grids sized from the sample.
pub fn density_stage(cfg: &RunConfig, snaps: &[EnsembleSnapshot]) -> Result<Vec<DensityGrid>> {
    stage("density", {
        let spec = density_grid_spec(cfg);
        positive_snapshots(snaps)
            .into_iter()
            .map(|s| {
                let grid = spec.resolve(&s.coords, s.dim)?;
                kde_on_grid(&s.coords, s.dim, &grid, &cfg.bandwidth, s.time)
            })
            .collect()
    })
}

/// Drift estimates on the grids of the matching densities.
pub fn drift_stage(
    cfg: &RunConfig,
    snaps: &[EnsembleSnapshot],
    densities: &[DensityGrid],
) -> Result<Vec<DriftField>> {
    stage(
        "drift",
        positive_snapshots(snaps)
            .into_iter()
            .zip(densities)
            .map(|(s, f)| estimate_drift(s, &f.grid, &cfg.bandwidth, cfg.nu))
            .collect(),
    )
}

/// Fokker–Planck states at the snapshot times next to the kernel density
/// estimates on the same grid.
#[derive(Debug, Clone)]
pub struct FpComparison {
    pub grid: Grid,
    pub fp: Vec<DensityGrid>,
    pub kde: Vec<DensityGrid>,
    pub l1: Vec<f64>,
}

pub fn fp_stage(
    cfg: &RunConfig,
    model: &Model,
    snaps: &[EnsembleSnapshot],
) -> Result<FpComparison> {
    stage(
        "fokker-planck",
        (|| {
            let d = model.subspace.dim();
            let grid = fp_grid(cfg, d)?;
            let hk = HeatKernelF::from_subspace(&model.subspace)?;
            let positive = positive_snapshots(snaps);
            let schedule = positive
                .iter()
                .map(|s| estimate_drift(s, &grid, &cfg.bandwidth, cfg.nu))
                .collect::<Result<Vec<_>>>()?;
            let u0 = model.sim.initial.build(&model.modes)?;
            let x0 = project_subspace(&u0, model.subspace.coords())?;
            let options = FpOptions {
                renormalize: cfg.fp_renormalize,
                negativity_tolerance: NEGATIVITY_TOLERANCE,
            };
            let states = solve_fp(&hk, &x0, &schedule, cfg.horizon, cfg.fp_dt, &grid, options)?;
            let mut out = FpComparison {
                grid: grid.clone(),
                fp: Vec::new(),
                kde: Vec::new(),
                l1: Vec::new(),
            };
            for state in states {
                let Some(s) = positive
                    .iter()
                    .find(|s| (s.time - state.time).abs() <= 1e-9 * s.time.max(1.0))
                else {
                    continue;
                };
                let kde = kde_on_grid(&s.coords, s.dim, &grid, &cfg.bandwidth, s.time)?;
                out.l1
                    .push(l1_distance(&grid, &state.density.values, &kde.values));
                out.fp.push(state.density);
                out.kde.push(kde);
            }
            Ok(out)
        })(),
    )
}

/// Kernel density and drift of the pooled tail `t ≥ stationary_tail · T`
/// and the residual of the stationary equation on `grid`.
pub fn stationary_row(
    cfg: &RunConfig,
    model: &Model,
    snaps: &[EnsembleSnapshot],
    grid: &Grid,
) -> Result<Option<StationaryRow>> {
    let from = cfg.stationary_tail * cfg.horizon;
    let tail: Vec<EnsembleSnapshot> = positive_snapshots(snaps)
        .into_iter()
        .filter(|s| s.time >= from - 1e-12)
        .cloned()
        .collect();
    if tail.is_empty() {
        return Ok(None);
    }
    let pooled = EnsembleSnapshot::pool(&tail)?;
    let hk = HeatKernelF::from_subspace(&model.subspace)?;
    let k = kde_on_grid(
        &pooled.coords,
        pooled.dim,
        grid,
        &cfg.stationary_bandwidth,
        pooled.time,
    )?;
    let drift = estimate_drift(&pooled, grid, &cfg.stationary_bandwidth, cfg.nu)?;
    let residual = crate::fokker_planck::stationary_residual(&hk, &k, &drift)?;
    Ok(Some(StationaryRow {
        t_from: tail[0].time,
        t_to: tail[tail.len() - 1].time,
        snapshots: tail.len(),
        samples: pooled.len(),
        residual,
        grid: GridInfo::of(grid),
    }))
}

fn write_densities(dir: &Path, prefix: &str, fields: &[DensityGrid]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (i, f) in fields.iter().enumerate() {
        f.write(&dir.join(format!("{prefix}_{i:02}.csv")))?;
    }
    Ok(())
}

fn write_drifts(dir: &Path, fields: &[DriftField]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (i, f) in fields.iter().enumerate() {
        f.write(&dir.join(format!("drift_{i:02}.csv")))?;
    }
    Ok(())
}

/// Everything a pipeline run produced, kept in memory.
pub struct PipelineRun {
    pub report: RunReport,
    pub ensemble: Ensemble,
    pub densities: Vec<DensityGrid>,
    pub drifts: Vec<DriftField>,
    pub fp: Option<FpComparison>,
}

/// Runs every stage and writes `report.json`, `config.txt`, the density,
/// drift and Fokker–Planck grids, and the plot CSVs under `out`.
pub fn run_pipeline(cfg: &RunConfig, out: &Path) -> Result<RunReport> {
    Ok(run_pipeline_detailed(cfg, out)?.report)
}

/// [`run_pipeline`], also returning the ensemble and intermediate grids.
pub fn run_pipeline_detailed(cfg: &RunConfig, out: &Path) -> Result<PipelineRun> {
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("config.txt"), cfg.to_text())?;
    let validation = validate_stage(cfg)?;
    let model = &validation.model;
    std::fs::write(
        out.join("assumptions.json"),
        serde_json::to_string_pretty(&validation.checks)?,
    )?;
    let d = model.subspace.dim();
    let mut warnings = validation.warnings.clone();

    let ensemble = simulate_stage(cfg, model)?;
    warnings.extend(ensemble.warnings.iter().cloned());
    let snaps = &ensemble.snapshots;

    let densities = density_stage(cfg, snaps)?;
    stage(
        "density",
        write_densities(&out.join("density"), "density", &densities),
    )?;
    let drifts = drift_stage(cfg, snaps, &densities)?;
    stage("drift", write_drifts(&out.join("drift"), &drifts))?;

    let fp = if cfg.fp {
        let c = fp_stage(cfg, model, snaps)?;
        stage(
            "fokker-planck",
            write_densities(&out.join("fokker_planck"), "fp", &c.fp),
        )?;
        Some(c)
    } else {
        None
    };

    let analysis = stage(
        "analysis",
        analyze(cfg, model, &ensemble, &densities, &drifts, fp.as_ref()),
    )?;
    let report = RunReport {
        provenance: Provenance::new(&cfg.canonical_text(), cfg.seed),
        dim: d,
        assumptions: validation.checks.clone(),
        warnings: {
            warnings.extend(analysis.warnings);
            warnings
        },
        ensemble_size: cfg.ensemble_size,
        dropped_members: ensemble.dropped_members.len(),
        moments: analysis.moments,
        exp_moments: analysis.exp_moments,
        g_p: analysis.g_p,
        exp_g: analysis.exp_g,
        f_alpha: analysis.f_alpha,
        product_norms: analysis.product_norms,
        main_theorem: analysis.main_theorem,
        main_theorem_statistic: analysis.statistics,
        besov_audit: analysis.besov_audit,
        fp_vs_kde: analysis.fp_vs_kde,
        kernel_bounds: Some(analysis.kernel_bounds),
        stationary: analysis.stationary.into_iter().collect(),
    };
    stage(
        "report",
        (|| {
            report.write(&out.join("report.json"))?;
            write_plot_bundle(&report, &out.join("plots"))?;
            if let Some(k) = &report.kernel_bounds {
                KernelBoundTable {
                    dim: k.dim,
                    n: k.n,
                    rows: k.rows.clone(),
                    summaries: k.summaries.clone(),
                }
                .write_csv(&out.join("kernel_bounds.csv"))?;
            }
            Ok(())
        })(),
    )?;
    Ok(PipelineRun {
        report,
        ensemble,
        densities,
        drifts,
        fp,
    })
}

struct Analysis {
    moments: Vec<MomentRow>,
    exp_moments: Vec<ExpMomentRow>,
    g_p: Vec<GpRow>,
    exp_g: Vec<ExpGRow>,
    f_alpha: Vec<FAlphaRow>,
    product_norms: Vec<ProductNormRow>,
    main_theorem: Vec<MainTheoremRow>,
    statistics: Vec<StatisticRow>,
    besov_audit: Vec<BesovAuditEntry>,
    fp_vs_kde: Vec<FpKdeRow>,
    kernel_bounds: KernelBoundSection,
    stationary: Option<StationaryRow>,
    warnings: Vec<String>,
}

fn analyze(
    cfg: &RunConfig,
    model: &Model,
    ensemble: &Ensemble,
    densities: &[DensityGrid],
    drifts: &[DriftField],
    fp: Option<&FpComparison>,
) -> Result<Analysis> {
    let d = model.subspace.dim();
    let t_min = cfg.effective_t_min();
    let horizon = cfg.horizon;
    let mut warnings = Vec::new();

    let mut moments = Vec::new();
    let mut exp_moments = Vec::new();
    for s in &ensemble.snapshots {
        for &p in &s.tracked_p {
            let m = moment_monitor(s, p)?;
            let (sup, int) = moment_parts(s, p)?;
            moments.push(MomentRow {
                t: s.time,
                p,
                value: m.value,
                std_error: m.std_error,
                sup_part: sup.value,
                integral_part: int.value,
            });
        }
        let e = exp_moment_monitor(s, cfg.exp_lambda)?;
        exp_moments.push(ExpMomentRow {
            t: s.time,
            lambda: cfg.exp_lambda,
            value: e.value,
            std_error: e.std_error,
            heavy_tail: e.heavy_tail,
        });
    }

    let mut g_p = Vec::new();
    let mut exp_g = Vec::new();
    let mut g1 = Vec::with_capacity(densities.len());
    for (f, g) in densities.iter().zip(drifts) {
        let info = GridInfo::of(&f.grid);
        for &p in &cfg.tracked_moments() {
            let m = moment_g(g, f, p)?;
            if p == 1.0 {
                g1.push(m.value);
            }
            if let Some(w) = m.warning {
                warnings.push(format!("t = {}: {w}", f.time));
            }
            g_p.push(GpRow {
                t: f.time,
                p,
                value: m.value,
                masked_mass: m.masked_mass,
                grid: info.clone(),
            });
        }
        let e = exp_moment_g(g, f, cfg.exp_lambda)?;
        exp_g.push(ExpGRow {
            t: f.time,
            lambda: cfg.exp_lambda,
            value: e.value,
            masked_mass: e.masked_mass,
            grid: info,
        });
    }

    let half_d = d as f64 / 2.0;
    let f_alpha: Vec<FAlphaRow> = f_alpha_table(densities, half_d, horizon, t_min)?
        .into_iter()
        .map(|(t, value)| FAlphaRow {
            t,
            alpha: half_d,
            value,
            grid: grid_at(densities, t),
        })
        .collect();
    let f_functional = f_alpha_functional(densities, half_d, horizon, t_min)?;

    let mut product_norms = Vec::new();
    for (f, g) in densities.iter().zip(drifts) {
        if f.time < t_min - 1e-12 {
            continue;
        }
        for &p in &cfg.moment_ps {
            let pn = product_norm(g, f, p, f_functional)?;
            product_norms.push(ProductNormRow {
                t: f.time,
                p,
                lhs: pn.lhs,
                rhs: pn.rhs,
                grid: GridInfo::of(&f.grid),
            });
        }
    }

    let mut main_theorem = Vec::new();
    let mut statistics = Vec::new();
    for &alpha in &cfg.alphas {
        for (t, value) in main_theorem_table(densities, alpha, horizon, t_min)? {
            main_theorem.push(MainTheoremRow {
                t,
                alpha,
                value,
                grid: grid_at(densities, t),
            });
        }
        statistics.push(StatisticRow {
            alpha,
            t_min,
            horizon,
            value: main_theorem_statistic(densities, alpha, horizon, t_min)?,
        });
    }

    let besov_audit = densities
        .iter()
        .zip(&g1)
        .filter(|(f, _)| f.time >= t_min - 1e-12)
        .map(|(f, &g)| {
            let row = besov_bound_audit(f, g);
            BesovAuditEntry {
                t: row.t,
                g1: row.g1,
                constant: row.constant,
                grid: GridInfo::of(&f.grid),
            }
        })
        .collect();

    let fp_vs_kde = fp
        .map(|c| {
            c.fp.iter()
                .zip(&c.kde)
                .zip(&c.l1)
                .map(|((a, b), &l1)| FpKdeRow {
                    t: a.time,
                    l1,
                    fp_mass: a.mass(),
                    kde_mass: b.mass(),
                    grid: GridInfo::of(&c.grid),
                })
                .collect()
        })
        .unwrap_or_default();

    let hk = HeatKernelF::from_subspace(&model.subspace)?;
    let table = verify_kernel_bounds(
        &hk,
        &kernel_t_ladder(),
        &kernel_h_ladder(),
        &KERNEL_P_SET,
        1,
    )?;
    let kernel_bounds = KernelBoundSection {
        dim: table.dim,
        n: table.n,
        summaries: table.summaries,
        rows: table.rows,
    };

    let stationary_grid = match fp {
        Some(c) => c.grid.clone(),
        None => densities
            .last()
            .map(|f| f.grid.clone())
            .ok_or(Error::InsufficientData { got: 0, need: 1 })?,
    };
    let stationary = stationary_row(cfg, model, &ensemble.snapshots, &stationary_grid)?;

    Ok(Analysis {
        moments,
        exp_moments,
        g_p,
        exp_g,
        f_alpha,
        product_norms,
        main_theorem,
        statistics,
        besov_audit,
        fp_vs_kde,
        kernel_bounds,
        stationary,
        warnings,
    })
}

fn grid_at(densities: &[DensityGrid], t: f64) -> GridInfo {
    densities
        .iter()
        .find(|f| f.time == t)
        .map(|f| GridInfo::of(&f.grid))
        .expect("row time comes from the trajectory")
}

/// Outcome of recomputing a report from its embedded config.
#[derive(Debug, Clone)]
pub struct ReplayOutcome {
    pub matches: bool,
    pub differences: Vec<String>,
    pub report: RunReport,
}

/// Reruns the config stored in a report and compares the report bodies
/// byte for byte.
pub fn replay(report_path: &Path, out: &Path) -> Result<ReplayOutcome> {
    let original = std::fs::read_to_string(report_path)?;
    let stored = RunReport::from_json(&original)?;
    let mut cfg = RunConfig::parse(&stored.provenance.config)?;
    cfg.output_dir = out.to_string_lossy().into_owned();
    let report = run_pipeline(&cfg, out)?;
    let fresh = report.to_json()?;
    let differences = if fresh == original {
        Vec::new()
    } else {
        crate::report::diff_reports(&original, &fresh, 20)?
    };
    Ok(ReplayOutcome {
        matches: differences.is_empty(),
        differences,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> RunConfig {
        RunConfig {
            ensemble_size: 2000,
            horizon: 0.5,
            snapshot_times: vec![0.1, 0.25, 0.5],
            kde_nodes: 101,
            fp_dt: 0.005,
            fp_nodes: 121,
            fp_half_width: 3.0,
            ..RunConfig::default()
        }
    }

    #[test]
    fn pipeline_writes_bundle() {
        let dir = tempfile::tempdir().unwrap();
        let report = run_pipeline(&small_config(), dir.path()).unwrap();
        assert!(report.assumptions.iter().all(|c| c.pass));
        assert_eq!(report.fp_vs_kde.len(), 3);
        assert!(
            report.fp_vs_kde.iter().all(|r| r.l1 < 0.2),
            "{:?}",
            report.fp_vs_kde
        );
        assert_eq!(report.main_theorem_statistic.len(), 3);
        assert_eq!(report.stationary.len(), 1);
        for f in [
            "report.json",
            "config.txt",
            "assumptions.json",
            "kernel_bounds.csv",
        ] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        assert!(dir.path().join("plots/main_theorem.csv").exists());
        assert!(dir.path().join("density/density_00.csv").exists());
        assert!(dir.path().join("fokker_planck/fp_02.csv").exists());
        let back = RunReport::read(&dir.path().join("report.json")).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn replay_matches() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a");
        run_pipeline(&small_config(), &a).unwrap();
        let outcome = replay(&a.join("report.json"), &dir.path().join("b")).unwrap();
        assert!(outcome.matches, "{:?}", outcome.differences);
    }

    #[test]
    fn zero_sigma_on_f_aborts_in_validation() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_config();
        cfg.set("noise_modes", "1,0,0:1=0").unwrap();
        let err = run_pipeline(&cfg, dir.path()).unwrap_err();
        assert!(matches!(
            err,
            Error::Stage {
                stage: "validate",
                ..
            }
        ));
        assert!(err.is_validation());
        assert!(err.to_string().contains("non-singular matrix"), "{err}");
        assert!(dir.path().join("config.txt").exists());
    }

    #[test]
    fn numerical_failure_keeps_earlier_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig {
            fp_dt: 1e-5,
            ..small_config()
        };
        let err = run_pipeline(&cfg, dir.path()).unwrap_err();
        assert!(
            matches!(
                &err,
                Error::Stage {
                    stage: "fokker-planck",
                    ..
                }
            ),
            "{err}"
        );
        assert!(!err.is_validation());
        assert!(dir.path().join("density/density_00.csv").exists());
        assert!(dir.path().join("drift/drift_00.csv").exists());
    }

    #[test]
    fn relative_output_dir_uses_root() {
        let cfg = RunConfig {
            output_dir: "/abs/run".into(),
            ..RunConfig::default()
        };
        assert_eq!(resolve_output_dir(&cfg), PathBuf::from("/abs/run"));
    }
}
