use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use nsfp_core::besov::{
    besov_seminorm, bootstrap_exponents, holder_norm, BesovParams, GridFunction,
};
use nsfp_core::config::{RunConfig, Validation, PRESETS};
use nsfp_core::counterexample::{counterexample_density, counterexample_grid};
use nsfp_core::density::{moment_g, DensityGrid};
use nsfp_core::pipeline::{
    density_stage, drift_stage, fp_stage, replay, resolve_output_dir, run_pipeline, simulate_stage,
    validate_stage,
};
use nsfp_core::report::{emit_plot_data, RunReport};
use nsfp_core::sde::{read_snapshots_csv, write_snapshots_csv, EnsembleSnapshot};
use nsfp_core::Error;

const EXIT_VALIDATION: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_REPLAY_MISMATCH: u8 = 4;

#[derive(Parser)]
#[command(
    name = "nsfp",
    version,
    about = "Conditioned Fokker-Planck laboratory for stochastic Galerkin Navier-Stokes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// Start from a named preset.
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(PRESETS))]
    preset: Option<String>,
    /// Config file applied on top of the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any config key, e.g. `--set nu=0.5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    cutoff: Option<u32>,
    #[arg(long)]
    ensemble_size: Option<usize>,
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    /// Output directory; relative paths resolve against $NSFP_OUTPUT_ROOT.
    #[arg(long)]
    output: Option<String>,
    /// Continue when assumption checks fail.
    #[arg(long)]
    force: bool,
}

#[derive(Args, Clone)]
struct SnapshotArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Reuse snapshots written by `simulate` instead of simulating again.
    #[arg(long)]
    snapshots: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Check the configuration and the forcing assumptions.
    Validate(ConfigArgs),
    /// Simulate the ensemble and write snapshots.csv and moments.json.
    Simulate(ConfigArgs),
    /// Kernel density estimates of the projected marginals.
    Density(SnapshotArgs),
    /// Conditional drift estimates and their moments.
    Drift(SnapshotArgs),
    /// Solve the conditioned Fokker-Planck equation and compare with the KDE.
    SolveFp(SnapshotArgs),
    /// Besov seminorm or Hölder norm of a density CSV.
    Besov {
        /// Density CSV written by `density` or `solve-fp`.
        #[arg(long)]
        density: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        s: f64,
        #[arg(long, default_value_t = 1.0)]
        p: f64,
        #[arg(long, default_value_t = f64::INFINITY)]
        q: f64,
        #[arg(long, default_value_t = 2)]
        n: u32,
        /// Report the Hölder norm with this exponent instead.
        #[arg(long)]
        holder: Option<f64>,
    },
    /// Exponent sequence of the bootstrap iteration.
    Bootstrap {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        p: f64,
        #[arg(long)]
        alpha0: f64,
    },
    /// Bounded planar density with an unbounded marginal.
    Counterexample {
        #[arg(long, default_value_t = 4)]
        k_window: u32,
        /// Grid cells per unit length.
        #[arg(long, default_value_t = 32)]
        per_unit: usize,
        #[arg(long, default_value = "counterexample")]
        output: String,
    },
    /// Run the full pipeline, or emit plot data from an existing report.
    Report {
        #[command(flatten)]
        config: ConfigArgs,
        /// Existing report.json to read instead of running.
        #[arg(long)]
        from: Option<PathBuf>,
        /// Print one statistic as CSV.
        #[arg(long)]
        emit: Option<String>,
    },
    /// Recompute a report from its embedded config and compare.
    Replay {
        report: PathBuf,
        #[arg(long, default_value = "replay")]
        output: String,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e.downcast_ref::<Error>() {
                Some(err) if err.is_validation() => EXIT_VALIDATION,
                Some(err) if matches!(err.root(), Error::Io(_) | Error::Json(_)) => 1,
                Some(_) => EXIT_NUMERICAL,
                None => 1,
            };
            ExitCode::from(code)
        }
    }
}

fn load_config(args: &ConfigArgs) -> Result<RunConfig, Error> {
    let mut cfg = match &args.preset {
        Some(name) => RunConfig::preset(name)?,
        None => RunConfig::default(),
    };
    if let Some(path) = &args.config {
        cfg.apply_text(&std::fs::read_to_string(path)?)?;
    }
    let direct = [
        ("seed", args.seed.map(|v| v.to_string())),
        ("cutoff", args.cutoff.map(|v| v.to_string())),
        ("ensemble_size", args.ensemble_size.map(|v| v.to_string())),
        ("nu", args.nu.map(|v| v.to_string())),
        ("dt", args.dt.map(|v| v.to_string())),
        ("horizon", args.horizon.map(|v| v.to_string())),
        ("output_dir", args.output.clone()),
    ];
    for (k, v) in direct {
        if let Some(v) = v {
            cfg.set(k, &v)?;
        }
    }
    for item in &args.overrides {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| Error::Parameter(format!("expected KEY=VALUE, got `{item}`")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if args.force {
        cfg.force = true;
    }
    Ok(cfg)
}

fn print_validation(v: &Validation) {
    for c in &v.checks {
        println!(
            "[{}] {}: {}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    for w in &v.warnings {
        eprintln!("warning: {w}");
    }
}

fn prepare(args: &ConfigArgs) -> Result<(RunConfig, Validation, PathBuf), Error> {
    let cfg = load_config(args)?;
    let v = validate_stage(&cfg)?;
    print_validation(&v);
    let out = resolve_output_dir(&cfg);
    std::fs::create_dir_all(&out)?;
    std::fs::write(out.join("config.txt"), cfg.to_text())?;
    Ok((cfg, v, out))
}

fn snapshots_for(
    args: &SnapshotArgs,
    cfg: &RunConfig,
    v: &Validation,
) -> Result<Vec<EnsembleSnapshot>, Error> {
    match &args.snapshots {
        Some(path) => read_snapshots_csv(path, cfg.nu, &v.model.subspace.stokes_diagonal()),
        None => Ok(simulate_stage(cfg, &v.model)?.snapshots),
    }
}

fn write_fields(dir: &Path, prefix: &str, fields: &[DensityGrid]) -> Result<(), Error> {
    std::fs::create_dir_all(dir)?;
    for (i, f) in fields.iter().enumerate() {
        f.write(&dir.join(format!("{prefix}_{i:02}.csv")))?;
    }
    Ok(())
}

fn run(command: Command) -> anyhow::Result<u8> {
    match command {
        Command::Validate(args) => {
            let cfg = load_config(&args)?;
            let v = nsfp_core::config::validate(&cfg)?;
            print_validation(&v);
            v.enforce(cfg.force)?;
            if !v.passed() {
                eprintln!("WARNING: assumption checks failed; accepted because --force is set");
            }
            Ok(0)
        }
        Command::Simulate(args) => {
            let (cfg, v, out) = prepare(&args)?;
            let ens = simulate_stage(&cfg, &v.model)?;
            write_snapshots_csv(&out.join("snapshots.csv"), &ens.snapshots)?;
            let mut rows = Vec::new();
            for s in &ens.snapshots {
                for &p in &s.tracked_p {
                    let m = nsfp_core::sde::moment_monitor(s, p)?;
                    rows.push(
                        json!({"t": s.time, "p": p, "value": m.value, "std_error": m.std_error}),
                    );
                }
            }
            let body = json!({
                "moments": rows,
                "dropped_members": ens.dropped_members,
                "warnings": ens.warnings,
            });
            std::fs::write(
                out.join("moments.json"),
                serde_json::to_string_pretty(&body)?,
            )?;
            println!("wrote {}", out.display());
            Ok(0)
        }
        Command::Density(args) => {
            let (cfg, v, out) = prepare(&args.config)?;
            let snaps = snapshots_for(&args, &cfg, &v)?;
            let densities = density_stage(&cfg, &snaps)?;
            write_fields(&out.join("density"), "density", &densities)?;
            for f in &densities {
                println!(
                    "t = {}: max {:.6e}, mass {:.6}",
                    f.time,
                    f.max_value(),
                    f.mass()
                );
            }
            Ok(0)
        }
        Command::Drift(args) => {
            let (cfg, v, out) = prepare(&args.config)?;
            let snaps = snapshots_for(&args, &cfg, &v)?;
            let densities = density_stage(&cfg, &snaps)?;
            let drifts = drift_stage(&cfg, &snaps, &densities)?;
            let dir = out.join("drift");
            std::fs::create_dir_all(&dir)?;
            let mut rows = Vec::new();
            for (i, (f, g)) in densities.iter().zip(&drifts).enumerate() {
                g.write(&dir.join(format!("drift_{i:02}.csv")))?;
                for &p in &cfg.tracked_moments() {
                    let m = moment_g(g, f, p)?;
                    rows.push(json!({"t": f.time, "p": p, "value": m.value, "masked_mass": m.masked_mass}));
                }
            }
            std::fs::write(out.join("g_p.json"), serde_json::to_string_pretty(&rows)?)?;
            println!("{}", serde_json::to_string_pretty(&rows)?);
            Ok(0)
        }
        Command::SolveFp(args) => {
            let (cfg, v, out) = prepare(&args.config)?;
            let snaps = snapshots_for(&args, &cfg, &v)?;
            let c = fp_stage(&cfg, &v.model, &snaps)?;
            write_fields(&out.join("fokker_planck"), "fp", &c.fp)?;
            write_fields(&out.join("fokker_planck"), "kde", &c.kde)?;
            let mut csv = String::from("t,l1\n");
            for (f, l1) in c.fp.iter().zip(&c.l1) {
                csv.push_str(&format!("{},{}\n", f.time, l1));
                println!("t = {}: L1(FP, KDE) = {:.4e}", f.time, l1);
            }
            std::fs::write(out.join("fp_vs_kde.csv"), csv)?;
            Ok(0)
        }
        Command::Besov {
            density,
            s,
            p,
            q,
            n,
            holder,
        } => {
            let f = GridFunction::from(&DensityGrid::read(&density)?);
            let body = match holder {
                Some(alpha) => json!({"holder_norm": holder_norm(&f, alpha)?, "alpha": alpha}),
                None => {
                    let est = besov_seminorm(&f, &BesovParams::new(s, p, q, n)?);
                    json!({
                        "seminorm": est.value,
                        "excluded_mass": est.excluded_mass,
                        "argmax_h": est.argmax_h,
                        "s": s, "p": fmt_inf(p), "q": fmt_inf(q), "n": n,
                    })
                }
            };
            println!("{}", serde_json::to_string_pretty(&body)?);
            Ok(0)
        }
        Command::Bootstrap { d, p, alpha0 } => {
            let seq = bootstrap_exponents(d, p, alpha0)?;
            println!(
                "{}",
                serde_json::to_string_pretty(
                    &json!({"d": d, "p": p, "alpha0": alpha0, "steps": seq.len() - 1, "sequence": seq})
                )?
            );
            Ok(0)
        }
        Command::Counterexample {
            k_window,
            per_unit,
            output,
        } => {
            let out = resolve_output_dir(&RunConfig {
                output_dir: output,
                ..RunConfig::default()
            });
            std::fs::create_dir_all(&out)?;
            let grid = counterexample_grid(k_window, per_unit)?;
            let (joint, marginal) = counterexample_density(k_window, &grid)?;
            write_grid_function(&out.join("joint.csv"), &joint)?;
            write_grid_function(&out.join("marginal.csv"), &marginal)?;
            let body = json!({
                "k_window": k_window,
                "joint_max": joint.sup_norm(),
                "marginal_max": marginal.sup_norm(),
            });
            println!("{}", serde_json::to_string_pretty(&body)?);
            Ok(0)
        }
        Command::Report { config, from, emit } => {
            let report = match from {
                Some(path) => RunReport::read(&path)?,
                None => {
                    let cfg = load_config(&config)?;
                    let out = resolve_output_dir(&cfg);
                    let r = run_pipeline(&cfg, &out)?;
                    eprintln!("wrote {}", out.join("report.json").display());
                    r
                }
            };
            match emit {
                Some(name) => print!("{}", emit_plot_data(&report, &name)?),
                None => print_summary(&report),
            }
            Ok(0)
        }
        Command::Replay { report, output } => {
            let out = resolve_output_dir(&RunConfig {
                output_dir: output,
                ..RunConfig::default()
            });
            let outcome = replay(&report, &out)?;
            if outcome.matches {
                println!("replay matches {}", report.display());
                Ok(0)
            } else {
                println!("replay differs from {}:", report.display());
                for d in &outcome.differences {
                    println!("  {d}");
                }
                Ok(EXIT_REPLAY_MISMATCH)
            }
        }
    }
}

fn fmt_inf(x: f64) -> serde_json::Value {
    if x.is_finite() {
        json!(x)
    } else {
        json!("inf")
    }
}

fn write_grid_function(path: &Path, f: &GridFunction) -> Result<(), Error> {
    let d = f.grid.dim();
    let mut s: String = (1..=d).map(|i| format!("x_{i},")).collect();
    s.push_str("value\n");
    for (i, v) in f.values.iter().enumerate() {
        let c = f.grid.coords(i);
        for x in &c[..d] {
            s.push_str(&format!("{x},"));
        }
        s.push_str(&format!("{v}\n"));
    }
    std::fs::write(path, s)?;
    Ok(())
}

fn print_summary(r: &RunReport) {
    println!(
        "config hash {}  seed {}",
        r.provenance.config_hash, r.provenance.seed
    );
    for c in &r.assumptions {
        println!("[{}] {}", if c.pass { "PASS" } else { "FAIL" }, c.name);
    }
    for s in &r.main_theorem_statistic {
        println!("main theorem statistic alpha={}: {:.6e}", s.alpha, s.value);
    }
    for f in &r.fp_vs_kde {
        println!("L1(FP, KDE) at t={}: {:.4e}", f.t, f.l1);
    }
    for s in &r.stationary {
        println!(
            "stationary residual on [{}, {}]: {:.4e}",
            s.t_from, s.t_to, s.residual
        );
    }
    for w in &r.warnings {
        eprintln!("warning: {w}");
    }
}
