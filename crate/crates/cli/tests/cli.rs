use std::path::Path;
use std::process::{Command, Output};

fn nsfp(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nsfp"))
        .args(args)
        .env("NSFP_OUTPUT_ROOT", root)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: &[&str] = &[
    "--ensemble-size",
    "1000",
    "--horizon",
    "0.5",
    "--set",
    "snapshot_times=0.1,0.5",
    "--set",
    "kde_nodes=61",
    "--set",
    "fp_nodes=121",
    "--set",
    "fp_half_width=3",
];

fn with_small<'a>(head: &[&'a str]) -> Vec<&'a str> {
    let mut v = head.to_vec();
    v.extend_from_slice(SMALL);
    v
}

#[test]
fn validate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    for preset in ["ou-linear", "n1-pair", "n2-d1"] {
        let o = nsfp(dir.path(), &["validate", "--preset", preset]);
        assert_eq!(code(&o), 0, "{preset}: {}", stderr(&o));
        assert!(stdout(&o).contains("[PASS] lattice_generation"));
    }
    let o = nsfp(dir.path(), &["validate", "--preset", "degenerate-line"]);
    assert_eq!(code(&o), 2);
    assert!(stdout(&o).contains("[FAIL] lattice_generation"));
    let o = nsfp(
        dir.path(),
        &["validate", "--preset", "degenerate-line", "--force"],
    );
    assert_eq!(code(&o), 0);
    assert!(stderr(&o).contains("WARNING"));
}

#[test]
fn zero_noise_on_f_is_a_validation_failure() {
    let dir = tempfile::tempdir().unwrap();
    let o = nsfp(dir.path(), &["validate", "--set", "noise_modes=1,0,0:1=0"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("non-singular matrix"), "{}", stderr(&o));
}

#[test]
fn config_file_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# test\nnu = 0.5\nviscosity = 1\n").unwrap();
    let o = nsfp(dir.path(), &["validate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
    let o = nsfp(dir.path(), &["validate", "--set", "nu=abc"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn bootstrap_sequence() {
    let dir = tempfile::tempdir().unwrap();
    let o = nsfp(
        dir.path(),
        &["bootstrap", "--d", "2", "--p", "1.5", "--alpha0", "5"],
    );
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["steps"], 4);
    assert_eq!(v["sequence"][4], 1.0);
    let o = nsfp(
        dir.path(),
        &["bootstrap", "--d", "2", "--p", "2.5", "--alpha0", "5"],
    );
    assert_eq!(code(&o), 2);
}

#[test]
fn counterexample_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let mut maxima = Vec::new();
    for k in ["2", "4"] {
        let out = format!("ce{k}");
        let o = nsfp(
            dir.path(),
            &[
                "counterexample",
                "--k-window",
                k,
                "--per-unit",
                "8",
                "--output",
                &out,
            ],
        );
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
        maxima.push((
            v["joint_max"].as_f64().unwrap(),
            v["marginal_max"].as_f64().unwrap(),
        ));
        assert!(dir.path().join(&out).join("joint.csv").exists());
        assert!(dir.path().join(&out).join("marginal.csv").exists());
    }
    assert_eq!(maxima[0].0, maxima[1].0);
    assert!(maxima[1].1 > maxima[0].1);
}

#[test]
fn report_emit_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    let o = nsfp(dir.path(), &with_small(&["report", "--output", "run"]));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report = dir.path().join("run/report.json");
    assert!(report.exists());
    let rp = report.to_str().unwrap();

    let o = nsfp(
        dir.path(),
        &["report", "--from", rp, "--emit", "main_theorem"],
    );
    assert_eq!(code(&o), 0);
    let csv = stdout(&o);
    assert!(csv.starts_with("t,alpha,value\n"));
    assert_eq!(csv.lines().count(), 1 + 2 * 3);

    let o = nsfp(dir.path(), &["report", "--from", rp, "--emit", "bogus"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("kernel_bounds"));

    let o = nsfp(dir.path(), &["replay", rp, "--output", "again"]);
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));

    let text = std::fs::read_to_string(&report).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["moments"][0]["value"] = serde_json::json!(123.0);
    let tampered = dir.path().join("tampered.json");
    std::fs::write(&tampered, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    let o = nsfp(
        dir.path(),
        &["replay", tampered.to_str().unwrap(), "--output", "third"],
    );
    assert_eq!(code(&o), 4);
    assert!(stdout(&o).contains("moments[0].value"), "{}", stdout(&o));
}

#[test]
fn numerical_failure_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = with_small(&["solve-fp", "--output", "bad"]);
    args.extend(["--set", "fp_dt=0.00001"]);
    let o = nsfp(dir.path(), &args);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("fokker-planck"));
}

#[test]
fn staged_subcommands_share_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let o = nsfp(dir.path(), &with_small(&["simulate", "--output", "sim"]));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let snaps = dir.path().join("sim/snapshots.csv");
    assert!(snaps.exists());
    assert!(dir.path().join("sim/moments.json").exists());
    let sp = snaps.to_str().unwrap();

    let mut args = with_small(&["density", "--output", "dens", "--snapshots", sp]);
    let o = nsfp(dir.path(), &args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let density = dir.path().join("dens/density/density_01.csv");
    assert!(density.exists());

    args[0] = "drift";
    let o = nsfp(dir.path(), &args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(dir.path().join("dens/drift/drift_00.csv").exists());

    args[0] = "solve-fp";
    let o = nsfp(dir.path(), &args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(dir.path().join("dens/fp_vs_kde.csv").exists());

    let o = nsfp(
        dir.path(),
        &["besov", "--density", density.to_str().unwrap()],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["seminorm"].as_f64().unwrap() > 0.0);
    let o = nsfp(
        dir.path(),
        &[
            "besov",
            "--density",
            density.to_str().unwrap(),
            "--holder",
            "0.5",
        ],
    );
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("holder_norm"));
}
