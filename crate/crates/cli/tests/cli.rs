use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use bohmstab_cli::output::{read_numeric_rows, CSV_VERSION_LINE};
use bohmstab_cli::ExperimentConfig;

fn bohmstab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bohmstab"))
        .args(args)
        .arg("--out-dir")
        .arg(dir)
        .env_remove("BOHMSTAB_SEED")
        .env_remove("BOHMSTAB_CONFIG")
        .env_remove("BOHMSTAB_THREADS")
        .env_remove("BOHMSTAB_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn ok(out: Output) -> Output {
    assert!(
        out.status.success(),
        "status {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read(path: &Path) -> Vec<u8> {
    fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn trajectory_csv_has_versioned_header_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    ok(bohmstab(dir.path(), &["trajectory", "--t-end", "1", "--v0", "-0.25"]));
    let text = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(CSV_VERSION_LINE));
    assert_eq!(lines.next(), Some("t,x,p"));
    let rows = read_numeric_rows(&dir.path().join("trajectory.csv"), 3).unwrap();
    assert_eq!(rows.len(), 1001);
    assert_eq!(rows[0], vec![0.0, 1.0, -0.25]);

    let side: serde_json::Value = serde_json::from_slice(&read(&dir.path().join("trajectory.json"))).unwrap();
    assert_eq!(side["command"], "trajectory");
    assert_eq!(side["seed"], 0);
    assert_eq!(side["csv_schema"], "bohmstab-csv v1");
    assert_eq!(side["outputs"][0], "trajectory.csv");
    assert_eq!(side["config"]["trajectory"]["v0"], -0.25);
}

#[test]
fn out_flag_renames_csv_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    ok(bohmstab(
        dir.path(),
        &["trajectory", "--t-end", "0.1", "--out", "run.csv"],
    ));
    assert!(dir.path().join("run.csv").exists());
    assert!(dir.path().join("run.json").exists());
}

#[test]
fn ensemble_output_is_byte_identical_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "ensemble",
        "--model",
        "superposition:3",
        "--n",
        "3000",
        "--t-end",
        "0.5",
        "--seed",
        "11",
    ];
    let mut runs = Vec::new();
    for threads in ["1", "1", "3"] {
        let mut a = args.to_vec();
        a.extend(["--threads", threads]);
        ok(bohmstab(dir.path(), &a));
        runs.push((
            read(&dir.path().join("ensemble.csv")),
            read(&dir.path().join("ensemble.json")),
        ));
    }
    assert!(runs[0] == runs[1], "repeat run differs");
    assert!(runs[0] == runs[2], "thread count changes output");

    ok(bohmstab(
        dir.path(),
        &[
            "ensemble",
            "--model",
            "superposition:3",
            "--n",
            "3000",
            "--t-end",
            "0.5",
            "--seed",
            "12",
        ],
    ));
    assert_ne!(read(&dir.path().join("ensemble.csv")), runs[0].0);
}

#[test]
fn relax_output_is_byte_identical_across_threads() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "relax",
        "--n",
        "4000",
        "--grid",
        "-6,6,8,-6,6,8",
        "--times",
        "0:1:2",
        "--model",
        "superposition:2",
    ];
    let mut runs = Vec::new();
    for threads in ["1", "4"] {
        let mut a = args.to_vec();
        a.extend(["--threads", threads]);
        ok(bohmstab(dir.path(), &a));
        runs.push((
            read(&dir.path().join("relax.csv")),
            read(&dir.path().join("relax.json")),
        ));
    }
    assert!(runs[0] == runs[1]);
    let text = String::from_utf8(runs[0].0.clone()).unwrap();
    assert!(text.starts_with(&format!("{CSV_VERSION_LINE}\nt,hbar,hbar_floor,out_of_range_mass\n")));
    assert_eq!(read_numeric_rows(&dir.path().join("relax.csv"), 4).unwrap().len(), 3);
}

#[test]
fn environment_overrides_config_and_flags_override_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    fs::write(&cfg, "seed = 3\n[ensemble]\nn = 10\nt_end = 0.0\n").unwrap();
    let run = |envs: &[(&str, &str)], extra: &[&str]| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_bohmstab"));
        cmd.arg("ensemble").args(extra).arg("--dump-config");
        cmd.env_remove("BOHMSTAB_SEED")
            .env_remove("BOHMSTAB_OUT_DIR")
            .env("BOHMSTAB_CONFIG", &cfg);
        for (k, v) in envs {
            cmd.env(k, v);
        }
        let out = ok(cmd.output().unwrap());
        ExperimentConfig::from_toml(&String::from_utf8(out.stdout).unwrap()).unwrap()
    };
    let c = run(&[], &[]);
    assert_eq!((c.seed, c.ensemble.n), (3, 10));
    assert_eq!(run(&[("BOHMSTAB_SEED", "4")], &[]).seed, 4);
    assert_eq!(run(&[("BOHMSTAB_SEED", "4")], &["--seed", "5"]).seed, 5);
    assert_eq!(
        run(&[("BOHMSTAB_OUT_DIR", "elsewhere")], &[]).output.dir,
        Path::new("elsewhere")
    );
}

#[test]
fn dumped_config_round_trips_as_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(bohmstab(
        dir.path(),
        &["relax", "--mu", "0.5", "--times", "0:2:4", "--dump-config"],
    ));
    let text = String::from_utf8(out.stdout).unwrap();
    let cfg = dir.path().join("dumped.toml");
    fs::write(&cfg, &text).unwrap();
    let again = ok(bohmstab(
        dir.path(),
        &["relax", "--config", cfg.to_str().unwrap(), "--dump-config"],
    ));
    assert_eq!(String::from_utf8(again.stdout).unwrap(), text);
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[kernel]\nmu = 1.0\nsigma = 2.0\n").unwrap();
    let out = bohmstab(dir.path(), &["trajectory", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sigma"));
    assert!(!dir.path().join("trajectory.csv").exists());
}

#[test]
fn invalid_flag_values_fail_before_running() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["trajectory", "--mu", "-1"][..],
        &["trajectory", "--kernel", "cauchy"],
        &["ensemble", "--neq", "shifted:1"],
        &["relax", "--grid", "-6,6,2,-6,6,30"],
        &["stability", "--model", "superposition:2"],
    ] {
        let out = bohmstab(dir.path(), args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn stability_with_zero_duration_has_one_row_per_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    ok(bohmstab(dir.path(), &["stability", "--t-end", "0"]));
    let text = fs::read_to_string(dir.path().join("stability.csv")).unwrap();
    let rows: Vec<&str> = text.lines().skip(2).collect();
    assert_eq!(rows.len(), 4);
    for row in rows {
        let f: Vec<&str> = row.split(',').collect();
        assert_eq!(f[4], "1.0", "{row}");
    }
}

#[test]
fn stability_defaults_reproduce_the_packet_comparison() {
    let dir = tempfile::tempdir().unwrap();
    ok(bohmstab(dir.path(), &["stability"]));
    let side: serde_json::Value = serde_json::from_slice(&read(&dir.path().join("stability.json"))).unwrap();
    let runs = side["details"].as_array().unwrap();
    assert_eq!(runs.len(), 4);
    for r in runs {
        let max = r["max_deviation"].as_f64().unwrap();
        let last = r["final_deviation"].as_f64().unwrap();
        if r["law"].as_str().unwrap().starts_with("modified") {
            assert!(max <= 0.25 + 1e-4, "{r}");
        } else {
            assert!((last - 5.0).abs() < 1e-6, "{r}");
        }
    }
}

#[test]
fn equilibrium_launch_makes_bohm_and_debroglie_coincide() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("eq.toml");
    // the coherent packet is at rest at t = 0, so ∇S(X₀, 0) = 0
    fs::write(
        &cfg,
        "[stability]\nx0 = [1.0, 0.5]\nv0 = [0.0]\nlaws = [\"bohm\", \"debroglie\", \"modified\"]\nt_end = 5.0\n",
    )
    .unwrap();
    ok(bohmstab(dir.path(), &["stability", "--config", cfg.to_str().unwrap()]));
    let text = fs::read_to_string(dir.path().join("stability.csv")).unwrap();
    let rows = |law: &str, x0: &str| -> Vec<f64> {
        text.lines()
            .skip(2)
            .filter(|l| l.starts_with(&format!("{law},{x0},")))
            .map(|l| l.split(',').nth(4).unwrap().parse().unwrap())
            .collect()
    };
    for x0 in ["1.0", "0.5"] {
        let (b, d, m) = (rows("bohm", x0), rows("debroglie", x0), rows("modified", x0));
        assert_eq!(b.len(), 5001);
        let gap = b.iter().zip(&d).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
        assert!(gap < 1e-9, "{gap}");
        assert!(m.iter().all(|x| x.abs() <= 1.0 + 1e-9));
    }
}

#[test]
fn custom_density_file_is_read() {
    let dir = tempfile::tempdir().unwrap();
    let dens = dir.path().join("rho.csv");
    let mut text = format!("{CSV_VERSION_LINE}\nx,density\n");
    for i in 0..=200 {
        let x = -4.0 + 8.0 * i as f64 / 200.0;
        text.push_str(&format!("{x},{}\n", (-x * x).exp()));
    }
    fs::write(&dens, text).unwrap();
    let neq = format!("custom:{}", dens.display());
    ok(bohmstab(
        dir.path(),
        &["ensemble", "--n", "2000", "--t-end", "0", "--neq", &neq],
    ));
    let rows = read_numeric_rows(&dir.path().join("ensemble.csv"), 2).unwrap();
    assert_eq!(rows.len(), 2000);
    let mean: f64 = rows.iter().map(|r| r[0]).sum::<f64>() / 2000.0;
    assert!(mean.abs() < 0.1, "{mean}");
}

#[test]
fn grid_model_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let psi = dir.path().join("psi.csv");
    let model = bohmstab::WaveFunctionModel::coherent(1.0);
    let spec = bohmstab::GridSpec::new(-10.0, 10.0, 256, 1e-3).unwrap();
    let grid = bohmstab::GridSolution::from_model(&model, spec, 0.0).unwrap();
    grid.write_csv(fs::File::create(&psi).unwrap()).unwrap();
    let spec_arg = format!("grid:{}", psi.display());
    ok(bohmstab(
        dir.path(),
        &["trajectory", "--model", &spec_arg, "--t-end", "1"],
    ));
    let rows = read_numeric_rows(&dir.path().join("trajectory.csv"), 3).unwrap();
    let last = rows.last().unwrap();
    let exact = bohmstab::coherent_closed_form(1.0, 0.25, 1.0, 1.0, 1.0);
    assert!((last[1] - exact).abs() < 1e-4, "{} vs {exact}", last[1]);
}

#[test]
fn verify_quick_passes_and_reports_json() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let out = ok(bohmstab(dir.path(), &["verify", "--report", report.to_str().unwrap()]));
    assert!(String::from_utf8_lossy(&out.stdout).contains("checks passed"));
    let r: serde_json::Value = serde_json::from_slice(&read(&report)).unwrap();
    assert_eq!(r["passed"], true);
    let checks = r["checks"].as_array().unwrap();
    assert!(checks.len() >= 12);
    for c in checks {
        assert!(c["tolerance"].is_number() && c["measured"].is_number(), "{c}");
    }
}

#[test]
fn flipped_force_sign_fails_exactly_the_liouville_check() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let out = bohmstab(
        dir.path(),
        &[
            "verify",
            "--force-variant",
            "flipped-hessian",
            "--report",
            report.to_str().unwrap(),
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    let r: serde_json::Value = serde_json::from_slice(&read(&report)).unwrap();
    let failed: Vec<&str> = r["checks"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["passed"] == false)
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    assert_eq!(failed, ["liouville-gaussian"]);
}
