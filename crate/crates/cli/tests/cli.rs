use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use batchelor_lab::output::RunManifest;

const TINY: &str = r#"
schema_version = 1
[model]
dimension = 2
kappa = 0.01
cutoff = 8
[initial]
kind = "random-shell"
radius = 2
[plan]
dt = 1e-3
seed = 3
[run]
horizon = 0.05
diag_every = 5
"#;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_batchelor-lab"));
    c.env_remove("BATCHELOR_LAB_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn all_files(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p);
            }
        }
    }
    out.sort();
    out
}

#[test]
fn zero_horizon_writes_manifest_and_initial_snapshot_only() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", &TINY.replace("horizon = 0.05", "horizon = 0.0"));
    let out = tmp.path().join("out");
    let o = run(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let names: Vec<String> =
        all_files(&out).iter().map(|p| p.strip_prefix(&out).unwrap().to_string_lossy().into_owned()).collect();
    assert_eq!(names, ["manifest.json", "snapshots/snap_0000.csv", "snapshots/snap_0000.pgm"]);
}

#[test]
fn same_config_twice_gives_identical_summaries_and_replay_matches() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", TINY);
    let mut summaries = Vec::new();
    for name in ["a", "b"] {
        let out = tmp.path().join(name);
        let o = run(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0);
        summaries.push(fs::read(out.join("summary.json")).unwrap());
    }
    assert_eq!(summaries[0], summaries[1]);

    let manifest = tmp.path().join("a/manifest.json");
    let replay = tmp.path().join("replay");
    let o = run(&["run", "--config", manifest.to_str().unwrap(), "--out", replay.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read(replay.join("summary.json")).unwrap(), summaries[0]);
    let a = RunManifest::read(&tmp.path().join("a")).unwrap();
    let r = RunManifest::read(&replay).unwrap();
    assert_eq!(a.config_hash, r.config_hash);
    assert_eq!(a.summary, r.summary);
    assert_eq!(a.files, r.files);
}

#[test]
fn outputs_stay_inside_the_output_directory_and_are_inventoried() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", TINY);
    let out = tmp.path().join("nested/out");
    assert_eq!(code(&run(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])), 0);
    let everything = all_files(tmp.path());
    assert!(everything.iter().all(|p| p.starts_with(&out) || p == &cfg), "{everything:?}");
    let m = RunManifest::read(&out).unwrap();
    let mut listed: Vec<PathBuf> = m.files.iter().map(|f| out.join(&f.path)).collect();
    listed.push(out.join("manifest.json"));
    listed.sort();
    assert_eq!(listed, all_files(&out));
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let bad = write_config(tmp.path(), "bad.toml", &TINY.replace("schema_version = 1", "schema_version = 9"));
    assert_eq!(code(&run(&["run", "--config", bad.to_str().unwrap(), "--out", out.to_str().unwrap()])), 2);
    let garbage = write_config(tmp.path(), "g.toml", "this is = = not toml");
    assert_eq!(code(&run(&["run", "--config", garbage.to_str().unwrap(), "--out", out.to_str().unwrap()])), 2);
    assert_eq!(code(&run(&["run", "--preset", "nope", "--out", out.to_str().unwrap()])), 2);
    assert_eq!(code(&run(&["run", "--preset", "desk"])), 2, "missing output directory");
    assert_eq!(code(&run(&["frobnicate"])), 2);
    let o = bin()
        .env("BATCHELOR_LAB_THREADS", "zero")
        .args(["sweep", "--config", bad.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn numerical_abort_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let text =
        TINY.replace("dt = 1e-3", "dt = 0.05\nscheme = \"euler-maruyama\"").replace("horizon = 0.05", "horizon = 5.0");
    let cfg = write_config(tmp.path(), "c.toml", &text);
    let o = run(&["run", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn sweep_reports_groups_degenerate_fits_and_empty_lists() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", &format!("{TINY}\n[sweep]\nensemble = 2\n"));
    let out = tmp.path().join("sweep");
    let o = bin()
        .env("BATCHELOR_LAB_THREADS", "2")
        .args(["sweep", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--parallel", "4"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(out.join("sweep.json")).unwrap()).unwrap();
    assert_eq!(report["groups"].as_array().unwrap().len(), 3);
    assert_eq!(report["fit"]["degenerate"], false);
    assert!(report["fit"]["fit"]["exponent"].is_number());
    for g in report["groups"].as_array().unwrap() {
        let fig = out.join(g["figure_dir"].as_str().unwrap());
        for f in ["grid.csv", "heatmap.csv", "shells.csv"] {
            assert!(fig.join(f).exists());
        }
    }

    let o = run(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        tmp.path().join("one").to_str().unwrap(),
        "--kappas",
        "0.01",
    ]);
    assert_eq!(code(&o), 0);
    let one: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("one/sweep.json")).unwrap()).unwrap();
    assert_eq!(one["fit"]["degenerate"], true);

    let empty = write_config(tmp.path(), "e.toml", &format!("{TINY}\n[sweep]\nkappas = []\n"));
    let o = run(&["sweep", "--config", empty.to_str().unwrap(), "--out", tmp.path().join("e").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn sweep_lists_failed_seeds() {
    let tmp = tempfile::tempdir().unwrap();
    let text = TINY.replace("dt = 1e-3", "dt = 5e-5\nscheme = \"euler-maruyama\"");
    let text =
        format!("{text}\n[sweep]\nkappas = [0.01, 0.04]\nensemble = 2\n[[sweep.overrides]]\nkappa = 0.04\ndt = 0.05\n");
    let text = text.replace("horizon = 0.05", "horizon = 1.0");
    let cfg = write_config(tmp.path(), "c.toml", &text);
    let out = tmp.path().join("s");
    let o = run(&["sweep", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(stderr.contains("κ=0.04 seed=3") && stderr.contains("κ=0.04 seed=4"), "{stderr}");
    let report: serde_json::Value = serde_json::from_slice(&fs::read(out.join("sweep.json")).unwrap()).unwrap();
    assert_eq!(report["failures"].as_array().unwrap().len(), 2);
    assert_eq!(report["groups"][0]["members"].as_array().unwrap().len(), 2);
    assert!(out.join("manifest.json").exists());
}

#[test]
fn check_reports_trials_and_mutations() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("c1");
    let o = run(&[
        "check",
        "--preset",
        "desk",
        "--out",
        out.to_str().unwrap(),
        "--trials",
        "1",
        "--field-trials",
        "1",
        "--max-cutoff",
        "2",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(out.join("check_report.json")).unwrap()).unwrap();
    let drift = report["checks"].as_array().unwrap().iter().find(|c| c["check"] == "drift-nonnegative-2d").unwrap();
    assert_eq!(drift["trials"], 1);

    let text = format!(
        "{TINY}\n[check]\ntrials = 20000\nfield_trials = 10\nmax_cutoff = 3\n[check.mutation]\nkind = \"sign-flip\"\ndimension = 2\nrow = 1\ncol = 2\n"
    );
    let cfg = write_config(tmp.path(), "m.toml", &text);
    let o = run(&["check", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("c2").to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(stderr.contains("noise-matrix-consistency-2d") && stderr.contains("counterexample {"), "{stderr}");
}

#[test]
fn mixing_and_lagrangian_commands() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", TINY);
    let o = run(&["mixing", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("m").to_str().unwrap()]);
    assert_eq!(code(&o), 2, "κ > 0 must be rejected");

    let text = format!(
        "{}\n[mixing]\nensemble = 2\n[lagrangian]\nparticles = 10\nhorizon = 0.5\ndt = 0.01\none_point_particles = 100\n",
        TINY.replace("kappa = 0.01", "kappa = 0.0").replace("kind = \"random-shell\"\nradius = 2", "kind = \"cos-x\"")
    );
    let cfg = write_config(tmp.path(), "z.toml", &text);
    let out = tmp.path().join("mix");
    let o = run(&["mixing", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--parallel", "2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m: serde_json::Value = serde_json::from_slice(&fs::read(out.join("mixing.json")).unwrap()).unwrap();
    assert_eq!(m["rows"].as_array().unwrap().len(), 5);
    assert!((m["cap"].as_f64().unwrap() - 2.0 * std::f64::consts::PI.powi(2)).abs() < 1e-12);

    let out = tmp.path().join("lag");
    let o = run(&["lagrangian", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let l: serde_json::Value = serde_json::from_slice(&fs::read(out.join("lagrangian.json")).unwrap()).unwrap();
    assert_eq!(l["cap_table"].as_array().unwrap().len(), 3);
    assert!(l["lambda_positive"].is_boolean());
    let traj = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert!(traj.starts_with("t,x,y,log_inv_jac_norm"));
}

#[test]
fn export_figure_data_from_a_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", TINY);
    let run_dir = tmp.path().join("r");
    assert_eq!(code(&run(&["run", "--config", cfg.to_str().unwrap(), "--out", run_dir.to_str().unwrap()])), 0);
    let fig = tmp.path().join("fig");
    let o = run(&["export-figure-data", "--from", run_dir.to_str().unwrap(), "--out", fig.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let grid = fs::read_to_string(fig.join("grid.csv")).unwrap();
    let header: Vec<&str> = grid.lines().next().unwrap().split(',').collect();
    assert_eq!(header[0], "y\\x");
    assert_eq!(header.len(), 1 + 21);
    let heat = fs::read_to_string(fig.join("heatmap.csv")).unwrap();
    assert_eq!(heat.lines().count(), 1 + 17 * 17);
    assert!(fs::read_to_string(fig.join("shells.csv")).unwrap().starts_with("radius,power"));
}
