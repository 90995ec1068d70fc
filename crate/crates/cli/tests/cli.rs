//! End-to-end runs of the binary on tiny desk-scale settings.

use std::path::Path;
use std::process::{Command, Output};

const TINY: [&str; 8] = [
    "--set",
    "agent.episodes=2",
    "--set",
    "env.steps_per_episode=15",
    "--set",
    "baselines.random_samples=30",
    "--set",
    "agent.batch_size=8",
];

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hris-isac"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_tiny(cmd: &str, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd];
    args.extend(TINY);
    args.extend(extra);
    args.extend(["--out", out.to_str().unwrap()]);
    run(&args)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn train_writes_artifacts_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let o = run_tiny("train", d, &["--seed", "4"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let ta = std::fs::read(a.join("telemetry.csv")).unwrap();
    assert_eq!(ta, std::fs::read(b.join("telemetry.csv")).unwrap());
    let header = String::from_utf8_lossy(&ta)
        .lines()
        .next()
        .unwrap()
        .to_owned();
    assert!(header.starts_with("config_hash,seed,scheme"));
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(a.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 4);
    assert!(a.join("config.toml").exists());
}

#[test]
fn existing_outputs_need_force() {
    let dir = tempfile::tempdir().unwrap();
    let extra = ["--scheme", "random", "--seed", "1"];
    assert!(run_tiny("train", dir.path(), &extra).status.success());
    let again = run_tiny("train", dir.path(), &extra);
    assert!(!again.status.success());
    assert!(stderr(&again).contains("--force"));
    let mut forced = extra.to_vec();
    forced.push("--force");
    assert!(run_tiny("train", dir.path(), &forced).status.success());
}

#[test]
fn sweeps_and_plots_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_tiny(
        "sweep-power",
        dir.path(),
        &[
            "--scheme", "random", "--scheme", "greedy", "--seed", "1", "--seed", "2",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = std::fs::read_to_string(dir.path().join("power_sweep.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 3 * 2 * 2);
    let o = run_tiny(
        "sweep-elements",
        dir.path(),
        &["--scheme", "random", "--seed", "1"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = std::fs::read_to_string(dir.path().join("elements_sweep.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 3 * 3);
    for (csv, kind) in [
        ("power_sweep.csv", "power"),
        ("elements_sweep.csv", "elements"),
    ] {
        let path = dir.path().join(csv);
        let o = run(&["plot", path.to_str().unwrap(), "--kind", kind]);
        assert!(o.status.success(), "{}", stderr(&o));
        let svg = std::fs::read_to_string(path.with_extension("svg")).unwrap();
        assert!(svg.starts_with("<svg"));
    }
}

#[test]
fn plot_rejects_empty_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.csv");
    std::fs::write(&path, "").unwrap();
    let o = run(&["plot", path.to_str().unwrap(), "--kind", "power"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("csv"));
}

#[test]
fn config_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[system]\nfrequency_hz = 1.0\n").unwrap();
    let o = run(&["train", "--config", path.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("absorption_per_m"), "{}", stderr(&o));
    let o = run(&["train", "--set", "budgets.nope=1"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("budgets.nope"));
}

#[test]
fn shipped_configs_load() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["desk.toml", "paper.toml"] {
        let dir = tempfile::tempdir().unwrap();
        let cfg = root.join(name);
        let o = run(&[
            "train",
            "--config",
            cfg.to_str().unwrap(),
            "--scheme",
            "random",
            "--set",
            "baselines.random_samples=2",
            "--out",
            dir.path().to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{name}: {}", stderr(&o));
    }
}

#[test]
fn verify_passes() {
    let o = run(&["verify"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let out = String::from_utf8_lossy(&o.stdout);
    assert_eq!(out.lines().filter(|l| l.starts_with("PASS")).count(), 7);
}
