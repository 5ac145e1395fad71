use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn edgesched(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edgesched"))
        .args(args)
        .current_dir(dir)
        .env_remove("EDGESCHED_CONFIG")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn run_writes_one_row_per_service() {
    let dir = tempfile::tempdir().unwrap();
    ok(&edgesched(&["run", "--scenario", "1.5_0.4", "--scheduler", "kubedsm", "--out", "r"], dir.path()));
    let csv = fs::read_to_string(dir.path().join("r/metrics.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "scenario,scheduler,service,edge_ratio,mean_edge_ratio,stddev,migrations_intra,migrations_e2c,migrations_c2e"
    );
    assert_eq!(lines.count(), 4);
    for f in ["trace.jsonl", "plan_log.jsonl", "manifest.json"] {
        assert!(dir.path().join("r").join(f).exists(), "{f}");
    }
}

#[test]
fn unknown_scheduler_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = edgesched(&["run", "--scheduler", "fifo", "--out", "r"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("fifo"));
    assert!(!dir.path().join("r").exists());
}

#[test]
fn seeded_runs_and_manifest_replays_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &'static str| ["run", "--scheduler", "kubedsm-midmig", "--seed", "7", "--out", out];
    ok(&edgesched(&args("a"), dir.path()));
    ok(&edgesched(&args("b"), dir.path()));
    ok(&edgesched(&["run", "--manifest", "a/manifest.json", "--out", "c"], dir.path()));
    for f in ["trace.jsonl", "plan_log.jsonl", "metrics.csv", "manifest.json"] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        assert_eq!(a, fs::read(dir.path().join("b").join(f)).unwrap(), "{f}");
        assert_eq!(a, fs::read(dir.path().join("c").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn config_path_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("cfg.toml"), "[scheduler]\nm_c2e = 0\nm_er = 0\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_edgesched"))
        .args(["run", "--out", "r"])
        .current_dir(dir.path())
        .env("EDGESCHED_CONFIG", "cfg.toml")
        .output()
        .unwrap();
    ok(&out);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("r/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["run"]["config"]["scheduler"]["m_c2e"], 0);
    let trace = fs::read_to_string(dir.path().join("r/trace.jsonl")).unwrap();
    assert!(!trace.contains("\"migrated\""));
}

#[test]
fn invalid_config_fails_before_running() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "[scheduler]\nm_c2e = 500\n").unwrap();
    let out = edgesched(&["--config", "bad.toml", "run", "--out", "r"], dir.path());
    assert!(!out.status.success());
    assert!(!dir.path().join("r").exists());
}

#[test]
fn emitted_fixtures_drive_a_run() {
    let dir = tempfile::tempdir().unwrap();
    ok(&edgesched(&["emit-fixtures", "--out", "fx"], dir.path()));
    let out = edgesched(
        &[
            "--config",
            "fx/config.toml",
            "run",
            "--cluster",
            "fx/cluster.toml",
            "--scenario",
            "fx/scenario.toml",
            "--scheduler",
            "bef",
            "--out",
            "r",
        ],
        dir.path(),
    );
    ok(&out);
    assert_eq!(fs::read_to_string(dir.path().join("r/metrics.csv")).unwrap().lines().count(), 5);
}

#[test]
fn compare_pairs_every_scheduler_with_every_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = edgesched(
        &[
            "compare",
            "--scenario",
            "1.1_0.4,1.6_0.4",
            "--scheduler",
            "kubedsm,cf",
            "--seed",
            "1,2",
            "--jobs",
            "2",
            "--out",
            "c",
        ],
        dir.path(),
    );
    ok(&out);
    let csv = fs::read_to_string(dir.path().join("c/results.csv")).unwrap();
    // 2 scenarios x 2 schedulers x 2 seeds x 4 services
    assert_eq!(csv.lines().count(), 1 + 32);
    assert!(csv.lines().next().unwrap().contains("qos_preset"));
    for t in ["edge_ratio", "stddev", "radar", "migrations", "qos"] {
        assert!(dir.path().join("c/figures").join(format!("{t}.csv")).exists(), "{t}");
    }
}

#[test]
fn oracle_check_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = edgesched(&["oracle-check", "--cases", "50"], dir.path());
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains("0 count mismatches"));
}
