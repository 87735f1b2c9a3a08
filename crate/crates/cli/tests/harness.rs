//! Harness-level integration tests: CLI exit codes, output schemas,
//! determinism, and worker-count independence.

use episcale_cli::config::ConfigFile;
use episcale_cli::csvio::read_versioned;
use episcale_cli::manifest::{data_digests, RunManifest};
use episcale_cli::{dispatch, rerun_from_manifest};
use std::path::{Path, PathBuf};
use std::process::Command;

fn small_config(regime: &str) -> String {
    let (regime_extra, kernel) = match regime {
        "local" => ("beta = 0.25", ""),
        _ => (
            "",
            "[kernel]\nkind = \"constant\"\nvalue = 1.0\n",
        ),
    };
    format!(
        r#"
[model]
regime = "{regime}"
p = 1.0
q = 2.0
horizon = 1.0
{regime_extra}

{kernel}
[initial]
profile = "uniform"
assignment = "mix"
s = 0.8
i = 0.2

[run]
n = [10]
replicas = 2
snapshot_times = [0.5, 1.0]
seed = 99
grid = 16
dt = 1e-3
workers = 1
"#
    )
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("episcale-test-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.toml");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn simulate_produces_expected_files() {
    let dir = tmp_dir("simulate");
    let cfg = ConfigFile::parse(&small_config("meanfield")).unwrap();
    let resolved = cfg.resolve(None, None).unwrap();
    let out = dir.join("run");
    dispatch("simulate", &resolved, &out, false, None).unwrap();

    assert!(out.join("manifest.json").exists());
    assert!(out.join("events_n10_r000.csv").exists());
    assert!(out.join("events_n10_r001.csv").exists());
    let (cols, rows) = read_versioned(&out.join("snapshots.csv"), "snapshots").unwrap();
    assert_eq!(cols, vec!["n", "replica", "t", "individual", "x", "y", "state"]);
    // Two replicas, two snapshot times, ten individuals each.
    assert_eq!(rows.len(), 2 * 2 * 10);
    let man = RunManifest::load(&out).unwrap();
    assert_eq!(man.command, "simulate");
    assert_eq!(man.replica_seeds.len(), 2);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn same_seed_gives_identical_digests_and_worker_count_does_not_matter() {
    let dir = tmp_dir("digests");
    let cfg = ConfigFile::parse(&small_config("local")).unwrap();

    let mut digests = Vec::new();
    for (tag, workers) in [("a", 1usize), ("b", 1), ("c", 2)] {
        let resolved = cfg.resolve(None, Some(workers)).unwrap();
        let out = dir.join(tag);
        dispatch("simulate", &resolved, &out, false, None).unwrap();
        digests.push(data_digests(&out).unwrap());
    }
    assert_eq!(digests[0], digests[1], "same seed must reproduce digests");
    assert_eq!(digests[0], digests[2], "worker count must not matter");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn rerun_from_manifest_reproduces_data_files() {
    let dir = tmp_dir("rerun");
    let cfg = ConfigFile::parse(&small_config("meanfield")).unwrap();
    let resolved = cfg.resolve(None, None).unwrap();
    let first = dir.join("first");
    dispatch("simulate", &resolved, &first, false, None).unwrap();
    let second = dir.join("second");
    rerun_from_manifest(&first, &second, Some(2), false).unwrap();
    assert_eq!(
        data_digests(&first).unwrap(),
        data_digests(&second).unwrap()
    );
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn output_collision_requires_force() {
    let dir = tmp_dir("force");
    let cfg = ConfigFile::parse(&small_config("meanfield")).unwrap();
    let resolved = cfg.resolve(None, None).unwrap();
    let out = dir.join("run");
    dispatch("simulate", &resolved, &out, false, None).unwrap();
    let err = dispatch("simulate", &resolved, &out, false, None).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    dispatch("simulate", &resolved, &out, true, None).unwrap();
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn regime_mismatch_is_a_config_error() {
    let cfg = ConfigFile::parse(&small_config("local")).unwrap();
    let resolved = cfg.resolve(None, None).unwrap();
    let dir = tmp_dir("mismatch");
    let err = dispatch("solve-nonlocal", &resolved, &dir.join("x"), false, None).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    let err = dispatch("converge-meanfield", &resolved, &dir.join("y"), false, None).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn cli_binary_exit_codes() {
    let dir = tmp_dir("cli");
    let bin = env!("CARGO_BIN_EXE_episcale");

    // Bad config: unknown field -> exit 2 with a field-precise message.
    let bad = small_config("meanfield").replace("seed = 99", "seed = 99\nwat = 3");
    let bad_path = write_config(&dir, &bad);
    let output = Command::new(bin)
        .args(["simulate", "--config"])
        .arg(&bad_path)
        .arg("--out")
        .arg(dir.join("out1"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("wat"), "{stderr}");

    // Numerical failure: a grossly unstable time step -> exit 3.
    let unstable = small_config("meanfield")
        .replace("dt = 1e-3", "dt = 0.9")
        .replace("q = 2.0", "q = 4000.0");
    let unstable_path = dir.join("unstable.toml");
    std::fs::write(&unstable_path, unstable).unwrap();
    let output = Command::new(bin)
        .args(["solve-nonlocal", "--config"])
        .arg(&unstable_path)
        .arg("--out")
        .arg(dir.join("out2"))
        .output()
        .unwrap();
    assert_eq!(
        output.status.code(),
        Some(3),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );

    // Good run exits 0.
    let good_path = write_config(&dir, &small_config("meanfield"));
    let output = Command::new(bin)
        .args(["solve-nonlocal", "--config"])
        .arg(&good_path)
        .arg("--out")
        .arg(dir.join("out3"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn converge_meanfield_single_replica_report_is_well_formed() {
    // replicas = 1: stderr column must be present but empty.
    let dir = tmp_dir("single-rep");
    let text = small_config("meanfield")
        .replace("n = [10]", "n = [10, 20, 40]")
        .replace("replicas = 2", "replicas = 1");
    let cfg = ConfigFile::parse(&text).unwrap();
    let resolved = cfg.resolve(None, None).unwrap();
    let out = dir.join("run");
    dispatch("converge-meanfield", &resolved, &out, false, None).unwrap();
    let (cols, rows) = read_versioned(&out.join("convergence.csv"), "convergence").unwrap();
    let stderr_col = cols.iter().position(|c| c == "stderr").unwrap();
    assert!(!rows.is_empty());
    for row in &rows {
        assert_eq!(row[stderr_col], "", "stderr must be empty for 1 replica");
    }
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn limit_cache_round_trip() {
    let dir = tmp_dir("cache");
    let text = small_config("meanfield").replace("n = [10]", "n = [10, 20, 40]");
    let cfg = ConfigFile::parse(&text).unwrap();
    let resolved = cfg.resolve(None, None).unwrap();
    let cache = dir.join("cache");
    let out1 = dir.join("r1");
    dispatch("converge-meanfield", &resolved, &out1, false, Some(&cache)).unwrap();
    assert_eq!(std::fs::read_dir(&cache).unwrap().count(), 1);
    // Second run hits the verified cache and produces identical reports.
    let out2 = dir.join("r2");
    dispatch("converge-meanfield", &resolved, &out2, false, Some(&cache)).unwrap();
    assert_eq!(data_digests(&out1).unwrap(), data_digests(&out2).unwrap());
    std::fs::remove_dir_all(&dir).ok();
}
