//! End-to-end tests of the installed binary: argument handling, exit codes,
//! stdout contracts, and the artifact set written by `run-all`.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use anonymixer::dataio::generate_toy_telemetry;
use tempfile::tempdir;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_anonymixer"));
    // Keep the suite immune to whatever the invoking shell exports.
    cmd.env_remove("ANONYMIXER_LOG");
    cmd
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary should spawn")
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const CONFIG: &str = "\
[input]
file = telemetry.csv

[schema]
f0 = continuous
f1 = continuous
f2 = continuous
label = discrete_label

[pipeline]
algorithms = kmeans
threshold = 0.5

[kmeans]
k_min = 2
k_max = 4

[ctgan]
epochs = 30
batch_size = 50
noise_dim = 8
hidden = 32
max_modes = 2

[seeds]
root = 7
";

/// Write a small two-blob telemetry CSV plus a matching run configuration
/// into `dir`; returns the config path.
fn write_workspace(dir: &Path) -> PathBuf {
    let (data, _) = generate_toy_telemetry(21, 160, 2, 3, 16.0).unwrap();
    data.write_csv(&dir.join("telemetry.csv")).unwrap();
    let config_path = dir.join("run.ini");
    std::fs::write(&config_path, CONFIG).unwrap();
    config_path
}

#[test]
fn help_prints_usage_and_exits_zero() {
    let out = run(bin().arg("--help"));
    assert_eq!(out.status.code(), Some(0));
    let text = stdout_of(&out);
    for needle in ["Usage", "run-all", "cluster", "gen-toy", "ANONYMIXER_LOG"] {
        assert!(text.contains(needle), "--help output missing {needle:?}");
    }
}

#[test]
fn missing_config_file_exits_one_and_names_the_path() {
    let out = run(bin().args([
        "cluster",
        "--config",
        "/nonexistent/run.ini",
        "--algorithm",
        "kmeans",
    ]));
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stderr_of(&out).contains("/nonexistent/run.ini"),
        "stderr should name the missing config file: {}",
        stderr_of(&out)
    );
}

#[test]
fn run_all_writes_every_artifact() {
    let dir = tempdir().unwrap();
    let config = write_workspace(dir.path());
    let out_dir = dir.path().join("out");
    let out = run(bin().args([
        "run-all",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]));
    assert_eq!(
        out.status.code(),
        Some(0),
        "run-all failed: {}",
        stderr_of(&out)
    );
    assert!(stdout_of(&out).contains("artifacts in"));
    for name in [
        "report.json",
        "synthetic_kmeans.csv",
        "pca_real_kmeans.csv",
        "pca_real_kmeans.svg",
        "pca_synth_kmeans.csv",
        "pca_synth_kmeans.svg",
        "loss_kmeans.csv",
        "loss_kmeans.svg",
    ] {
        assert!(
            out_dir.join(name).is_file(),
            "run-all should write {name}"
        );
    }
}

#[test]
fn cluster_prints_sweep_and_hash_matching_report() {
    let dir = tempdir().unwrap();
    let config = write_workspace(dir.path());
    let out_dir = dir.path().join("out");

    let out = run(bin().args([
        "cluster",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--algorithm",
        "kmeans",
    ]));
    assert_eq!(
        out.status.code(),
        Some(0),
        "cluster failed: {}",
        stderr_of(&out)
    );
    let text = stdout_of(&out);
    assert!(text.contains("    k  silhouette"), "missing sweep table:\n{text}");
    assert!(text.contains("selected k = 2"), "missing selection line:\n{text}");
    assert!(out_dir.join("labels_kmeans.csv").is_file());

    let hash_line = text
        .lines()
        .find(|l| l.starts_with("config hash: "))
        .expect("cluster should print the config hash");
    let hash = hash_line.trim_start_matches("config hash: ").trim();
    assert_eq!(hash.len(), 64, "config hash should be a sha-256 hex digest");

    // The similarity report must pin the same configuration fingerprint.
    let out = run(bin().args([
        "run-all",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]));
    assert_eq!(out.status.code(), Some(0));
    let report = std::fs::read_to_string(out_dir.join("report.json")).unwrap();
    assert!(
        report.contains(&format!("\"config_hash\": \"{hash}\"")),
        "report.json should carry config hash {hash}"
    );
}

#[test]
fn gen_toy_writes_csv_and_prints_schema() {
    let dir = tempdir().unwrap();
    let out_dir = dir.path().join("toy");
    let out = run(bin().args([
        "gen-toy",
        "--out",
        out_dir.to_str().unwrap(),
        "--seed",
        "3",
        "--n",
        "40",
        "--k",
        "2",
        "--m",
        "3",
        "--separation",
        "8",
    ]));
    assert_eq!(out.status.code(), Some(0), "gen-toy failed: {}", stderr_of(&out));
    assert!(out_dir.join("toy.csv").is_file());
    let text = stdout_of(&out);
    assert!(text.contains("[schema]"), "gen-toy should print a schema stanza");
    assert!(text.contains("label = discrete_label"));
}

#[test]
fn swapped_k_bounds_exit_two() {
    let dir = tempdir().unwrap();
    let config = write_workspace(dir.path());
    let out = run(bin().args([
        "cluster",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
        "--algorithm",
        "kmeans",
        "--k-min",
        "6",
        "--k-max",
        "3",
    ]));
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr_of(&out));
    assert!(stderr_of(&out).starts_with("error: "));
}

#[test]
fn hopeless_dbscan_grid_exits_three() {
    let dir = tempdir().unwrap();
    let config = write_workspace(dir.path());
    let out = run(bin().args([
        "cluster",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
        "--algorithm",
        "dbscan",
        "--eps-grid",
        "0.000000001",
        "--minpts-grid",
        "12",
    ]));
    assert_eq!(out.status.code(), Some(3), "stderr: {}", stderr_of(&out));
    assert!(
        stderr_of(&out).contains("DBSCAN"),
        "stderr should explain the grid failure: {}",
        stderr_of(&out)
    );
}

#[test]
fn invalid_log_level_exits_one() {
    let dir = tempdir().unwrap();
    let out = run(bin()
        .env("ANONYMIXER_LOG", "noisy")
        .args(["gen-toy", "--out", dir.path().join("x").to_str().unwrap()]));
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stderr_of(&out).contains("ANONYMIXER_LOG"),
        "stderr should name the bad variable: {}",
        stderr_of(&out)
    );
}
