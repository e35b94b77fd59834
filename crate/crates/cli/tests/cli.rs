use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn gle_lab(args: &[&str], threads: usize) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gle-lab"))
        .args(args)
        .env("GLE_LAB_THREADS", threads.to_string())
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const SMALL_GRID: &str = r#"
a_values = [20.0, 40.0]
beta_values = [1.2, 1.5, 2.0]
dt = 0.05
t_final = 20.0
fit_window = [2.0, 20.0]
"#;

#[test]
fn reports_are_byte_identical_across_runs_and_threads() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "grid.toml", SMALL_GRID);
    let mut reports = Vec::new();
    for (i, threads) in [1, 1, 3].into_iter().enumerate() {
        let out = tmp.path().join(format!("run{i}"));
        let o = gle_lab(
            &["powerlaw-grid", "--config", &cfg, "--out", out.to_str().unwrap()],
            threads,
        );
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        let dir = out.join("powerlaw-grid");
        reports.push((
            fs::read(dir.join("report.csv")).unwrap(),
            fs::read(dir.join("summary.csv")).unwrap(),
        ));
    }
    assert_eq!(reports[0], reports[1]);
    assert_eq!(reports[0], reports[2]);
}

#[test]
fn simulate_ensembles_are_thread_independent() {
    let tmp = TempDir::new().unwrap();
    let mut dumps = Vec::new();
    for (i, threads) in [1, 4].into_iter().enumerate() {
        let out = tmp.path().join(format!("run{i}"));
        let o = gle_lab(
            &["simulate", "--batches", "5", "--t-final", "2", "--out", out.to_str().unwrap()],
            threads,
        );
        assert_eq!(o.status.code(), Some(0));
        let d = out.join("simulate/dumps/true");
        dumps.push((0..5).map(|b| fs::read(d.join(format!("{b}.csv"))).unwrap()).collect::<Vec<_>>());
    }
    assert_eq!(dumps[0], dumps[1]);
}

#[test]
fn empty_beta_range_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "bad.toml", "beta_values = []\n");
    let out = tmp.path().join("out");
    let o = gle_lab(&["powerlaw-grid", "--config", &cfg, "--out", out.to_str().unwrap()], 1);
    assert_eq!(o.status.code(), Some(1));
    assert!(!out.join("powerlaw-grid/report.csv").exists());
}

#[test]
fn unknown_field_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "bad.toml", "gamma = 3.0\nnoise = 1.0\n");
    let o = gle_lab(&["simulate", "--config", &cfg, "--out", tmp.path().to_str().unwrap()], 1);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn seed_override_on_deterministic_grid_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let o = gle_lab(
        &["exp-grid", "--desk-scale", "--seed", "3", "--out", tmp.path().to_str().unwrap()],
        1,
    );
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn missing_config_file_is_an_io_error() {
    let tmp = TempDir::new().unwrap();
    let missing = tmp.path().join("nope.toml");
    let o = gle_lab(
        &["simulate", "--config", missing.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()],
        1,
    );
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn simulate_writes_one_dump_per_batch() {
    let tmp = TempDir::new().unwrap();
    let o = gle_lab(&["simulate", "--batches", "2", "--out", tmp.path().to_str().unwrap()], 1);
    assert_eq!(o.status.code(), Some(0));
    let dumps = tmp.path().join("simulate/dumps/true");
    let mut names: Vec<_> = fs::read_dir(&dumps)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["0.csv", "1.csv"]);
    for dir in ["report.csv", "summary.csv", "meta.txt"] {
        assert!(tmp.path().join("simulate").join(dir).exists());
    }
}

#[test]
fn noiseless_memoryless_dump_is_exponential() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "ou.toml",
        r#"
gamma = 3.0
sigma = 0.0
dt = 0.001
t_final = 2.0
batches = 1
init_v = [1.0]

[kernel]
type = "zero"
dim = 1
"#,
    );
    let o = gle_lab(&["simulate", "--config", &cfg, "--out", tmp.path().to_str().unwrap()], 1);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(tmp.path().join("simulate/dumps/true/0.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,component_0"));
    let mut rows = 0;
    for line in lines {
        let (t, v) = line.split_once(',').unwrap();
        let (t, v): (f64, f64) = (t.parse().unwrap(), v.parse().unwrap());
        let exact = (-3.0 * t).exp();
        // Explicit Euler lags the exponential by a relative 4.5 t dt.
        assert!((v - exact).abs() <= 1e-2 * exact, "t={t}: {v} vs {exact}");
        rows += 1;
    }
    assert_eq!(rows, 2001);
}

#[test]
fn divergence_exits_2_and_still_writes_the_report() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "blowup.toml",
        r#"
gamma = 3.0
sigma = 0.0
dt = 1.0
t_final = 2000.0
batches = 1
init_v = [1.0]

[kernel]
type = "zero"
dim = 1
"#,
    );
    let o = gle_lab(&["simulate", "--config", &cfg, "--out", tmp.path().to_str().unwrap()], 1);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    let report = fs::read_to_string(tmp.path().join("simulate/report.csv")).unwrap();
    assert!(report.contains("diverged"));
}
