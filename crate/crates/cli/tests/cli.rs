use std::path::Path;
use std::process::{Command, Output};

fn rgibbs(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rgibbs"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

#[test]
fn spectrum_writes_eigenvalues() {
    let dir = tempfile::tempdir().unwrap();
    let o = rgibbs(&["spectrum", "--k", "5"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("eigenvalues.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);
    assert!(String::from_utf8_lossy(&o.stdout).contains("lambda_0 = 0.4208"));
}

#[test]
fn empty_config_runs_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("empty.toml");
    std::fs::write(&cfg, "seed = 3\n").unwrap();
    let out = dir.path().join("run");
    let o = rgibbs(&["run", "--config", cfg.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(0));
    assert!(out.join("manifest.json").is_file());
    let r = rgibbs(&["report", out.to_str().unwrap()], &out);
    assert_eq!(r.status.code(), Some(0));
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[[experiment]]\nid = \"x\"\nkind = \"wrong\"\n").unwrap();
    let o = rgibbs(&["run", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("kind = invariance"));
    assert_eq!(rgibbs(&["run"], dir.path()).status.code(), Some(2));
    assert_eq!(rgibbs(&["frobnicate"], dir.path()).status.code(), Some(2));
    let missing = dir.path().join("nowhere");
    assert_eq!(rgibbs(&["report", missing.to_str().unwrap()], dir.path()).status.code(), Some(2));
}

#[test]
fn sampling_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = rgibbs(&["sample", "--measure", "wiener", "--n", "20", "--intervals", "16", "--seed", "9"], out);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let read = |p: &Path| std::fs::read(p.join("ensemble.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
}

#[test]
fn small_linear_baseline_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("lin.toml");
    std::fs::write(
        &cfg,
        "seed = 1\n[[experiment]]\nid = \"lin\"\nkind = \"linear_baseline\"\nresolutions = [32, 64]\nsamples = 1000\ntimes = [0.5]\n",
    )
    .unwrap();
    let out = dir.path().join("run");
    let o = rgibbs(&["run", "--config", cfg.to_str().unwrap(), "--threads", "1"], &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(out.join("lin").join("tests.csv").is_file());
}
