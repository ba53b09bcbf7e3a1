use std::path::Path;
use std::process::{Command, Output};

fn fsi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fsi")).args(args).output().expect("spawn fsi")
}

fn write_cfg(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

const ZERO: &str = "[initial]\npreset = zero\n\n[numerics]\nt_end = 0.01\n";

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = fsi(&["run", "--config", "x.cfg", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("Usage"), "{err}");
}

#[test]
fn missing_config_flag_is_a_usage_error() {
    assert_eq!(fsi(&["run"]).status.code(), Some(2));
}

#[test]
fn help_lists_defaults() {
    let out = fsi(&["run", "--help"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("dt = 0.001"));
    assert!(text.contains("FSI_THREADS"));
}

#[test]
fn negative_dt_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "bad.cfg", "[numerics]\ndt = -0.1\n");
    let out = fsi(&["run", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dt"));
}

#[test]
fn several_kappas_outside_a_sweep_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "z.cfg", ZERO);
    let out = fsi(&["run", "--config", &cfg, "--kappa", "0.1,0.01"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn zero_run_writes_zero_series() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "z.cfg", ZERO);
    let out_dir = dir.path().join("out");
    let out = fsi(&["run", "--config", &cfg, "--out", out_dir.to_str().unwrap(), "--quiet"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());

    let csv = std::fs::read_to_string(out_dir.join("timeseries.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("# fsi-timeseries v1"));
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 11);
    for row in &rows {
        for (name, v) in header.iter().zip(row) {
            match *name {
                "step" | "t" => {}
                "min_det" => assert_eq!(*v, "1"),
                _ => assert_eq!(*v, "0", "{name}"),
            }
        }
    }
    assert!(out_dir.join("mesh.txt").exists());
    assert!(out_dir.join("timing.txt").exists());
}

#[test]
fn summary_echo_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "z.cfg", ZERO);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(fsi(&["run", "--config", &cfg, "--out", a.to_str().unwrap(), "--quiet"]).status.code(), Some(0));

    let summary = std::fs::read_to_string(a.join("summary.txt")).unwrap();
    let echo: String = summary
        .lines()
        .filter_map(|l| l.strip_prefix("#| ").or_else(|| l.strip_prefix("#|")))
        .map(|l| format!("{l}\n"))
        .collect();
    let echoed = write_cfg(dir.path(), "echo.cfg", &echo);
    assert_eq!(fsi(&["run", "--config", &echoed, "--out", b.to_str().unwrap(), "--quiet"]).status.code(), Some(0));
    for f in ["timeseries.csv", "mesh.txt"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        "t.cfg",
        "[geometry]\nh = 1/8\n\n[initial]\npreset = translating\namplitude = 0.1\n\n[numerics]\nt_end = 0.01\n",
    );
    let out_dir = dir.path().join("out");
    let mut snapshots = Vec::new();
    for _ in 0..2 {
        let out = fsi(&["run", "--config", &cfg, "--out", out_dir.to_str().unwrap(), "--quiet"]);
        assert_eq!(out.status.code(), Some(0));
        let files: Vec<Vec<u8>> = ["timeseries.csv", "summary.txt", "mesh.txt"]
            .iter()
            .map(|f| std::fs::read(out_dir.join(f)).unwrap())
            .collect();
        snapshots.push(files);
    }
    assert_eq!(snapshots[0], snapshots[1]);
}

#[test]
fn zero_data_is_compatible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "z.cfg", ZERO);
    let out_dir = dir.path().join("out");
    let out = fsi(&["check-compat", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let summary = std::fs::read_to_string(out_dir.join("summary.txt")).unwrap();
    assert!(summary.contains("verdict.compatibility = PASS"));
}

#[test]
fn sweep_on_zero_data_completes_every_kappa() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "z.cfg", &format!("{ZERO}\n[geometry]\nh = 1/8\n"));
    let out_dir = dir.path().join("out");
    let out = fsi(&["sweep-kappa", "--config", &cfg, "--out", out_dir.to_str().unwrap(), "--kappa", "0.1,0.01", "--quiet"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("kappa_0.1/timeseries.csv").exists());
    assert!(out_dir.join("kappa_0.01/summary.txt").exists());
    let summary = std::fs::read_to_string(out_dir.join("summary.txt")).unwrap();
    assert!(summary.contains("verdict.kappa_uniform_time = PASS"));
}
