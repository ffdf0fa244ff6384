use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn magflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_magflow"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn shipped(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn report(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn run_shipped(name: &str, out: &Path) -> Output {
    magflow(&[
        "run",
        shipped(name).to_str().unwrap(),
        "-o",
        out.to_str().unwrap(),
        "-j",
        "2",
    ])
}

#[test]
fn hyperbolic_run_is_anosov() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_shipped("hyperbolic.toml", tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("NumericallyAnosov"));
    let json = report(tmp.path());
    assert_eq!(json["report"]["verdict"]["status"], "NumericallyAnosov");
    assert_eq!(json["tool"]["name"], "magflow");
    assert!(tmp.path().join("summary.txt").exists());
    assert!(tmp.path().join("orbit_000.csv").exists());
}

#[test]
fn torus_is_rejected_by_topology() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_shipped("torus.toml", tmp.path());
    assert_eq!(out.status.code(), Some(0));
    let json = report(tmp.path());
    assert_eq!(json["report"]["verdict"]["status"], "NotAnosov");
    assert!(json["report"]["verdict"]["reason"]
        .as_str()
        .unwrap()
        .contains("euler characteristic"));
}

#[test]
fn profile_configs_run() {
    for name in ["sine_profile.toml", "table_profile.toml"] {
        let tmp = tempfile::tempdir().unwrap();
        let out = run_shipped(name, tmp.path());
        assert_eq!(
            out.status.code(),
            Some(0),
            "{name}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        assert_eq!(
            report(tmp.path())["report"]["verdict"]["status"],
            "NumericallyAnosov",
            "{name}"
        );
    }
}

#[test]
fn sweep_finds_the_horocycle_threshold() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = shipped("horocycle_sweep.toml");
    let out = magflow(&["sweep", cfg.to_str().unwrap(), "-o", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(tmp.path().join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("parameter,verdict,min_gap,fitted_c,lhs,rhs"));
    let rows: Vec<(f64, String)> = lines
        .map(|l| {
            let mut f = l.split(',');
            (f.next().unwrap().parse().unwrap(), f.next().unwrap().to_string())
        })
        .collect();
    assert_eq!(rows.len(), 25);
    for (lambda, verdict) in rows {
        let expected = if lambda < 1.0 { "NumericallyAnosov" } else { "NotAnosov" };
        assert_eq!(verdict, expected, "lambda = {lambda}");
    }
}

#[test]
fn margin_above_the_gap_is_inconclusive() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("wide_margin.toml");
    fs::write(
        &cfg,
        "[model]\nkind = \"constant_curvature\"\ncurvature = -1.0\nmagnetic = 0.5\neuler_characteristic = -2\n\
         [tolerances]\ngap_margin = 10.0\n",
    )
    .unwrap();
    let out = magflow(&[
        "run",
        cfg.to_str().unwrap(),
        "-o",
        tmp.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(
        report(&tmp.path().join("out"))["report"]["verdict"]["status"],
        "Inconclusive"
    );
}

#[test]
fn bad_config_names_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(
        &cfg,
        "[model]\nkind = \"constant_curvature\"\ncurvature = -1.0\nmagnetic = 0.5\neuler_characteristic = -2\n\
         [ensemble]\ncount = \"many\"\n",
    )
    .unwrap();
    let out = magflow(&["run", cfg.to_str().unwrap(), "-o", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error:"), "{err}");
    assert!(err.contains("ensemble.count"), "{err}");
    assert!(!tmp.path().join("report.json").exists());
}

#[test]
fn missing_config_fails_cleanly() {
    let out = magflow(&["run", "/nonexistent/magflow.toml"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn report_does_not_depend_on_worker_count() {
    let reports: Vec<serde_json::Value> = ["1", "4"]
        .iter()
        .map(|j| {
            let tmp = tempfile::tempdir().unwrap();
            let cfg = shipped("sine_profile.toml");
            let out = magflow(&[
                "run",
                cfg.to_str().unwrap(),
                "-o",
                tmp.path().to_str().unwrap(),
                "-j",
                j,
            ]);
            assert_eq!(out.status.code(), Some(0));
            report(tmp.path())["report"].clone()
        })
        .collect();
    assert_eq!(reports[0], reports[1]);
}
