//! `run` and `sweep`: classification driven by a [`RunConfig`], with
//! report files written by a single aggregator.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::anosov::{classify, AnosovReport, OrbitSeries, Verdict};
use crate::config::RunConfig;
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize)]
pub struct ToolInfo {
    pub name: &'static str,
    pub version: &'static str,
}

pub const TOOL: ToolInfo = ToolInfo {
    name: "magflow",
    version: env!("CARGO_PKG_VERSION"),
};

#[derive(Debug, Serialize)]
struct ReportFile<'a> {
    schema_version: u32,
    tool: ToolInfo,
    generated_at: String,
    config: &'a RunConfig,
    report: &'a AnosovReport,
}

/// Exit status for a verdict: 2 when inconclusive, 0 otherwise.
pub fn exit_code(v: &Verdict) -> i32 {
    match v {
        Verdict::Inconclusive(_) => 2,
        _ => 0,
    }
}

fn timestamp() -> String {
    time::OffsetDateTime::now_utc()
        .format(&time::format_description::well_known::Rfc3339)
        .unwrap_or_default()
}

fn with_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        Some(n) => Ok(rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::config("output.workers", e.to_string()))?
            .install(f)),
        None => Ok(f()),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("cannot create output directory {}: {e}", dir.display()),
        ))
    })
}

pub fn report_json(cfg: &RunConfig, report: &AnosovReport, generated_at: &str) -> Result<String> {
    let file = ReportFile {
        schema_version: SCHEMA_VERSION,
        tool: TOOL,
        generated_at: generated_at.to_string(),
        config: cfg,
        report,
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.6e}"))
}

pub fn summary_text(report: &AnosovReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "model: {}", report.model);
    if let Some(chi) = report.euler_characteristic {
        let _ = writeln!(s, "euler characteristic: {chi}");
    }
    if let Some(i) = &report.inequality {
        let _ = writeln!(
            s,
            "integral inequality: lhs = {:.9} rhs = {:.9} -> {}",
            i.lhs,
            i.rhs,
            if i.passes { "passes" } else { "fails" }
        );
    }
    let e = &report.ensemble;
    let _ = writeln!(
        s,
        "orbits: {} evaluated of {} requested, horizon {}, seed {}",
        e.evaluated, e.requested, e.horizon, e.seed
    );
    if let Some(note) = &e.note {
        let _ = writeln!(s, "  {note}");
    }
    if let Some(n) = &report.negativity {
        let _ = writeln!(
            s,
            "negativity criterion: applicable = {}, passes = {}, sampled max = {:.3e}",
            n.applicable, n.passes, n.sampled_max
        );
    }
    let _ = writeln!(s, "\n  id  conjugate      gap            conv  c              error");
    for o in &report.orbits {
        let _ = writeln!(
            s,
            "{:4}  {:13}  {:13}  {:4}  {:13}  {}",
            o.id,
            fmt_opt(o.conjugate_time),
            fmt_opt(o.gap.map(|g| g.gap)),
            o.gap.map_or("-", |g| if g.converged { "yes" } else { "no" }),
            fmt_opt(o.contraction.map(|c| c.c)),
            o.error.as_deref().unwrap_or("")
        );
    }
    let m = &report.margins;
    let _ = writeln!(
        s,
        "\nmin gap: {}  (margin {:e})\nmin contraction rate: {}",
        fmt_opt(m.min_gap),
        m.gap_margin,
        fmt_opt(m.min_contraction_rate)
    );
    if !m.unconverged_orbits.is_empty() {
        let _ = writeln!(s, "unconverged orbits: {:?}", m.unconverged_orbits);
    }
    let _ = writeln!(s, "\nverdict: {}", report.verdict);
    s
}

fn write_series(path: &Path, series: &OrbitSeries) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", series.columns.join(","))?;
    for row in &series.rows {
        let line: Vec<String> = row.iter().map(f64::to_string).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug)]
pub struct RunOutcome {
    pub report: AnosovReport,
    pub exit_code: i32,
    pub files: Vec<PathBuf>,
}

/// Classifies the configured model and writes `report.json`,
/// `summary.txt` and one `orbit_NNN.csv` per evaluated orbit.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome> {
    let model = cfg.build_model()?;
    let ens = cfg.ensemble_spec();
    let opts = cfg.anosov_options();
    let dir = &cfg.output.directory;
    create_dir(dir)?;
    log::info!("classifying {} model over {} orbits", model.kind_name(), ens.count);
    let report = with_pool(cfg.output.workers, || classify(&model, &ens, &opts))??;

    let mut files = Vec::new();
    let json = dir.join("report.json");
    fs::write(&json, report_json(cfg, &report, &timestamp())?)?;
    files.push(json);
    let summary = dir.join("summary.txt");
    fs::write(&summary, summary_text(&report))?;
    files.push(summary);
    if cfg.output.orbit_csv {
        for s in &report.series {
            let path = dir.join(format!("orbit_{:03}.csv", s.id));
            write_series(&path, s)?;
            files.push(path);
        }
    }
    log::info!("verdict: {}", report.verdict);
    Ok(RunOutcome {
        exit_code: exit_code(&report.verdict),
        report,
        files,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub parameter: f64,
    pub verdict: Verdict,
    pub min_gap: Option<f64>,
    pub fitted_c: Option<f64>,
    pub lhs: Option<f64>,
    pub rhs: Option<f64>,
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub exit_code: i32,
    pub csv: PathBuf,
}

/// Classifies the model with its magnetic intensity scaled by each grid
/// value and writes `sweep.csv`.
pub fn sweep(cfg: &RunConfig) -> Result<SweepOutcome> {
    let spec = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Error::config("sweep", "section is required for a sweep"))?;
    let points = spec.points()?;
    let base = cfg.build_model()?;
    // fail early on models that cannot be scaled
    base.with_magnetic_scaled(1.0)
        .map_err(|e| Error::config("sweep.parameter", e.to_string()))?;
    let ens = cfg.ensemble_spec();
    let opts = cfg.anosov_options();
    create_dir(&cfg.output.directory)?;

    let rows = with_pool(cfg.output.workers, || {
        points
            .par_iter()
            .map(|&lambda| -> Result<SweepRow> {
                let m = base.with_magnetic_scaled(lambda)?;
                let r = classify(&m, &ens, &opts)?;
                log::debug!("lambda = {lambda}: {}", r.verdict);
                Ok(SweepRow {
                    parameter: lambda,
                    min_gap: r.margins.min_gap,
                    fitted_c: r.margins.min_contraction_rate,
                    lhs: r.inequality.map(|i| i.lhs),
                    rhs: r.inequality.map(|i| i.rhs),
                    verdict: r.verdict,
                })
            })
            .collect::<Result<Vec<_>>>()
    })??;

    let csv = cfg.output.directory.join("sweep.csv");
    let mut w = BufWriter::new(File::create(&csv)?);
    writeln!(w, "parameter,verdict,min_gap,fitted_c,lhs,rhs")?;
    let cell = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
    for r in &rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.parameter,
            r.verdict.label(),
            cell(r.min_gap),
            cell(r.fitted_c),
            cell(r.lhs),
            cell(r.rhs)
        )?;
    }
    w.flush()?;
    let exit_code = rows.iter().map(|r| exit_code(&r.verdict)).max().unwrap_or(0);
    Ok(SweepOutcome { rows, exit_code, csv })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(dir: &Path, extra: &str) -> RunConfig {
        let src = format!(
            r#"
[model]
kind = "constant_curvature"
curvature = -1.0
magnetic = 0.5
euler_characteristic = -2
{extra}
[output]
directory = "{}"
"#,
            dir.display()
        );
        RunConfig::from_toml_str(&src).unwrap()
    }

    #[test]
    fn run_writes_files() {
        let tmp = tempfile::tempdir().unwrap();
        let out = run(&config(tmp.path(), "")).unwrap();
        assert_eq!(out.exit_code, 0);
        assert_eq!(out.report.verdict, Verdict::NumericallyAnosov);
        let json: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(tmp.path().join("report.json")).unwrap()).unwrap();
        assert_eq!(json["schema_version"], 1);
        assert_eq!(json["report"]["verdict"]["status"], "NumericallyAnosov");
        assert!(fs::read_to_string(tmp.path().join("summary.txt"))
            .unwrap()
            .contains("verdict: NumericallyAnosov"));
        let csv = fs::read_to_string(tmp.path().join("orbit_000.csv")).unwrap();
        assert!(csv.starts_with("t,kappa\n0,-0.75\n"));
    }

    #[test]
    fn single_point_sweep_matches_run() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = config(tmp.path(), "[sweep]\ngrid = [1.0]\n");
        let s = sweep(&cfg).unwrap();
        let r = run(&cfg).unwrap();
        assert_eq!(s.rows.len(), 1);
        assert_eq!(s.rows[0].verdict, r.report.verdict);
        assert_eq!(s.rows[0].min_gap, r.report.margins.min_gap);
        let text = fs::read_to_string(s.csv).unwrap();
        assert!(text.starts_with("parameter,verdict,min_gap,fitted_c,lhs,rhs\n1,NumericallyAnosov,"));
    }
}
