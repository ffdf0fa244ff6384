//! TOML run configuration.
//!
//! ```toml
//! [model]
//! kind = "constant_curvature"
//! curvature = -1.0
//! magnetic = 0.5
//! euler_characteristic = -2
//!
//! [ensemble]
//! count = 64
//!
//! [sweep]
//! parameter = "lambda"
//! start = 0.2
//! stop = 1.4
//! step = 0.05
//! ```
//!
//! Every section except `[model]` is optional; see the field defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::anosov::{Analyses, AnosovOptions, EnsembleSpec};
use crate::error::{Error, Result};
use crate::flow::{CurvatureProfile, FourierSeries, FourierTerm};
use crate::geometry::{FourierMode2d, SurfaceModel};
use crate::green::GreenOptions;
use crate::jacobi::JacobiOptions;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    ConstantCurvature {
        curvature: f64,
        #[serde(default)]
        magnetic: f64,
        euler_characteristic: i64,
        area: Option<f64>,
    },
    ConformalTorus {
        #[serde(default = "unit_periods")]
        periods: [f64; 2],
        #[serde(default)]
        phi: Vec<FourierMode2d>,
        #[serde(default)]
        b: Vec<FourierMode2d>,
    },
    AbstractProfile {
        profile: ProfileSpec,
        euler_characteristic: Option<i64>,
        area: Option<f64>,
    },
}

fn unit_periods() -> [f64; 2] {
    [1.0, 1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileSpec {
    Constant {
        value: f64,
    },
    Fourier {
        #[serde(default)]
        constant: f64,
        #[serde(default)]
        terms: Vec<FourierTerm>,
        k_bound: Option<f64>,
    },
    /// Inline `knots`/`values`, or a two-column `file` (relative to the
    /// config file).
    Table {
        knots: Option<Vec<f64>>,
        values: Option<Vec<f64>>,
        file: Option<PathBuf>,
        period: Option<f64>,
        k_bound: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleSection {
    pub count: usize,
    pub seed: u64,
    pub horizon: f64,
    pub spacing: f64,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        let d = EnsembleSpec::default();
        EnsembleSection {
            count: d.count,
            seed: d.seed,
            horizon: d.horizon,
            spacing: d.spacing,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Orbit integration.
    pub integration: f64,
    pub jacobi: f64,
    /// Convergence of the Green slope schedule.
    pub green: f64,
    pub gap_margin: f64,
    pub r0: f64,
    pub r_cap: f64,
    pub witness_window: f64,
    pub witness_bound: f64,
    pub contraction_window: f64,
    pub negativity_eps: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        let a = AnosovOptions::default();
        Tolerances {
            integration: EnsembleSpec::default().orbit_tol,
            jacobi: a.green.jacobi.tol,
            green: a.green.tol,
            gap_margin: a.gap_margin,
            r0: a.green.r0,
            r_cap: a.green.r_cap,
            witness_window: a.witness_window,
            witness_bound: a.witness_bound,
            contraction_window: a.contraction_window,
            negativity_eps: a.negativity_eps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysesSection {
    pub inequality: bool,
    pub conjugate: bool,
    pub gaps: bool,
    pub contraction: bool,
    pub negativity: bool,
}

impl Default for AnalysesSection {
    fn default() -> Self {
        AnalysesSection {
            inequality: true,
            conjugate: true,
            gaps: true,
            contraction: true,
            negativity: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default = "default_parameter")]
    pub parameter: String,
    pub grid: Option<Vec<f64>>,
    pub start: Option<f64>,
    pub stop: Option<f64>,
    pub step: Option<f64>,
}

fn default_parameter() -> String {
    "lambda".into()
}

const MAX_SWEEP_POINTS: usize = 100_000;

impl SweepSpec {
    /// The grid, either listed or generated from `start`, `stop`, `step`.
    pub fn points(&self) -> Result<Vec<f64>> {
        let pts = match (&self.grid, self.start, self.stop, self.step) {
            (Some(g), None, None, None) => g.clone(),
            (None, Some(a), Some(b), Some(h)) => {
                if !(a.is_finite() && b.is_finite() && h.is_finite()) {
                    return Err(Error::config("sweep.step", "start, stop and step must be finite"));
                }
                if h == 0.0 || (b - a) * h < 0.0 {
                    return Err(Error::config(
                        "sweep.step",
                        "step must be nonzero and point from start to stop",
                    ));
                }
                let n = ((b - a) / h + 1e-9).floor();
                if n >= MAX_SWEEP_POINTS as f64 {
                    return Err(Error::config("sweep.step", "grid has too many points"));
                }
                // snap away accumulated binary noise so 0.2 + 2·0.05 reads as 0.3
                (0..=n as usize)
                    .map(|i| ((a + i as f64 * h) * 1e12).round() / 1e12)
                    .collect()
            }
            (Some(_), ..) => {
                return Err(Error::config(
                    "sweep.grid",
                    "give either grid or start/stop/step, not both",
                ))
            }
            _ => return Err(Error::config("sweep", "needs grid or all of start, stop, step")),
        };
        if pts.is_empty() {
            return Err(Error::config("sweep.grid", "grid is empty"));
        }
        if pts.iter().any(|x| !x.is_finite()) {
            return Err(Error::config("sweep.grid", "grid values must be finite"));
        }
        if pts.len() > MAX_SWEEP_POINTS {
            return Err(Error::config("sweep.grid", "grid has too many points"));
        }
        let increasing = pts.windows(2).all(|w| w[1] > w[0]);
        let decreasing = pts.windows(2).all(|w| w[1] < w[0]);
        if !(increasing || decreasing) {
            return Err(Error::config("sweep.grid", "grid must be strictly monotone"));
        }
        Ok(pts)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub directory: PathBuf,
    pub workers: Option<usize>,
    pub orbit_csv: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            directory: PathBuf::from("magflow-out"),
            workers: None,
            orbit_csv: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    #[serde(default)]
    pub ensemble: EnsembleSection,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub analyses: AnalysesSection,
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub output: OutputSection,
    /// Directory that relative table paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// Dotted key of the assignment at byte `offset`, from the nearest
/// preceding table header and the left-hand side of the line.
fn key_at(src: &str, offset: usize) -> String {
    let offset = offset.min(src.len());
    let line_start = src[..offset].rfind('\n').map_or(0, |i| i + 1);
    let line_end = src[offset..].find('\n').map_or(src.len(), |i| offset + i);
    let line = src[line_start..line_end].trim();
    let section = src[..line_start]
        .lines()
        .rev()
        .map(str::trim)
        .find(|l| l.starts_with('['))
        .map(|l| l.trim_matches(|c| c == '[' || c == ']').trim().to_string());
    if line.starts_with('[') {
        return line.trim_matches(|c| c == '[' || c == ']').trim().to_string();
    }
    let lhs = line.split('=').next().unwrap_or("").trim().trim_matches('"');
    match (section, lhs.is_empty()) {
        (Some(s), false) => format!("{s}.{lhs}"),
        (Some(s), true) => s,
        (None, false) => lhs.to_string(),
        (None, true) => "<root>".into(),
    }
}

fn positive(key: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(
            key,
            format!("must be finite and strictly positive, got {v}"),
        ))
    }
}

impl RunConfig {
    /// Parses and validates a configuration. Table files are resolved
    /// against the current directory.
    pub fn from_toml_str(src: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(src).map_err(|e| {
            let key = e.span().map_or_else(|| "<root>".to_string(), |s| key_at(src, s.start));
            Error::config(key, e.message().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml_str(&src)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.ensemble;
        if e.count == 0 {
            return Err(Error::config("ensemble.count", "must be at least 1"));
        }
        positive("ensemble.horizon", e.horizon)?;
        positive("ensemble.spacing", e.spacing)?;
        if e.spacing > e.horizon {
            return Err(Error::config("ensemble.spacing", "must not exceed the horizon"));
        }
        let t = &self.tolerances;
        for (key, v) in [
            ("tolerances.integration", t.integration),
            ("tolerances.jacobi", t.jacobi),
            ("tolerances.green", t.green),
            ("tolerances.gap_margin", t.gap_margin),
            ("tolerances.r0", t.r0),
            ("tolerances.r_cap", t.r_cap),
            ("tolerances.witness_window", t.witness_window),
            ("tolerances.witness_bound", t.witness_bound),
            ("tolerances.contraction_window", t.contraction_window),
            ("tolerances.negativity_eps", t.negativity_eps),
        ] {
            positive(key, v)?;
        }
        if t.r_cap < t.r0 {
            return Err(Error::config("tolerances.r_cap", "must be at least r0"));
        }
        if t.contraction_window <= 1.0 {
            return Err(Error::config("tolerances.contraction_window", "must exceed 1"));
        }
        if let Some(s) = &self.sweep {
            if s.parameter != "lambda" {
                return Err(Error::config(
                    "sweep.parameter",
                    format!("unsupported parameter {:?}; expected \"lambda\"", s.parameter),
                ));
            }
            s.points()?;
        }
        if self.output.workers == Some(0) {
            return Err(Error::config("output.workers", "must be at least 1"));
        }
        if let ModelSpec::ConformalTorus { periods, .. } = &self.model {
            positive("model.periods", periods[0])?;
            positive("model.periods", periods[1])?;
        }
        if let ModelSpec::AbstractProfile {
            profile: ProfileSpec::Table {
                knots, values, file, ..
            },
            ..
        } = &self.model
        {
            match (knots, values, file) {
                (Some(_), Some(_), None) | (None, None, Some(_)) => {}
                _ => {
                    return Err(Error::config(
                        "model.profile",
                        "table needs either knots and values, or file",
                    ))
                }
            }
        }
        Ok(())
    }

    pub fn build_model(&self) -> Result<SurfaceModel> {
        let model_err = |e: Error| match e {
            Error::InvalidModel(m) | Error::Domain(m) => Error::config("model", m),
            other => other,
        };
        match &self.model {
            ModelSpec::ConstantCurvature {
                curvature,
                magnetic,
                euler_characteristic,
                area,
            } => SurfaceModel::constant_curvature(*curvature, *magnetic, *euler_characteristic, *area),
            ModelSpec::ConformalTorus { periods, phi, b } => {
                SurfaceModel::conformal_torus(*periods, phi.clone(), b.clone())
            }
            ModelSpec::AbstractProfile {
                profile,
                euler_characteristic,
                area,
            } => {
                let p = self.build_profile(profile)?;
                SurfaceModel::abstract_profile(p, *euler_characteristic, *area)
            }
        }
        .map_err(model_err)
    }

    fn build_profile(&self, spec: &ProfileSpec) -> Result<CurvatureProfile> {
        let p = match spec {
            ProfileSpec::Constant { value } => CurvatureProfile::constant(*value),
            ProfileSpec::Fourier {
                constant,
                terms,
                k_bound,
            } => {
                let series = FourierSeries {
                    constant: *constant,
                    terms: terms.clone(),
                };
                match k_bound {
                    Some(k) => CurvatureProfile::fourier(series, *k)?,
                    None => CurvatureProfile::fourier_auto(series)?,
                }
            }
            ProfileSpec::Table {
                knots,
                values,
                file,
                period,
                k_bound,
            } => {
                let (k, v) = match (knots, values, file) {
                    (Some(k), Some(v), None) => (k.clone(), v.clone()),
                    (None, None, Some(f)) => {
                        let path = self.base_dir.join(f);
                        let text = std::fs::read_to_string(&path)
                            .map_err(|e| Error::config("model.profile.file", format!("{}: {e}", path.display())))?;
                        parse_profile_table(&text)?
                    }
                    _ => {
                        return Err(Error::config(
                            "model.profile",
                            "table needs either knots and values, or file",
                        ))
                    }
                };
                if k.len() != v.len() {
                    return Err(Error::config(
                        "model.profile.values",
                        "must have as many entries as knots",
                    ));
                }
                CurvatureProfile::table(k, v, *period, *k_bound)
                    .map_err(|e| Error::config("model.profile", e.to_string()))?
            }
        };
        Ok(p)
    }

    pub fn ensemble_spec(&self) -> EnsembleSpec {
        EnsembleSpec {
            count: self.ensemble.count,
            seed: self.ensemble.seed,
            horizon: self.ensemble.horizon,
            spacing: self.ensemble.spacing,
            orbit_tol: self.tolerances.integration,
        }
    }

    pub fn anosov_options(&self) -> AnosovOptions {
        let t = &self.tolerances;
        let a = &self.analyses;
        AnosovOptions {
            green: GreenOptions {
                tol: t.green,
                r0: t.r0,
                r_cap: t.r_cap,
                jacobi: JacobiOptions {
                    tol: t.jacobi,
                    ..JacobiOptions::default()
                },
                ..GreenOptions::default()
            },
            gap_margin: t.gap_margin,
            witness_window: t.witness_window,
            witness_bound: t.witness_bound,
            contraction_window: t.contraction_window,
            negativity_eps: t.negativity_eps,
            analyses: Analyses {
                inequality: a.inequality,
                conjugate: a.conjugate,
                gaps: a.gaps,
                contraction: a.contraction,
                negativity: a.negativity,
            },
            workers: None,
        }
    }
}

/// Reads `t,kappa` rows. Blank lines and `#` comments are skipped, and a
/// non-numeric first row is taken as a header.
pub fn parse_profile_table(text: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    const KEY: &str = "model.profile.file";
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let (mut knots, mut values) = (Vec::new(), Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::config(KEY, e.to_string()))?;
        let line = rec.position().map_or(i as u64 + 1, |p| p.line());
        if rec.iter().all(str::is_empty) {
            continue;
        }
        if rec.len() != 2 {
            return Err(Error::config(
                KEY,
                format!("line {line}: expected 2 columns, found {}", rec.len()),
            ));
        }
        let parsed = (rec[0].parse::<f64>(), rec[1].parse::<f64>());
        match parsed {
            (Ok(t), Ok(k)) if t.is_finite() && k.is_finite() => {
                knots.push(t);
                values.push(k);
            }
            (Ok(_), Ok(_)) => return Err(Error::config(KEY, format!("line {line}: values must be finite"))),
            _ if knots.is_empty() && i == 0 => {}
            _ => return Err(Error::config(KEY, format!("line {line}: expected two numbers"))),
        }
    }
    Ok((knots, values))
}
