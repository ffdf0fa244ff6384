//! Numerical Anosov certificate over a sampled orbit ensemble.
//!
//! Each orbit contributes a curvature profile. On it we look for conjugate
//! points, measure the transversality gap `u−(0) − u+(0)`, search for a
//! bounded perpendicular Jacobi field when the gap closes, and fit the
//! contraction rate of the stable field. The verdict aggregates the orbit
//! records in orbit order.

use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::{two_sided_orbit, CurvatureProfile, OrbitOptions};
use crate::geometry::{
    integral_inequality_check, magnetic_curvature, InequalityCheck, ModelKind, SurfaceModel, UnitTangent,
};
use crate::green::{green_estimate, stable_field, GreenEstimate, GreenOptions};
use crate::jacobi::{integrate_perp, zero_field_trace, PerpJacobiState, CONJUGATE_SCAN_STEP};

/// First zero of `J_z` on `(0, horizon]`, if any.
pub fn first_conjugate_time(p: &CurvatureProfile, horizon: f64, opts: &GreenOptions) -> Result<Option<f64>> {
    if !(horizon > 0.0) {
        return Err(Error::Domain(format!(
            "conjugate scan horizon must be positive, got {horizon}"
        )));
    }
    let trace = zero_field_trace(p, horizon, &opts.jacobi)?;
    Ok(trace.first_zero(CONJUGATE_SCAN_STEP))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapRecord {
    pub gap: f64,
    pub converged: bool,
    pub u_plus0: f64,
    pub u_minus0: f64,
    pub stable_residual: Option<f64>,
    pub unstable_residual: Option<f64>,
    pub ubk_constant: f64,
}

impl From<&GreenEstimate> for GapRecord {
    fn from(e: &GreenEstimate) -> Self {
        GapRecord {
            gap: e.gap,
            converged: e.converged,
            u_plus0: e.u_plus0,
            u_minus0: e.u_minus0,
            stable_residual: e.stable.last_residual(),
            unstable_residual: e.unstable.last_residual(),
            ubk_constant: e.ubk_constant,
        }
    }
}

pub fn transversality_gap(p: &CurvatureProfile, opts: &GreenOptions) -> Result<GapRecord> {
    Ok(GapRecord::from(&green_estimate(p, opts)?))
}

/// A candidate bounded perpendicular Jacobi field.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub window: f64,
    pub sup_norm: f64,
    pub bounded: bool,
    #[serde(skip)]
    pub samples: Vec<(f64, PerpJacobiState)>,
}

/// When the gap is below `gap_tol`, follows the field with data
/// `(1, u+(0))` over `[-window, window]` (clipped to the profile domain).
pub fn bounded_jacobi_witness(
    p: &CurvatureProfile,
    gap: &GapRecord,
    window: f64,
    gap_tol: f64,
    bound: f64,
    opts: &GreenOptions,
) -> Result<Option<Witness>> {
    if gap.gap >= gap_tol {
        return Ok(None);
    }
    let (lo, hi) = p.domain();
    let w = window.min(hi).min(-lo);
    if !(w > 0.0) {
        return Err(Error::OutOfRange { t: window, lo, hi });
    }
    let start = PerpJacobiState::new(1.0, gap.u_plus0);
    let dt = 0.05;
    let mut samples = Vec::new();
    for end in [-w, w] {
        let trace = integrate_perp(p, start, (0.0, end), &opts.jacobi)?;
        let part = trace.samples(dt);
        if end < 0.0 {
            samples.extend(part.into_iter().rev());
        } else {
            samples.extend(part.into_iter().skip(1));
        }
    }
    let sup_norm = samples.iter().map(|(_, s)| s.value.abs()).fold(0.0, f64::max);
    Ok(Some(Witness {
        window: w,
        sup_norm,
        bounded: sup_norm <= bound,
        samples,
    }))
}

/// Exponential fit `‖ξ(t)‖ ≤ d e^{-ct}` of the stable field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContractionFit {
    pub c: f64,
    pub d: f64,
    pub fit_residual: f64,
    /// Time after which the fitted bound drops below `1/2`.
    pub time_to_half: Option<f64>,
    pub norm_at_window: f64,
    pub window: f64,
    pub succeeded: bool,
}

pub const MIN_CONTRACTION_RATE: f64 = 1e-3;

pub fn contraction_fit(p: &CurvatureProfile, window: f64, opts: &GreenOptions) -> Result<ContractionFit> {
    if !(window > 1.0) {
        return Err(Error::Domain(format!("contraction window must exceed 1, got {window}")));
    }
    let field = stable_field(p, 0.0, window, 0.05, opts)?;
    let norms = field.sasaki_norms();
    let pts: Vec<(f64, f64)> = field
        .times
        .iter()
        .zip(&norms)
        .filter(|(&t, _)| t >= 1.0)
        .map(|(&t, &n)| (t, n.ln()))
        .collect();
    let n = pts.len() as f64;
    let (st, sy) = pts.iter().fold((0.0, 0.0), |(a, b), &(t, y)| (a + t, b + y));
    let (mt, my) = (st / n, sy / n);
    let (sxy, sxx) = pts.iter().fold((0.0, 0.0), |(a, b), &(t, y)| {
        (a + (t - mt) * (y - my), b + (t - mt).powi(2))
    });
    let slope = sxy / sxx;
    let intercept = my - slope * mt;
    let fit_residual = (pts
        .iter()
        .map(|&(t, y)| (y - intercept - slope * t).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    let c = -slope;
    let d = field
        .times
        .iter()
        .zip(&norms)
        .map(|(&t, &nm)| nm * (c * t).exp())
        .fold(0.0, f64::max);
    let succeeded = c >= MIN_CONTRACTION_RATE && c.is_finite();
    Ok(ContractionFit {
        c,
        d,
        fit_residual,
        time_to_half: succeeded.then(|| ((2.0 * d).ln() / c).max(0.0)),
        norm_at_window: *norms.last().unwrap(),
        window,
        succeeded,
    })
}

/// `A = min |J_z(t)| / |J_z(s)|` over `1 ≤ s ≤ t ≤ window`.
pub fn growth_constant(p: &CurvatureProfile, window: f64, opts: &GreenOptions) -> Result<f64> {
    if !(window > 1.0) {
        return Err(Error::Domain(format!("growth window must exceed 1, got {window}")));
    }
    let trace = zero_field_trace(p, window, &opts.jacobi)?;
    let mut running_max = f64::NEG_INFINITY;
    let mut worst: f64 = 0.0;
    let n = ((window - 1.0) / 0.05).ceil() as usize;
    for i in 0..=n {
        let t = (1.0 + i as f64 * 0.05).min(window);
        let (s, log) = trace.scaled_state_at(t)?;
        if s.value == 0.0 {
            return Ok(0.0);
        }
        let l = s.value.abs().ln() + log;
        running_max = running_max.max(l);
        worst = worst.min(l - running_max);
    }
    Ok(worst.exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NegativityResult {
    pub applicable: bool,
    pub passes: bool,
    pub sampled_max: f64,
}

/// Nonpositive magnetic curvature with a negative value somewhere on
/// every orbit.
pub fn negativity_criterion(
    m: &SurfaceModel,
    orbits: &[CurvatureProfile],
    eps: f64,
    horizon: f64,
) -> Result<NegativityResult> {
    let mut sampled_max = match m.kind() {
        ModelKind::ConstantCurvature {
            curvature, magnetic, ..
        } => curvature + magnetic * magnetic,
        ModelKind::ConformalTorus { periods, .. } => {
            let (nx, na) = (64, 32);
            let mut max = f64::NEG_INFINITY;
            for i in 0..nx {
                for j in 0..nx {
                    for a in 0..na {
                        let v = UnitTangent::new(
                            periods[0] * i as f64 / nx as f64,
                            periods[1] * j as f64 / nx as f64,
                            TAU * a as f64 / na as f64,
                        );
                        max = max.max(magnetic_curvature(m, &v)?);
                    }
                }
            }
            max
        }
        ModelKind::AbstractProfile { .. } => f64::NEG_INFINITY,
    };
    let mut passes = true;
    for p in orbits {
        let (lo, hi) = p.domain();
        let (min, max) = p.sampled_extrema(lo.max(-horizon), hi.min(horizon), 0.01);
        sampled_max = sampled_max.max(max);
        let (fmin, _) = p.sampled_extrema(0.0, hi.min(horizon), 0.01);
        passes &= fmin.min(min) < -eps;
    }
    let applicable = sampled_max <= eps;
    Ok(NegativityResult {
        applicable,
        passes: applicable && passes && !orbits.is_empty(),
        sampled_max,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnsembleSpec {
    pub count: usize,
    pub seed: u64,
    pub horizon: f64,
    pub spacing: f64,
    pub orbit_tol: f64,
}

impl Default for EnsembleSpec {
    fn default() -> Self {
        EnsembleSpec {
            count: 64,
            seed: 0,
            horizon: 100.0,
            spacing: 0.01,
            orbit_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Analyses {
    pub inequality: bool,
    pub conjugate: bool,
    pub gaps: bool,
    pub contraction: bool,
    pub negativity: bool,
}

impl Default for Analyses {
    fn default() -> Self {
        Analyses {
            inequality: true,
            conjugate: true,
            gaps: true,
            contraction: true,
            negativity: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnosovOptions {
    pub green: GreenOptions,
    pub gap_margin: f64,
    pub witness_window: f64,
    pub witness_bound: f64,
    pub contraction_window: f64,
    pub negativity_eps: f64,
    pub analyses: Analyses,
    /// Worker threads; `None` uses the global pool.
    #[serde(skip)]
    pub workers: Option<usize>,
}

impl Default for AnosovOptions {
    fn default() -> Self {
        AnosovOptions {
            green: GreenOptions::default(),
            gap_margin: 1e-4,
            witness_window: 50.0,
            witness_bound: 10.0,
            contraction_window: 20.0,
            negativity_eps: 1e-8,
            analyses: Analyses::default(),
            workers: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", content = "reason")]
pub enum Verdict {
    NumericallyAnosov,
    NotAnosov(String),
    Inconclusive(String),
}

impl Verdict {
    pub fn label(&self) -> &'static str {
        match self {
            Verdict::NumericallyAnosov => "NumericallyAnosov",
            Verdict::NotAnosov(_) => "NotAnosov",
            Verdict::Inconclusive(_) => "Inconclusive",
        }
    }

    pub fn reason(&self) -> Option<&str> {
        match self {
            Verdict::NumericallyAnosov => None,
            Verdict::NotAnosov(r) | Verdict::Inconclusive(r) => Some(r),
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.reason() {
            Some(r) => write!(f, "{} ({r})", self.label()),
            None => f.write_str(self.label()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OrbitStart {
    Tangent { x: f64, y: f64, theta: f64 },
    Shift { shift: f64 },
    Homogeneous,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrbitRecord {
    pub id: usize,
    pub start: OrbitStart,
    pub kappa_min: f64,
    pub kappa_max: f64,
    pub conjugate_time: Option<f64>,
    pub gap: Option<GapRecord>,
    pub witness: Option<Witness>,
    pub contraction: Option<ContractionFit>,
    pub growth_constant: Option<f64>,
    pub error: Option<String>,
}

/// Per-orbit time series for CSV export.
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitSeries {
    pub id: usize,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleSummary {
    pub requested: usize,
    pub evaluated: usize,
    pub seed: u64,
    pub horizon: f64,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Margins {
    pub gap_margin: f64,
    pub witness_window: f64,
    pub witness_bound: f64,
    pub min_gap: Option<f64>,
    pub min_contraction_rate: Option<f64>,
    pub unconverged_orbits: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnosovReport {
    pub model: &'static str,
    pub euler_characteristic: Option<i64>,
    pub inequality: Option<InequalityCheck>,
    pub ensemble: EnsembleSummary,
    pub orbits: Vec<OrbitRecord>,
    pub negativity: Option<NegativityResult>,
    pub margins: Margins,
    pub verdict: Verdict,
    #[serde(skip)]
    pub series: Vec<OrbitSeries>,
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut x = 0.0;
    while i > 0 {
        x += (i % base) as f64 * inv;
        i /= base;
        inv /= base as f64;
    }
    x
}

struct Prepared {
    start: OrbitStart,
    profile: CurvatureProfile,
    series: OrbitSeries,
}

fn profile_series(id: usize, p: &CurvatureProfile, horizon: f64, spacing: f64) -> OrbitSeries {
    let n = (horizon / spacing).round() as usize;
    let rows = (0..=n)
        .map(|i| {
            let t = (i as f64 * spacing).min(horizon);
            vec![t, p.eval(t)]
        })
        .collect();
    OrbitSeries {
        id,
        columns: vec!["t", "kappa"],
        rows,
    }
}

fn prepare(m: &SurfaceModel, ens: &EnsembleSpec, id: usize) -> Result<Prepared> {
    let index = ens.seed % 1_000_003 + id as u64;
    match m.kind() {
        ModelKind::ConstantCurvature {
            curvature, magnetic, ..
        } => {
            let p = CurvatureProfile::constant(curvature + magnetic * magnetic).with_provenance("constant model");
            Ok(Prepared {
                start: OrbitStart::Homogeneous,
                series: profile_series(id, &p, ens.horizon, ens.spacing),
                profile: p,
            })
        }
        ModelKind::AbstractProfile { profile, .. } => {
            let (lo, hi) = profile.domain();
            let u = radical_inverse(index, 2);
            let shift = if lo.is_finite() && hi.is_finite() {
                0.5 * (lo + hi) + (u - 0.5) * 0.5 * (hi - lo)
            } else {
                u * ens.horizon
            };
            let p = profile.shifted(shift);
            Ok(Prepared {
                start: OrbitStart::Shift { shift },
                series: profile_series(id, &p, ens.horizon.min(p.domain().1), ens.spacing),
                profile: p,
            })
        }
        ModelKind::ConformalTorus { periods, .. } => {
            let v0 = UnitTangent::new(
                periods[0] * radical_inverse(index, 2),
                periods[1] * radical_inverse(index, 3),
                TAU * radical_inverse(index, 5),
            );
            let opts = OrbitOptions {
                tol: ens.orbit_tol,
                spacing: ens.spacing,
            };
            let orbit = two_sided_orbit(m, v0, ens.horizon, opts)?;
            let rows = orbit
                .forward
                .t_samples
                .iter()
                .zip(&orbit.forward.states)
                .zip(&orbit.forward.kappa_samples)
                .map(|((&t, s), &k)| vec![t, s.x, s.y, s.theta, k])
                .collect();
            Ok(Prepared {
                start: OrbitStart::Tangent {
                    x: v0.x,
                    y: v0.y,
                    theta: v0.theta,
                },
                series: OrbitSeries {
                    id,
                    columns: vec!["t", "x", "y", "theta", "kappa"],
                    rows,
                },
                profile: orbit.profile,
            })
        }
    }
}

/// Runs the per-orbit pipeline on a single curvature profile.
pub fn analyze_profile(
    id: usize,
    start: OrbitStart,
    p: &CurvatureProfile,
    horizon: f64,
    opts: &AnosovOptions,
) -> OrbitRecord {
    let (lo, hi) = p.domain();
    let (kappa_min, kappa_max) = p.sampled_extrema(lo.max(-horizon), hi.min(horizon), 0.01);
    let mut rec = OrbitRecord {
        id,
        start,
        kappa_min,
        kappa_max,
        conjugate_time: None,
        gap: None,
        witness: None,
        contraction: None,
        growth_constant: None,
        error: None,
    };
    if let Err(e) = fill_record(&mut rec, p, horizon.min(hi), opts) {
        match e {
            Error::ConjugatePoint { t } => rec.conjugate_time = Some(t),
            other => rec.error = Some(other.to_string()),
        }
    }
    rec
}

fn fill_record(rec: &mut OrbitRecord, p: &CurvatureProfile, horizon: f64, opts: &AnosovOptions) -> Result<()> {
    let a = &opts.analyses;
    if a.conjugate {
        rec.conjugate_time = first_conjugate_time(p, horizon, &opts.green)?;
        if rec.conjugate_time.is_some() {
            return Ok(());
        }
    }
    if !a.gaps {
        return Ok(());
    }
    let gap = transversality_gap(p, &opts.green)?;
    rec.gap = Some(gap);
    rec.witness = bounded_jacobi_witness(
        p,
        &gap,
        opts.witness_window,
        opts.gap_margin,
        opts.witness_bound,
        &opts.green,
    )?;
    if a.contraction && gap.converged && gap.gap > opts.gap_margin {
        rec.contraction = Some(contraction_fit(p, opts.contraction_window, &opts.green)?);
        rec.growth_constant = Some(growth_constant(p, opts.contraction_window, &opts.green)?);
    }
    Ok(())
}

fn verdict(report: &AnosovReport, opts: &AnosovOptions) -> Verdict {
    if let Some(chi) = report.euler_characteristic {
        if chi >= 0 {
            return Verdict::NotAnosov("euler characteristic ≥ 0".into());
        }
    }
    if let Some(ineq) = &report.inequality {
        if !ineq.passes {
            return Verdict::NotAnosov(format!("integral inequality fails: {} ≥ {}", ineq.lhs, ineq.rhs));
        }
    }
    for o in &report.orbits {
        if let Some(t) = o.conjugate_time {
            return Verdict::NotAnosov(format!("conjugate point at t = {t} on orbit {}", o.id));
        }
    }
    for o in &report.orbits {
        if let (Some(g), Some(w)) = (&o.gap, &o.witness) {
            if g.converged && w.bounded {
                return Verdict::NotAnosov(format!(
                    "bounded perpendicular Jacobi field on orbit {} (gap {:e}, sup {})",
                    o.id, g.gap, w.sup_norm
                ));
            }
        }
    }
    for o in &report.orbits {
        if let Some(e) = &o.error {
            return Verdict::Inconclusive(format!("orbit {}: {e}", o.id));
        }
    }
    if !opts.analyses.gaps {
        return Verdict::Inconclusive("transversality gaps were not computed".into());
    }
    for o in &report.orbits {
        let Some(g) = &o.gap else { continue };
        if !g.converged {
            return Verdict::Inconclusive(format!("Green slopes did not converge on orbit {}", o.id));
        }
        if g.gap <= opts.gap_margin {
            return Verdict::Inconclusive(format!(
                "gap {:e} on orbit {} is within the margin but no bounded field was confirmed",
                g.gap, o.id
            ));
        }
    }
    if !opts.analyses.contraction {
        return Verdict::Inconclusive("contraction fits were not computed".into());
    }
    for o in &report.orbits {
        if let Some(c) = &o.contraction {
            if !c.succeeded {
                return Verdict::Inconclusive(format!("stable field does not contract on orbit {}", o.id));
            }
        }
    }
    if report.inequality.is_none() && report.euler_characteristic.is_some() && opts.analyses.inequality {
        return Verdict::Inconclusive("integral inequality could not be evaluated".into());
    }
    Verdict::NumericallyAnosov
}

/// Classifies `m` over the ensemble described by `ens`.
pub fn classify(m: &SurfaceModel, ens: &EnsembleSpec, opts: &AnosovOptions) -> Result<AnosovReport> {
    if ens.count == 0 {
        return Err(Error::config("ensemble.count", "must be at least 1"));
    }
    if !(ens.horizon > 0.0 && ens.spacing > 0.0) {
        return Err(Error::config(
            "ensemble.horizon",
            "horizon and spacing must be positive",
        ));
    }
    let inequality = match (opts.analyses.inequality, m.kind()) {
        (false, _) | (_, ModelKind::AbstractProfile { .. }) => None,
        _ => Some(integral_inequality_check(m)?),
    };
    let (evaluated, note) = match m.kind() {
        ModelKind::ConstantCurvature { .. } => (
            1,
            Some("homogeneous model: every orbit has the same constant profile".to_string()),
        ),
        _ => (ens.count, None),
    };

    let run = || -> Vec<(OrbitRecord, Option<CurvatureProfile>, Option<OrbitSeries>)> {
        (0..evaluated)
            .into_par_iter()
            .map(|id| match prepare(m, ens, id) {
                Ok(prep) => {
                    let rec = analyze_profile(id, prep.start, &prep.profile, ens.horizon, opts);
                    log::debug!("orbit {id}: gap {:?}", rec.gap.map(|g| g.gap));
                    (rec, Some(prep.profile), Some(prep.series))
                }
                Err(e) => (
                    OrbitRecord {
                        id,
                        start: OrbitStart::Homogeneous,
                        kappa_min: f64::NAN,
                        kappa_max: f64::NAN,
                        conjugate_time: None,
                        gap: None,
                        witness: None,
                        contraction: None,
                        growth_constant: None,
                        error: Some(e.to_string()),
                    },
                    None,
                    None,
                ),
            })
            .collect()
    };
    let results = match opts.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::config("output.workers", e.to_string()))?
            .install(run),
        None => run(),
    };

    let mut orbits = Vec::with_capacity(results.len());
    let mut profiles = Vec::new();
    let mut series = Vec::new();
    for (rec, p, s) in results {
        orbits.push(rec);
        profiles.extend(p);
        series.extend(s);
    }
    let negativity = if opts.analyses.negativity {
        Some(negativity_criterion(m, &profiles, opts.negativity_eps, ens.horizon)?)
    } else {
        None
    };
    let min_gap = orbits.iter().filter_map(|o| o.gap.map(|g| g.gap)).reduce(f64::min);
    let min_contraction_rate = orbits
        .iter()
        .filter_map(|o| o.contraction.map(|c| c.c))
        .reduce(f64::min);
    let unconverged_orbits = orbits
        .iter()
        .filter(|o| o.gap.is_some_and(|g| !g.converged))
        .map(|o| o.id)
        .collect();
    let mut report = AnosovReport {
        model: m.kind_name(),
        euler_characteristic: m.euler_characteristic(),
        inequality,
        ensemble: EnsembleSummary {
            requested: ens.count,
            evaluated,
            seed: ens.seed,
            horizon: ens.horizon,
            note,
        },
        orbits,
        negativity,
        margins: Margins {
            gap_margin: opts.gap_margin,
            witness_window: opts.witness_window,
            witness_bound: opts.witness_bound,
            min_gap,
            min_contraction_rate,
            unconverged_orbits,
        },
        verdict: Verdict::NumericallyAnosov,
        series,
    };
    report.verdict = verdict(&report, opts);
    Ok(report)
}
