//! Stable and unstable Green slopes `u±(0)`.
//!
//! `u+` is the limit of `(J^r)˙(0)` as `r → +∞`, where `J^r(0) = 1` and
//! `J^r(r) = 0`. The sequence is monotone in `r`, so it is evaluated on a
//! doubling schedule and stopped once successive values agree. The
//! unstable slope comes from the flipped profile: `u−(p) = −u+(flip p)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::CurvatureProfile;
use crate::jacobi::{self, integrate_perp, JacobiOptions, PerpJacobiState};
use crate::riccati::{integrate_riccati, RiccatiOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Stable,
    Unstable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GreenOptions {
    pub tol: f64,
    pub r0: f64,
    pub r_cap: f64,
    pub monotone_slack: f64,
    pub jacobi: JacobiOptions,
}

impl Default for GreenOptions {
    fn default() -> Self {
        GreenOptions {
            tol: 1e-9,
            r0: 5.0,
            r_cap: 5.0 * 16384.0,
            monotone_slack: 1e-10,
            jacobi: JacobiOptions::default(),
        }
    }
}

/// `(J^r)˙(0)`, the slope at 0 of the field vanishing at `r`.
pub fn psi_slope(p: &CurvatureProfile, r: f64, opts: &JacobiOptions) -> Result<f64> {
    Ok(jacobi::boundary_slope(p, r, opts)?.slope)
}

/// One Green slope with its convergence history.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SideEstimate {
    pub side: Side,
    pub slope: f64,
    /// Signed boundary times; negative for the unstable side.
    pub r_schedule: Vec<f64>,
    /// Raw boundary slopes along the schedule.
    pub slopes: Vec<f64>,
    /// Differences between successive estimates.
    pub residuals: Vec<f64>,
    pub converged: bool,
    /// Whether the exact tail beyond `r` was added (constant profiles).
    pub tail_corrected: bool,
    pub within_bound: bool,
}

impl SideEstimate {
    fn mirrored(self) -> Self {
        SideEstimate {
            side: Side::Unstable,
            slope: -self.slope,
            r_schedule: self.r_schedule.iter().map(|r| -r).collect(),
            slopes: self.slopes.iter().map(|s| -s).collect(),
            ..self
        }
    }

    pub fn last_residual(&self) -> Option<f64> {
        self.residuals.last().copied()
    }
}

fn stable_slope(p: &CurvatureProfile, opts: &GreenOptions) -> Result<SideEstimate> {
    if !(opts.tol > 0.0 && opts.r0 > 0.0 && opts.r_cap >= opts.r0) {
        return Err(Error::Domain("Green schedule needs tol > 0 and 0 < r0 ≤ r_cap".into()));
    }
    let (lo, hi) = p.domain();
    let r_max = opts.r_cap.min(hi);
    if r_max < opts.r0 {
        return Err(Error::OutOfRange { t: opts.r0, lo, hi });
    }

    let mut est = SideEstimate {
        side: Side::Stable,
        slope: f64::NAN,
        r_schedule: Vec::new(),
        slopes: Vec::new(),
        residuals: Vec::new(),
        converged: false,
        tail_corrected: false,
        within_bound: true,
    };
    let mut prev_estimate = None;
    let mut r = opts.r0;
    while r <= r_max * (1.0 + 1e-12) {
        let r_eval = r.min(r_max);
        let slope = psi_slope(p, r_eval, &opts.jacobi)?;
        if let Some(&last) = est.slopes.last() {
            if slope < last - opts.monotone_slack {
                return Err(Error::NumericalInconsistency {
                    what: "boundary slopes decreased along the schedule",
                    residual: last - slope,
                });
            }
        }
        let tail = p.exact_inverse_square_tail(r_eval);
        est.tail_corrected = tail.is_some();
        let estimate = slope + tail.unwrap_or(0.0);
        est.r_schedule.push(r_eval);
        est.slopes.push(slope);
        est.slope = estimate;
        if let Some(prev) = prev_estimate {
            let diff: f64 = estimate - prev;
            est.residuals.push(diff.abs());
            if diff.abs() < opts.tol {
                est.converged = true;
                break;
            }
        }
        prev_estimate = Some(estimate);
        r *= 2.0;
    }
    if !est.converged {
        log::debug!(
            "green schedule exhausted at r = {:?} with residual {:?}",
            est.r_schedule.last(),
            est.last_residual()
        );
    }
    est.within_bound = est.slope.abs() <= p.k_bound() + 1e-6;
    Ok(est)
}

/// Green slope on one side. The unstable side is the mirrored stable
/// slope of the flipped profile.
pub fn green_slope(p: &CurvatureProfile, side: Side, opts: &GreenOptions) -> Result<SideEstimate> {
    match side {
        Side::Stable => stable_slope(p, opts),
        Side::Unstable => Ok(stable_slope(&p.flipped(), opts)?.mirrored()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GreenEstimate {
    pub u_plus0: f64,
    pub u_minus0: f64,
    /// `u−(0) − u+(0)`.
    pub gap: f64,
    pub converged: bool,
    /// `1 + |u+(0)|`, the bound on the horizontal part of stable vectors.
    pub ubk_constant: f64,
    pub stable: SideEstimate,
    pub unstable: SideEstimate,
}

pub fn green_estimate(p: &CurvatureProfile, opts: &GreenOptions) -> Result<GreenEstimate> {
    let stable = green_slope(p, Side::Stable, opts)?;
    let unstable = green_slope(p, Side::Unstable, opts)?;
    Ok(GreenEstimate {
        u_plus0: stable.slope,
        u_minus0: unstable.slope,
        gap: unstable.slope - stable.slope,
        converged: stable.converged && unstable.converged,
        ubk_constant: 1.0 + stable.slope.abs(),
        stable,
        unstable,
    })
}

/// Flow invariance of one Green line between times 0 and `t`.
///
/// The slope of the time-shifted profile is carried by the Riccati
/// equation to the other end and compared with the slope computed there.
/// Stable slopes are carried backwards in time and unstable ones
/// forwards, the directions in which they attract nearby solutions.
pub fn invariance_residual(p: &CurvatureProfile, t: f64, side: Side, opts: &GreenOptions) -> Result<f64> {
    if !t.is_finite() {
        return Err(Error::Domain("invariance time must be finite".into()));
    }
    let slope_at = |s: f64| -> Result<SideEstimate> {
        let est = green_slope(&p.shifted(s), side, opts)?;
        if !est.converged {
            return Err(Error::CertificationFailure(format!(
                "{side:?} Green slope at t = {s} did not converge"
            )));
        }
        Ok(est)
    };
    let (early, late) = (t.min(0.0), t.max(0.0));
    let (from, to) = match side {
        Side::Stable => (late, early),
        Side::Unstable => (early, late),
    };
    let start = slope_at(from)?.slope;
    let target = slope_at(to)?.slope;
    if from == to {
        return Ok((start - target).abs());
    }
    let ric = RiccatiOptions {
        tol: opts.jacobi.tol,
        max_step: opts.jacobi.max_step,
        sample_dt: None,
    };
    let trace = integrate_riccati(p, start, (from, to), &ric)?;
    if let Some(tb) = trace.blowup_time {
        return Err(Error::CertificationFailure(format!(
            "Riccati solution along a Green line blew up at t = {tb}"
        )));
    }
    Ok((trace.last().1 - target).abs())
}

/// The stable Jacobi field, normalized so that `J(0) = 1`.
#[derive(Debug, Clone, Serialize)]
pub struct StableField {
    pub u_plus0: f64,
    pub times: Vec<f64>,
    pub states: Vec<PerpJacobiState>,
}

impl StableField {
    pub fn sup_norm(&self) -> f64 {
        self.states.iter().map(|s| s.value.abs()).fold(0.0, f64::max)
    }

    pub fn min_abs(&self) -> f64 {
        self.states.iter().map(|s| s.value.abs()).fold(f64::INFINITY, f64::min)
    }

    pub fn sasaki_norms(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.value.hypot(s.deriv)).collect()
    }
}

/// Samples the stable field on `[lo, hi]` (which must contain 0) at
/// spacing `dt`. The field is started from the stable slope at `hi` and
/// integrated backwards.
pub fn stable_field(p: &CurvatureProfile, lo: f64, hi: f64, dt: f64, opts: &GreenOptions) -> Result<StableField> {
    if !(lo <= 0.0 && hi >= 0.0 && dt > 0.0) {
        return Err(Error::Domain(format!(
            "stable field window [{lo}, {hi}] must contain 0"
        )));
    }
    let u_plus0 = green_slope(p, Side::Stable, opts)?.slope;
    let start = if hi > 0.0 {
        green_slope(&p.shifted(hi), Side::Stable, opts)?.slope
    } else {
        u_plus0
    };
    let trace = integrate_perp(p, PerpJacobiState::new(1.0, start), (hi, lo), &opts.jacobi)?;
    let (at0, log0) = trace.scaled_state_at(0.0)?;
    if at0.value == 0.0 {
        return Err(Error::CertificationFailure("stable field vanishes at 0".into()));
    }
    let n = ((hi - lo) / dt).round().max(1.0) as usize;
    let mut times = Vec::with_capacity(n + 1);
    let mut states = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let t = (lo + i as f64 * dt).min(hi);
        let (s, log) = trace.scaled_state_at(t)?;
        times.push(t);
        states.push(s.scaled((log - log0).exp() / at0.value));
    }
    Ok(StableField { u_plus0, times, states })
}
