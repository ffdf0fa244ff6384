//! Scalar perpendicular Jacobi fields `J¨ + 𝕂(t) J = 0`.
//!
//! Solutions can grow like `e^{kt}`, so traces store each step together
//! with a log-scale and the integrator renormalizes the (linear) state
//! whenever it gets large.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::CurvatureProfile;
use crate::ode::{DenseStep, Dopri5, OdeSystem, StepControl};
use crate::quadrature;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerpJacobiState {
    pub value: f64,
    pub deriv: f64,
}

impl PerpJacobiState {
    pub const fn new(value: f64, deriv: f64) -> Self {
        PerpJacobiState { value, deriv }
    }

    pub fn scaled(self, factor: f64) -> Self {
        PerpJacobiState::new(self.value * factor, self.deriv * factor)
    }

    fn as_array(self) -> [f64; 2] {
        [self.value, self.deriv]
    }

    fn from_array(y: [f64; 2]) -> Self {
        PerpJacobiState::new(y[0], y[1])
    }
}

/// A quotient vector identified with its Jacobi data `(J(0), J̇(0))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuotientVector {
    pub jperp0: f64,
    pub djperp0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JacobiOptions {
    pub tol: f64,
    pub max_step: f64,
}

impl Default for JacobiOptions {
    fn default() -> Self {
        JacobiOptions {
            tol: 1e-12,
            max_step: 1.0,
        }
    }
}

impl JacobiOptions {
    /// Absolute tolerance is relative to the initial data so that the
    /// step sequence is invariant under rescaling of the solution.
    fn control(&self, s0: PerpJacobiState) -> StepControl {
        let size = s0.value.abs().max(s0.deriv.abs());
        let mut ctl = StepControl::with_tol(self.tol).max_step(self.max_step);
        if size > 0.0 {
            ctl.atol = self.tol * size;
        }
        ctl
    }
}

struct JacobiSystem<'a> {
    profile: &'a CurvatureProfile,
}

impl OdeSystem<2> for JacobiSystem<'_> {
    #[inline]
    fn rhs(&self, t: f64, y: &[f64; 2]) -> [f64; 2] {
        [y[1], -self.profile.eval(t) * y[0]]
    }
}

const RENORMALIZE_ABOVE: f64 = 1e64;

/// Dense solution of the perpendicular Jacobi equation.
#[derive(Debug, Clone)]
pub struct PerpTrace {
    profile: CurvatureProfile,
    steps: Vec<(DenseStep<2>, f64)>,
    t_start: f64,
    t_end: f64,
    start: PerpJacobiState,
}

impl PerpTrace {
    pub fn span(&self) -> (f64, f64) {
        (self.t_start.min(self.t_end), self.t_start.max(self.t_end))
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    fn forward(&self) -> bool {
        self.t_end >= self.t_start
    }

    /// Step boundaries in increasing order.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut pts: Vec<f64> = std::iter::once(self.t_start)
            .chain(self.steps.iter().map(|(s, _)| s.t1()))
            .collect();
        if !self.forward() {
            pts.reverse();
        }
        pts
    }

    fn locate(&self, t: f64) -> Result<Option<usize>> {
        let (lo, hi) = self.span();
        if !(t >= lo && t <= hi) {
            return Err(Error::OutOfRange { t, lo, hi });
        }
        if self.steps.is_empty() {
            return Ok(None);
        }
        let idx = if self.forward() {
            self.steps.partition_point(|(s, _)| s.t1() < t)
        } else {
            self.steps.partition_point(|(s, _)| s.t1() > t)
        };
        Ok(Some(idx.min(self.steps.len() - 1)))
    }

    /// State at `t` as `(normalized state, log scale)`; the true state is
    /// `normalized · e^{log scale}`.
    pub fn scaled_state_at(&self, t: f64) -> Result<(PerpJacobiState, f64)> {
        Ok(match self.locate(t)? {
            None => (self.start, 0.0),
            Some(i) => {
                let (step, log) = &self.steps[i];
                let sys = JacobiSystem { profile: &self.profile };
                (PerpJacobiState::from_array(step.restep(&sys, t)), *log)
            }
        })
    }

    pub fn state_at(&self, t: f64) -> Result<PerpJacobiState> {
        let (s, log) = self.scaled_state_at(t)?;
        Ok(if log == 0.0 { s } else { s.scaled(log.exp()) })
    }

    pub fn end_scaled(&self) -> (PerpJacobiState, f64) {
        match self.steps.last() {
            None => (self.start, 0.0),
            Some((step, log)) => (PerpJacobiState::from_array(step.y1()), *log),
        }
    }

    pub fn end_state(&self) -> PerpJacobiState {
        let (s, log) = self.end_scaled();
        s.scaled(log.exp())
    }

    /// Samples on a uniform grid of spacing `dt` from the start time.
    pub fn samples(&self, dt: f64) -> Vec<(f64, PerpJacobiState)> {
        let span = (self.t_end - self.t_start).abs();
        let dir = if self.forward() { 1.0 } else { -1.0 };
        let n = (span / dt + 1e-9).floor() as usize;
        let mut out: Vec<(f64, PerpJacobiState)> = (0..=n)
            .map(|i| {
                let t = self.t_start + dir * i as f64 * dt;
                (t, self.state_at(t).expect("sample inside trace"))
            })
            .collect();
        if span - n as f64 * dt > 1e-9 * dt {
            out.push((self.t_end, self.end_state()));
        }
        out
    }

    /// CSV with columns `t,J,dJ`.
    pub fn write_csv<W: Write>(&self, mut w: W, dt: f64) -> std::io::Result<()> {
        writeln!(w, "t,J,dJ")?;
        for (t, s) in self.samples(dt) {
            writeln!(w, "{t},{},{}", s.value, s.deriv)?;
        }
        Ok(())
    }

    /// `∫_a^b du / J(u)²` over a sub-interval of the trace.
    pub fn inverse_square_integral(&self, a: f64, b: f64, abs_tol: f64) -> Result<f64> {
        let (lo, hi) = self.span();
        for t in [a, b] {
            if !(t >= lo && t <= hi) {
                return Err(Error::OutOfRange { t, lo, hi });
            }
        }
        let (x0, x1, sign) = if a <= b { (a, b, 1.0) } else { (b, a, -1.0) };
        let mut breaks: Vec<f64> = self.breakpoints().into_iter().filter(|&p| p > x0 && p < x1).collect();
        breaks.insert(0, x0);
        breaks.push(x1);
        let integrand = |u: f64| {
            let (s, log) = self.scaled_state_at(u).expect("inside trace");
            let v = s.value;
            (-2.0 * log).exp() / (v * v)
        };
        let r = quadrature::integrate_with_breaks(integrand, &breaks, abs_tol, 1e-13)?;
        Ok(sign * r.value)
    }

    /// First sign change of `J` after the start, scanning at spacing `dt`
    /// and refining by bisection to `1e-9`.
    pub fn first_zero(&self, dt: f64) -> Option<f64> {
        let dir = if self.forward() { 1.0 } else { -1.0 };
        let span = (self.t_end - self.t_start).abs();
        let value = |t: f64| self.scaled_state_at(t).map(|(s, _)| s.value).unwrap_or(f64::NAN);
        let n = (span / dt).ceil() as usize;
        let mut prev_t = self.t_start + dir * dt.min(span);
        let mut prev = value(prev_t);
        if prev == 0.0 {
            return Some(prev_t);
        }
        for i in 2..=n.max(1) {
            let t = self.t_start + dir * (i as f64 * dt).min(span);
            let v = value(t);
            if v == 0.0 {
                return Some(t);
            }
            if v.signum() != prev.signum() {
                let (mut a, mut b) = (prev_t, t);
                let sa = prev.signum();
                while (b - a).abs() > 1e-10 {
                    let mid = 0.5 * (a + b);
                    if value(mid).signum() == sa {
                        a = mid;
                    } else {
                        b = mid;
                    }
                }
                return Some(0.5 * (a + b));
            }
            prev_t = t;
            prev = v;
        }
        None
    }
}

/// Integrates `J¨ + 𝕂 J = 0` from `s0` at `t_span.0` to `t_span.1`.
pub fn integrate_perp(
    p: &CurvatureProfile,
    s0: PerpJacobiState,
    t_span: (f64, f64),
    opts: &JacobiOptions,
) -> Result<PerpTrace> {
    let (t0, t1) = t_span;
    if !(t0.is_finite() && t1.is_finite()) {
        return Err(Error::Domain("Jacobi time span must be finite".into()));
    }
    if !(p.contains(t0) && p.contains(t1)) {
        let (lo, hi) = p.domain();
        let t = if p.contains(t0) { t1 } else { t0 };
        return Err(Error::OutOfRange { t, lo, hi });
    }
    if !(s0.value.is_finite() && s0.deriv.is_finite()) {
        return Err(Error::Domain("Jacobi initial data must be finite".into()));
    }
    let sys = JacobiSystem { profile: p };
    let mut stepper = Dopri5::new(&sys, t0, s0.as_array(), t1, opts.control(s0));
    let mut log_scale = 0.0;
    let mut steps = Vec::new();
    while let Some(step) = stepper.step()? {
        steps.push((step, log_scale));
        let y = stepper.y();
        let size = y[0].abs().max(y[1].abs());
        if size > RENORMALIZE_ABOVE {
            stepper.rescale(1.0 / size);
            log_scale += size.ln();
        }
    }
    Ok(PerpTrace {
        profile: p.clone(),
        steps,
        t_start: t0,
        t_end: t1,
        start: s0,
    })
}

/// Trace of `J_z` (`J(0) = 0`, `J̇(0) = 1`) on `[0, horizon]` (or
/// `[horizon, 0]` for negative horizons).
pub fn zero_field_trace(p: &CurvatureProfile, horizon: f64, opts: &JacobiOptions) -> Result<PerpTrace> {
    integrate_perp(p, PerpJacobiState::new(0.0, 1.0), (0.0, horizon), opts)
}

pub fn solve_jz(p: &CurvatureProfile, t: f64, opts: &JacobiOptions) -> Result<PerpJacobiState> {
    Ok(zero_field_trace(p, t, opts)?.end_state())
}

/// Scan spacing used for conjugate-point detection.
pub const CONJUGATE_SCAN_STEP: f64 = 0.01;
/// Largest admissible disagreement between the two slope computations.
pub const CROSS_CHECK_LIMIT: f64 = 1e-7;

/// Slope at 0 of the field with `J(0) = 1`, `J(r) = 0`, computed twice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundarySlope {
    pub r: f64,
    /// Shooting value, used as the reported slope.
    pub slope: f64,
    /// From the inverse-square integral of `J_z`.
    pub slope_quadrature: f64,
    pub slope_shooting: f64,
    pub cross_check: f64,
    /// `|J(0) - 1|` for the quadrature route before normalization.
    pub boundary_residual: f64,
}

impl BoundarySlope {
    fn negated(self) -> Self {
        BoundarySlope {
            r: -self.r,
            slope: -self.slope,
            slope_quadrature: -self.slope_quadrature,
            slope_shooting: -self.slope_shooting,
            ..self
        }
    }
}

struct BoundaryParts {
    slope: BoundarySlope,
    zero_field: PerpTrace,
    shooting: PerpTrace,
    t0: f64,
}

fn boundary_parts(p: &CurvatureProfile, r: f64, opts: &JacobiOptions) -> Result<BoundaryParts> {
    debug_assert!(r > 0.0);
    let zero_field = zero_field_trace(p, r, opts)?;
    if let Some(t) = zero_field.first_zero(CONJUGATE_SCAN_STEP) {
        return Err(Error::ConjugatePoint { t });
    }
    let (end, _) = zero_field.end_scaled();
    if end.value <= 0.0 {
        return Err(Error::ConjugatePoint { t: r });
    }

    // Quadrature route: closed formula at t0 > 0, then back to 0.
    let t0 = (0.1f64).min(r / 10.0);
    let inverse_square = zero_field.inverse_square_integral(t0, r, 1e-11)?;
    let jz = zero_field.state_at(t0)?;
    let at_t0 = PerpJacobiState::new(jz.value * inverse_square, jz.deriv * inverse_square - 1.0 / jz.value);
    let back = integrate_perp(p, at_t0, (t0, 0.0), opts)?;
    let at_zero = back.end_state();
    let slope_quadrature = at_zero.deriv / at_zero.value;
    let boundary_residual = (at_zero.value - 1.0).abs();

    // Shooting route: backwards from J(r) = 0, which is the contracting
    // direction for the decaying solution.
    let shooting = integrate_perp(p, PerpJacobiState::new(0.0, -1.0), (r, 0.0), opts)?;
    let (s, _) = shooting.end_scaled();
    if s.value <= 0.0 {
        return Err(Error::ConjugatePoint { t: r });
    }
    let slope_shooting = s.deriv / s.value;

    let cross_check = (slope_quadrature - slope_shooting).abs();
    let slope = BoundarySlope {
        r,
        slope: slope_shooting,
        slope_quadrature,
        slope_shooting,
        cross_check,
        boundary_residual,
    };
    if cross_check > CROSS_CHECK_LIMIT || !cross_check.is_finite() {
        return Err(Error::NumericalInconsistency {
            what: "boundary-value slope cross-check",
            residual: cross_check,
        });
    }
    Ok(BoundaryParts {
        slope,
        zero_field,
        shooting,
        t0,
    })
}

/// `(J^r)˙(0)` for `r ≠ 0`; negative `r` goes through the flipped profile.
pub fn boundary_slope(p: &CurvatureProfile, r: f64, opts: &JacobiOptions) -> Result<BoundarySlope> {
    if r == 0.0 || !r.is_finite() {
        return Err(Error::Domain(format!(
            "boundary time must be finite and nonzero, got {r}"
        )));
    }
    if r > 0.0 {
        Ok(boundary_parts(p, r, opts)?.slope)
    } else {
        Ok(boundary_parts(&p.flipped(), -r, opts)?.slope.negated())
    }
}

/// Value of `J^r` at `t` together with the slope diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundarySolution {
    pub state: PerpJacobiState,
    pub boundary: BoundarySlope,
    /// Agreement of the closed-formula value with the shooting value at `t`
    /// (zero when `t` lies outside the formula's range).
    pub value_cross_check: f64,
}

/// The field `J^r` with `J(0) = 1` and `J(r) = 0`, evaluated at `t`.
pub fn solve_jr(p: &CurvatureProfile, r: f64, t: f64, opts: &JacobiOptions) -> Result<BoundarySolution> {
    if r == 0.0 || !r.is_finite() {
        return Err(Error::Domain(format!(
            "boundary time must be finite and nonzero, got {r}"
        )));
    }
    if r < 0.0 {
        let mut sol = solve_jr(&p.flipped(), -r, -t, opts)?;
        sol.state.deriv = -sol.state.deriv;
        sol.boundary = sol.boundary.negated();
        return Ok(sol);
    }
    let parts = boundary_parts(p, r, opts)?;
    let (s0, log0) = parts.shooting.end_scaled();
    let normalize = |(s, log): (PerpJacobiState, f64)| s.scaled((log - log0).exp() / s0.value);

    let (state, value_cross_check) = if (0.0..=r).contains(&t) {
        let shot = normalize(parts.shooting.scaled_state_at(t)?);
        let check = if t >= parts.t0 {
            let jz = parts.zero_field.state_at(t)?;
            let tail = if t == r {
                0.0
            } else {
                parts.zero_field.inverse_square_integral(t, r, 1e-11)?
            };
            (jz.value * tail - shot.value).abs()
        } else {
            0.0
        };
        (shot, check)
    } else if t > r {
        let at_r = normalize(parts.shooting.scaled_state_at(r)?);
        (integrate_perp(p, at_r, (r, t), opts)?.end_state(), 0.0)
    } else {
        let start = PerpJacobiState::new(1.0, parts.slope.slope);
        (integrate_perp(p, start, (0.0, t), opts)?.end_state(), 0.0)
    };
    if value_cross_check > CROSS_CHECK_LIMIT {
        return Err(Error::NumericalInconsistency {
            what: "boundary-value field cross-check",
            residual: value_cross_check,
        });
    }
    Ok(BoundarySolution {
        state,
        boundary: parts.slope,
        value_cross_check,
    })
}

/// `W(a, b) = ȧ b − ḃ a`.
pub fn wronskian(a: PerpJacobiState, b: PerpJacobiState) -> f64 {
    a.deriv * b.value - b.deriv * a.value
}

/// Tangential component `J^⊤(t) = J^⊤(t_0) + ∫_{t_0}^t b(s) J^⊥(s) ds`,
/// where `t_0` is the start of the perpendicular trace.
pub struct TangentialComponent<'a, B> {
    b: B,
    perp: &'a PerpTrace,
    jt0: f64,
}

pub fn tangential_component<B: Fn(f64) -> f64>(b: B, perp: &PerpTrace, jt0: f64) -> TangentialComponent<'_, B> {
    TangentialComponent { b, perp, jt0 }
}

impl<B: Fn(f64) -> f64> TangentialComponent<'_, B> {
    pub fn eval(&self, t: f64) -> Result<f64> {
        let (lo, hi) = self.perp.span();
        if !(t >= lo && t <= hi) {
            return Err(Error::OutOfRange { t, lo, hi });
        }
        let t0 = self.perp.t_start();
        let (a, z) = (t0.min(t), t0.max(t));
        let mut breaks: Vec<f64> = self
            .perp
            .breakpoints()
            .into_iter()
            .filter(|&x| x > a && x < z)
            .collect();
        breaks.insert(0, a);
        breaks.push(z);
        let integrand = |s: f64| (self.b)(s) * self.perp.state_at(s).map(|st| st.value).unwrap_or(f64::NAN);
        let r = quadrature::integrate_with_breaks(integrand, &breaks, 1e-12, 1e-13)?;
        let sign = if t >= t0 { 1.0 } else { -1.0 };
        Ok(self.jt0 + sign * r.value)
    }
}

/// The profile seen by `L(t) = J(-t)`.
pub fn flip_profile(p: &CurvatureProfile) -> CurvatureProfile {
    p.flipped()
}

pub fn sasaki_norm(xi: QuotientVector) -> f64 {
    xi.jperp0.hypot(xi.djperp0)
}
