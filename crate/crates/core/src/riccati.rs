//! Riccati equation `u̇ + u² + 𝕂(t) = 0` and its comparison envelopes.
//!
//! Near a pole the solver switches to `w = 1/u`, which satisfies the
//! regular equation `ẇ = 1 + 𝕂 w²`; a blow-up of `u` is a zero of `w`.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::CurvatureProfile;
use crate::ode::{DenseStep, Dopri5, OdeSystem, StepControl};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RiccatiOptions {
    pub tol: f64,
    pub max_step: f64,
    /// When set, samples are emitted on this uniform grid instead of at
    /// accepted steps.
    pub sample_dt: Option<f64>,
}

impl Default for RiccatiOptions {
    fn default() -> Self {
        RiccatiOptions {
            tol: 1e-12,
            max_step: 0.5,
            sample_dt: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RiccatiTrace {
    pub t_samples: Vec<f64>,
    pub u_samples: Vec<f64>,
    /// Time at which `u` leaves every bounded set, bracketed to `1e-12`.
    pub blowup_time: Option<f64>,
    pub k_used: f64,
}

impl RiccatiTrace {
    pub fn survived(&self) -> bool {
        self.blowup_time.is_none()
    }

    pub fn last(&self) -> (f64, f64) {
        (*self.t_samples.last().unwrap(), *self.u_samples.last().unwrap())
    }

    /// CSV with columns `t,u`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,u")?;
        for (t, u) in self.t_samples.iter().zip(&self.u_samples) {
            writeln!(w, "{t},{u}")?;
        }
        Ok(())
    }
}

struct Direct<'a>(&'a CurvatureProfile);
struct Inverted<'a>(&'a CurvatureProfile);

impl OdeSystem<1> for Direct<'_> {
    #[inline]
    fn rhs(&self, t: f64, y: &[f64; 1]) -> [f64; 1] {
        [-y[0] * y[0] - self.0.eval(t)]
    }
}

impl OdeSystem<1> for Inverted<'_> {
    #[inline]
    fn rhs(&self, t: f64, y: &[f64; 1]) -> [f64; 1] {
        [1.0 + self.0.eval(t) * y[0] * y[0]]
    }
}

enum Mode {
    Direct,
    Inverted,
}

struct Sampler {
    dt: Option<f64>,
    origin: f64,
    dir: f64,
    next: usize,
    t: Vec<f64>,
    u: Vec<f64>,
}

impl Sampler {
    fn emit(&mut self, step: &DenseStep<1>, inverted: bool, upto: f64) {
        let to_u = |v: f64| if inverted { 1.0 / v } else { v };
        match self.dt {
            None => {
                self.t.push(upto);
                self.u.push(to_u(step.eval(upto)[0]));
            }
            Some(dt) => loop {
                let t = self.origin + self.dir * self.next as f64 * dt;
                if (t - upto) * self.dir > 1e-12 * dt {
                    break;
                }
                self.t.push(t);
                self.u.push(to_u(step.eval(t)[0]));
                self.next += 1;
            },
        }
    }
}

/// Integrates the Riccati equation from `u0` at `t_span.0` towards `t_span.1` (either
/// direction). Blow-up ends the trace and is reported, not raised.
pub fn integrate_riccati(
    p: &CurvatureProfile,
    u0: f64,
    t_span: (f64, f64),
    opts: &RiccatiOptions,
) -> Result<RiccatiTrace> {
    let (t0, t1) = t_span;
    if !(t0.is_finite() && t1.is_finite() && u0.is_finite()) {
        return Err(Error::Domain("Riccati data must be finite".into()));
    }
    if !(p.contains(t0) && p.contains(t1)) {
        let (lo, hi) = p.domain();
        return Err(Error::OutOfRange {
            t: if p.contains(t0) { t1 } else { t0 },
            lo,
            hi,
        });
    }
    let k_used = p.k_bound();
    let switch = 10.0 * k_used.max(1.0);
    let dir = if t1 >= t0 { 1.0 } else { -1.0 };
    let ctl = StepControl::with_tol(opts.tol).max_step(opts.max_step);

    let mut sampler = Sampler {
        dt: opts.sample_dt,
        origin: t0,
        dir,
        next: 1,
        t: vec![t0],
        u: vec![u0],
    };
    let direct = Direct(p);
    let inverted = Inverted(p);
    let mut t = t0;
    let mut value = u0;
    let mut mode = if u0.abs() > switch {
        value = 1.0 / u0;
        Mode::Inverted
    } else {
        Mode::Direct
    };

    while t != t1 {
        match mode {
            Mode::Direct => {
                let mut stepper = Dopri5::new(&direct, t, [value], t1, ctl);
                while let Some(step) = stepper.step()? {
                    sampler.emit(&step, false, step.t1());
                    t = step.t1();
                    value = step.y1()[0];
                    if value.abs() > switch {
                        value = 1.0 / value;
                        mode = Mode::Inverted;
                        break;
                    }
                }
            }
            Mode::Inverted => {
                let mut stepper = Dopri5::new(&inverted, t, [value], t1, ctl);
                while let Some(step) = stepper.step()? {
                    let (w0, w1) = (step.y0()[0], step.y1()[0]);
                    if w0 != 0.0 && w1.signum() != w0.signum() || w1 == 0.0 {
                        let (mut a, mut b) = (step.t0, step.t1());
                        while (b - a).abs() > 1e-12 {
                            let mid = 0.5 * (a + b);
                            if step.eval(mid)[0].signum() == w0.signum() {
                                a = mid;
                            } else {
                                b = mid;
                            }
                        }
                        if sampler.dt.is_some() {
                            sampler.emit(&step, true, a);
                        }
                        return Ok(RiccatiTrace {
                            t_samples: sampler.t,
                            u_samples: sampler.u,
                            blowup_time: Some(0.5 * (a + b)),
                            k_used,
                        });
                    }
                    sampler.emit(&step, true, step.t1());
                    t = step.t1();
                    value = w1;
                    if value.abs() > 2.0 / switch {
                        value = 1.0 / value;
                        mode = Mode::Direct;
                        break;
                    }
                }
            }
        }
    }
    Ok(RiccatiTrace {
        t_samples: sampler.t,
        u_samples: sampler.u,
        blowup_time: None,
        k_used,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Envelope {
    pub lower: f64,
    pub upper: f64,
}

/// Bounds `-k ≤ u(t) ≤ k coth(kt)` for solutions defined on `[0, ∞)` when
/// `𝕂 > -k²`. `t = ∞` yields the asymptote `k`.
pub fn comparison_envelope(k: f64, t: f64) -> Result<Envelope> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::Domain(format!("envelope needs k > 0, got {k}")));
    }
    if !(t > 0.0) {
        return Err(Error::Domain(format!("envelope is defined for t > 0, got {t}")));
    }
    Ok(Envelope {
        lower: -k,
        upper: k / (k * t).tanh(),
    })
}
