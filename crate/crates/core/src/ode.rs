//! Dormand–Prince 5(4) stepper with continuous extension.
//!
//! The stepper is exposed one accepted step at a time so that drivers can
//! renormalize linear states, wrap periodic coordinates, or switch
//! formulations between steps. [`solve_dense`] is the plain driver.

use crate::error::{Error, Result};

/// Right-hand side of `y' = f(t, y)` for a fixed-size state.
pub trait OdeSystem<const N: usize> {
    fn rhs(&self, t: f64, y: &[f64; N]) -> [f64; N];
}

impl<const N: usize, F> OdeSystem<N> for F
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    fn rhs(&self, t: f64, y: &[f64; N]) -> [f64; N] {
        self(t, y)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct StepControl {
    pub rtol: f64,
    pub atol: f64,
    /// Upper bound on |h|.
    pub h_max: f64,
    /// Initial step; `None` selects one from the local derivative scale.
    pub h_init: Option<f64>,
    pub max_steps: usize,
}

impl StepControl {
    pub fn with_tol(tol: f64) -> Self {
        StepControl {
            rtol: tol,
            atol: tol,
            ..Self::default()
        }
    }

    pub fn max_step(mut self, h_max: f64) -> Self {
        self.h_max = h_max;
        self
    }
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl {
            rtol: 1e-10,
            atol: 1e-10,
            h_max: f64::INFINITY,
            h_init: None,
            max_steps: 5_000_000,
        }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// One accepted step together with its quartic continuous extension.
#[derive(Debug, Clone)]
pub struct DenseStep<const N: usize> {
    pub t0: f64,
    pub h: f64,
    f0: [f64; N],
    rcont: [[f64; N]; 5],
}

impl<const N: usize> DenseStep<N> {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn y0(&self) -> [f64; N] {
        self.rcont[0]
    }

    pub fn y1(&self) -> [f64; N] {
        let mut y = [0.0; N];
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.rcont[0][i] + self.rcont[1][i];
        }
        y
    }

    /// Interpolated state at `t`, which should lie in the step.
    pub fn eval(&self, t: f64) -> [f64; N] {
        let s = (t - self.t0) / self.h;
        let s1 = 1.0 - s;
        let mut y = [0.0; N];
        for (i, yi) in y.iter_mut().enumerate() {
            let r = &self.rcont;
            *yi = r[0][i] + s * (r[1][i] + s1 * (r[2][i] + s * (r[3][i] + s1 * r[4][i])));
        }
        y
    }

    /// State at `t` from a fresh fifth-order step out of the step start.
    /// Costs a full step of right-hand-side evaluations but carries the
    /// accuracy of the accepted steps rather than that of the quartic
    /// interpolant.
    pub fn restep<S: OdeSystem<N>>(&self, sys: &S, t: f64) -> [f64; N] {
        let h = t - self.t0;
        if h == 0.0 {
            return self.rcont[0];
        }
        stages(sys, self.t0, &self.rcont[0], &self.f0, h, t).y1
    }

    fn contains(&self, t: f64) -> bool {
        let (lo, hi) = if self.h >= 0.0 {
            (self.t0, self.t0 + self.h)
        } else {
            (self.t0 + self.h, self.t0)
        };
        t >= lo && t <= hi
    }
}

struct Stages<const N: usize> {
    /// `k2..k7`; `k7` is the derivative at the new point.
    k: [[f64; N]; 6],
    y1: [f64; N],
}

fn stages<S: OdeSystem<N>, const N: usize>(sys: &S, t: f64, y: &[f64; N], k1: &[f64; N], h: f64, t1: f64) -> Stages<N> {
    let stage = |coeffs: &[(f64, &[f64; N])]| {
        let mut out = *y;
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (c, k) in coeffs {
                acc += c * k[i];
            }
            *o += h * acc;
        }
        out
    };
    let k2 = sys.rhs(t + C2 * h, &stage(&[(A21, k1)]));
    let k3 = sys.rhs(t + C3 * h, &stage(&[(A31, k1), (A32, &k2)]));
    let k4 = sys.rhs(t + C4 * h, &stage(&[(A41, k1), (A42, &k2), (A43, &k3)]));
    let k5 = sys.rhs(t + C5 * h, &stage(&[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
    let k6 = sys.rhs(
        t + h,
        &stage(&[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
    );
    let y1 = stage(&[(A71, k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
    let k7 = sys.rhs(t1, &y1);
    Stages {
        k: [k2, k3, k4, k5, k6, k7],
        y1,
    }
}

/// Step-by-step integrator from `t` towards `t_end`.
pub struct Dopri5<'a, S, const N: usize> {
    sys: &'a S,
    t: f64,
    y: [f64; N],
    f: [f64; N],
    t_end: f64,
    h: f64,
    ctl: StepControl,
    steps: usize,
    rejected_last: bool,
}

impl<'a, S: OdeSystem<N>, const N: usize> Dopri5<'a, S, N> {
    pub fn new(sys: &'a S, t0: f64, y0: [f64; N], t_end: f64, ctl: StepControl) -> Self {
        let f = sys.rhs(t0, &y0);
        let mut stepper = Dopri5 {
            sys,
            t: t0,
            y: y0,
            f,
            t_end,
            h: 0.0,
            ctl,
            steps: 0,
            rejected_last: false,
        };
        stepper.h = match ctl.h_init {
            Some(h) => h.abs().min(ctl.h_max) * stepper.direction(),
            None => stepper.initial_step(),
        };
        stepper
    }

    fn direction(&self) -> f64 {
        if self.t_end >= self.t {
            1.0
        } else {
            -1.0
        }
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &[f64; N] {
        &self.y
    }

    pub fn finished(&self) -> bool {
        self.t == self.t_end
    }

    /// Hairer–Wanner starting step heuristic.
    fn initial_step(&self) -> f64 {
        let dir = self.direction();
        let span = (self.t_end - self.t).abs();
        if span == 0.0 {
            return 0.0;
        }
        let sk = |i: usize| self.ctl.atol + self.ctl.rtol * self.y[i].abs();
        let rms = |v: &dyn Fn(usize) -> f64| -> f64 {
            ((0..N).map(|i| (v(i) / sk(i)).powi(2)).sum::<f64>() / N as f64).sqrt()
        };
        let dnf = rms(&|i| self.f[i]);
        let dny = rms(&|i| self.y[i]);
        let mut h = if dnf <= 1e-10 || dny <= 1e-10 {
            1e-6
        } else {
            0.01 * dny / dnf
        };
        h = h.min(self.ctl.h_max).min(span);
        let y1: [f64; N] = std::array::from_fn(|i| self.y[i] + dir * h * self.f[i]);
        let f1 = self.sys.rhs(self.t + dir * h, &y1);
        let der2 = rms(&|i| f1[i] - self.f[i]) / h;
        let der12 = der2.max(dnf);
        let h1 = if der12 <= 1e-15 {
            (h * 1e-3).max(1e-6)
        } else {
            (0.01 / der12).powf(0.2)
        };
        dir * (100.0 * h).min(h1).min(self.ctl.h_max).min(span)
    }

    /// Rescales state and cached derivative; for linear homogeneous systems.
    pub fn rescale(&mut self, factor: f64) {
        for i in 0..N {
            self.y[i] *= factor;
            self.f[i] *= factor;
        }
    }

    /// Applies a symmetry of the vector field (e.g. a period shift) to the
    /// current state. The cached derivative is kept, so `map` must leave
    /// `f` unchanged.
    pub fn remap_state(&mut self, map: impl FnOnce(&mut [f64; N])) {
        map(&mut self.y);
    }

    /// Advances one accepted step. Returns `None` once `t_end` is reached.
    pub fn step(&mut self) -> Result<Option<DenseStep<N>>> {
        if self.finished() {
            return Ok(None);
        }
        let dir = self.direction();
        loop {
            if self.steps >= self.ctl.max_steps {
                return Err(Error::IntegrationFailure {
                    t: self.t,
                    reason: format!("exceeded {} steps", self.ctl.max_steps),
                });
            }
            let mut h = self.h;
            let remaining = self.t_end - self.t;
            let mut last = false;
            if h.abs() >= remaining.abs() * (1.0 - 1e-12) {
                h = remaining;
                last = true;
            }
            let h_floor = 1e-14 * self.t.abs().max(1.0);
            if h.abs() < h_floor && !last {
                return Err(Error::IntegrationFailure {
                    t: self.t,
                    reason: format!("step size underflow (h = {h:e})"),
                });
            }
            self.steps += 1;

            let (t, y, k1) = (self.t, self.y, self.f);
            let t1 = if last { self.t_end } else { t + h };
            let Stages { k, y1 } = stages(self.sys, t, &y, &k1, h, t1);
            let [k3, k4, k5, k6, k7] = [k[1], k[2], k[3], k[4], k[5]];

            let mut err = 0.0;
            for i in 0..N {
                let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sk = self.ctl.atol + self.ctl.rtol * y[i].abs().max(y1[i].abs());
                err += (e / sk).powi(2);
            }
            let err = (err / N as f64).sqrt();
            if !err.is_finite() {
                self.h = h * 0.2;
                self.rejected_last = true;
                continue;
            }

            let fac = (0.9 * err.powf(-0.2)).clamp(0.2, 10.0);
            if err <= 1.0 {
                let mut rcont = [[0.0; N]; 5];
                for i in 0..N {
                    let dy = y1[i] - y[i];
                    let bspl = h * k1[i] - dy;
                    rcont[0][i] = y[i];
                    rcont[1][i] = dy;
                    rcont[2][i] = bspl;
                    rcont[3][i] = dy - h * k7[i] - bspl;
                    rcont[4][i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
                }
                let fac = if self.rejected_last { fac.min(1.0) } else { fac };
                self.rejected_last = false;
                self.t = t1;
                self.y = y1;
                self.f = k7;
                self.h = (h * fac).abs().min(self.ctl.h_max) * dir;
                return Ok(Some(DenseStep {
                    t0: t,
                    h: t1 - t,
                    f0: k1,
                    rcont,
                }));
            }
            self.rejected_last = true;
            self.h = h * fac.min(1.0);
        }
    }
}

/// Dense solution assembled from consecutive accepted steps.
#[derive(Debug, Clone)]
pub struct DenseSolution<const N: usize> {
    pub steps: Vec<DenseStep<N>>,
    pub t_start: f64,
    pub t_end: f64,
    pub y_start: [f64; N],
}

impl<const N: usize> DenseSolution<N> {
    pub fn forward(&self) -> bool {
        self.t_end >= self.t_start
    }

    pub fn contains(&self, t: f64) -> bool {
        let (lo, hi) = self.span();
        t >= lo && t <= hi
    }

    pub fn span(&self) -> (f64, f64) {
        if self.forward() {
            (self.t_start, self.t_end)
        } else {
            (self.t_end, self.t_start)
        }
    }

    /// Index of the step covering `t`.
    pub fn locate(&self, t: f64) -> Option<usize> {
        if !self.contains(t) || self.steps.is_empty() {
            return None;
        }
        let idx = if self.forward() {
            self.steps.partition_point(|s| s.t1() < t)
        } else {
            self.steps.partition_point(|s| s.t1() > t)
        };
        let idx = idx.min(self.steps.len() - 1);
        debug_assert!(self.steps[idx].contains(t) || idx + 1 == self.steps.len());
        Some(idx)
    }

    pub fn eval(&self, t: f64) -> Option<[f64; N]> {
        if self.steps.is_empty() {
            return (t == self.t_start).then_some(self.y_start);
        }
        self.locate(t).map(|i| self.steps[i].eval(t))
    }

    pub fn end_state(&self) -> [f64; N] {
        self.steps.last().map(|s| s.y1()).unwrap_or(self.y_start)
    }
}

pub fn solve_dense<S: OdeSystem<N>, const N: usize>(
    sys: &S,
    t0: f64,
    y0: [f64; N],
    t1: f64,
    ctl: StepControl,
) -> Result<DenseSolution<N>> {
    let mut stepper = Dopri5::new(sys, t0, y0, t1, ctl);
    let mut steps = Vec::new();
    while let Some(step) = stepper.step()? {
        steps.push(step);
    }
    Ok(DenseSolution {
        steps,
        t_start: t0,
        t_end: t1,
        y_start: y0,
    })
}
