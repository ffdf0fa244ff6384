//! Cubic interpolating splines on monotone knots.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct CubicSpline {
    knots: Vec<f64>,
    values: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
    uniform_step: Option<f64>,
}

impl CubicSpline {
    /// Natural cubic spline through `(knots[i], values[i])`.
    pub fn natural(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let n = knots.len();
        if n != values.len() {
            return Err(Error::Domain(format!(
                "spline has {n} knots but {} values",
                values.len()
            )));
        }
        if n < 4 {
            return Err(Error::InsufficientData { needed: 4, got: n });
        }
        if knots.iter().chain(values.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Domain("spline data must be finite".into()));
        }
        if knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("spline knots must be strictly increasing".into()));
        }

        // Thomas algorithm on the interior second derivatives.
        let mut m = vec![0.0; n];
        let mut c_prime = vec![0.0; n];
        let mut d_prime = vec![0.0; n];
        for i in 1..n - 1 {
            let h0 = knots[i] - knots[i - 1];
            let h1 = knots[i + 1] - knots[i];
            let a = h0;
            let b = 2.0 * (h0 + h1);
            let c = h1;
            let d = 6.0 * ((values[i + 1] - values[i]) / h1 - (values[i] - values[i - 1]) / h0);
            let denom = b - a * c_prime[i - 1];
            c_prime[i] = c / denom;
            d_prime[i] = (d - a * d_prime[i - 1]) / denom;
        }
        for i in (1..n - 1).rev() {
            m[i] = d_prime[i] - c_prime[i] * m[i + 1];
        }

        let h = (knots[n - 1] - knots[0]) / (n - 1) as f64;
        let uniform = knots
            .iter()
            .enumerate()
            .all(|(i, &k)| (k - (knots[0] + i as f64 * h)).abs() <= 1e-9 * h);
        Ok(CubicSpline {
            knots,
            values,
            m,
            uniform_step: uniform.then_some(h),
        })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.knots[0], *self.knots.last().unwrap())
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn interval(&self, t: f64) -> usize {
        let n = self.knots.len();
        let i = match self.uniform_step {
            Some(h) => ((t - self.knots[0]) / h).floor().max(0.0) as usize,
            None => self.knots.partition_point(|&k| k <= t).saturating_sub(1),
        };
        let mut i = i.min(n - 2);
        // uniform guess may be off by one from rounding
        if t < self.knots[i] && i > 0 {
            i -= 1;
        } else if t > self.knots[i + 1] && i + 2 < n {
            i += 1;
        }
        i
    }

    /// Evaluates the spline; outside the knot range the end cubic is used.
    pub fn eval(&self, t: f64) -> f64 {
        let i = self.interval(t);
        let (x0, x1) = (self.knots[i], self.knots[i + 1]);
        let h = x1 - x0;
        let a = (x1 - t) / h;
        let b = (t - x0) / h;
        a * self.values[i]
            + b * self.values[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }
}
