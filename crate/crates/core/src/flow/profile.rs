use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spline::CubicSpline;

/// Term `cos·cos(freq·t) + sin·sin(freq·t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierTerm {
    pub freq: f64,
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierSeries {
    #[serde(default)]
    pub constant: f64,
    #[serde(default)]
    pub terms: Vec<FourierTerm>,
}

impl FourierSeries {
    pub fn eval(&self, t: f64) -> f64 {
        self.constant
            + self
                .terms
                .iter()
                .map(|term| {
                    let (s, c) = (term.freq * t).sin_cos();
                    term.cos * c + term.sin * s
                })
                .sum::<f64>()
    }

    /// Guaranteed lower bound `constant - Σ (|cos| + |sin|)`.
    pub fn lower_bound(&self) -> f64 {
        self.constant - self.terms.iter().map(|t| t.cos.abs() + t.sin.abs()).sum::<f64>()
    }
}

type ProfileFn = dyn Fn(f64) -> f64 + Send + Sync;

pub enum ProfileFunction {
    Constant(f64),
    Fourier(FourierSeries),
    Table { spline: CubicSpline, period: Option<f64> },
    Custom(Box<ProfileFn>),
}

impl fmt::Debug for ProfileFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProfileFunction::Constant(c) => write!(f, "Constant({c})"),
            ProfileFunction::Fourier(s) => write!(f, "Fourier({s:?})"),
            ProfileFunction::Table { spline, period } => {
                write!(f, "Table({} knots, period {period:?})", spline.knots().len())
            }
            ProfileFunction::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl ProfileFunction {
    fn eval(&self, s: f64) -> f64 {
        match self {
            ProfileFunction::Constant(c) => *c,
            ProfileFunction::Fourier(series) => series.eval(s),
            ProfileFunction::Table { spline, period } => match period {
                Some(p) => {
                    let (a, _) = spline.domain();
                    spline.eval(a + (s - a).rem_euclid(*p))
                }
                None => spline.eval(s),
            },
            ProfileFunction::Custom(f) => f(s),
        }
    }

    fn domain(&self) -> (f64, f64) {
        match self {
            ProfileFunction::Table { spline, period: None } => spline.domain(),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }
}

/// Magnetic curvature `𝕂(t)` along an orbit, or a user-declared profile.
///
/// Evaluation is `f(sign·t + offset)` so that time reversal and time
/// shifts are exact and cheap.
#[derive(Debug, Clone)]
pub struct CurvatureProfile {
    function: Arc<ProfileFunction>,
    sign: f64,
    offset: f64,
    k_bound: f64,
    provenance: String,
}

/// `k` with `𝕂 > -k²` derived from a sampled minimum.
pub(crate) fn k_bound_from_min(min: f64) -> f64 {
    (-min).max(0.0).sqrt() + 1e-6
}

const BOUND_SLACK: f64 = 1e-12;

impl CurvatureProfile {
    fn from_parts(function: ProfileFunction, k_bound: f64, provenance: impl Into<String>) -> Self {
        CurvatureProfile {
            function: Arc::new(function),
            sign: 1.0,
            offset: 0.0,
            k_bound,
            provenance: provenance.into(),
        }
    }

    pub fn constant(value: f64) -> Self {
        Self::from_parts(ProfileFunction::Constant(value), k_bound_from_min(value), "constant")
    }

    /// Fourier profile; the bound is declared by the caller.
    pub fn fourier(series: FourierSeries, k_bound: f64) -> Result<Self> {
        if !series.constant.is_finite()
            || series
                .terms
                .iter()
                .any(|t| !(t.freq.is_finite() && t.cos.is_finite() && t.sin.is_finite()))
        {
            return Err(Error::Domain("Fourier profile coefficients must be finite".into()));
        }
        Self::declared(ProfileFunction::Fourier(series), k_bound, "abstract")
    }

    /// Fourier profile with the bound taken from its coefficient envelope.
    pub fn fourier_auto(series: FourierSeries) -> Result<Self> {
        let k = k_bound_from_min(series.lower_bound());
        Self::fourier(series, k)
    }

    pub fn table(knots: Vec<f64>, values: Vec<f64>, period: Option<f64>, k_bound: Option<f64>) -> Result<Self> {
        if let Some(p) = period {
            if !(p > 0.0 && p.is_finite()) {
                return Err(Error::Domain("table period must be positive".into()));
            }
        }
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let spline = CubicSpline::natural(knots, values)?;
        let k = k_bound.unwrap_or_else(|| k_bound_from_min(min));
        Self::declared(ProfileFunction::Table { spline, period }, k, "abstract")
    }

    pub fn custom<F>(f: F, k_bound: f64) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::declared(ProfileFunction::Custom(Box::new(f)), k_bound, "abstract")
    }

    fn declared(function: ProfileFunction, k_bound: f64, provenance: &str) -> Result<Self> {
        if !(k_bound >= 0.0 && k_bound.is_finite()) {
            return Err(Error::Domain(format!("k_bound must be finite and ≥ 0, got {k_bound}")));
        }
        Ok(Self::from_parts(function, k_bound, provenance))
    }

    /// Spline through orbit samples, bound from the sampled minimum.
    pub(crate) fn from_samples(knots: Vec<f64>, values: Vec<f64>, provenance: String) -> Result<Self> {
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let spline = CubicSpline::natural(knots, values)?;
        Ok(Self::from_parts(
            ProfileFunction::Table { spline, period: None },
            k_bound_from_min(min),
            provenance,
        ))
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        self.function.eval(self.sign * t + self.offset)
    }

    pub fn k_bound(&self) -> f64 {
        self.k_bound
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn with_provenance(mut self, provenance: impl Into<String>) -> Self {
        self.provenance = provenance.into();
        self
    }

    /// Interval of times on which the profile is defined.
    pub fn domain(&self) -> (f64, f64) {
        let (a, b) = self.function.domain();
        let ta = (a - self.offset) * self.sign;
        let tb = (b - self.offset) * self.sign;
        (ta.min(tb), ta.max(tb))
    }

    pub fn contains(&self, t: f64) -> bool {
        let (lo, hi) = self.domain();
        t >= lo - 1e-12 && t <= hi + 1e-12
    }

    /// `t ↦ 𝕂(-t)`.
    pub fn flipped(&self) -> Self {
        CurvatureProfile {
            function: Arc::clone(&self.function),
            sign: -self.sign,
            offset: self.offset,
            k_bound: self.k_bound,
            provenance: format!("flip({})", self.provenance),
        }
    }

    /// `t ↦ 𝕂(t + shift)`.
    pub fn shifted(&self, shift: f64) -> Self {
        CurvatureProfile {
            function: Arc::clone(&self.function),
            sign: self.sign,
            offset: self.offset + self.sign * shift,
            k_bound: self.k_bound,
            provenance: self.provenance.clone(),
        }
    }

    pub fn constant_value(&self) -> Option<f64> {
        match *self.function {
            ProfileFunction::Constant(c) => Some(c),
            _ => None,
        }
    }

    /// Sampled `(min, max)` of the profile over `[lo, hi]` at spacing `dt`.
    pub fn sampled_extrema(&self, lo: f64, hi: f64, dt: f64) -> (f64, f64) {
        if let Some(c) = self.constant_value() {
            return (c, c);
        }
        let n = ((hi - lo) / dt).ceil().max(1.0) as usize;
        (0..=n)
            .map(|i| self.eval((lo + i as f64 * dt).min(hi)))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
    }

    /// Verifies `𝕂 > -k²` on samples of `[lo, hi]`.
    pub fn check_bound(&self, lo: f64, hi: f64) -> Result<()> {
        let (min, _) = self.sampled_extrema(lo, hi, 0.01);
        if min <= -self.k_bound * self.k_bound - BOUND_SLACK {
            return Err(Error::Domain(format!(
                "profile minimum {min} violates the declared bound -k² = {}",
                -self.k_bound * self.k_bound
            )));
        }
        Ok(())
    }

    /// `∫_r^∞ du / J_z(u)²` when the profile is a nonpositive constant.
    pub(crate) fn exact_inverse_square_tail(&self, r: f64) -> Option<f64> {
        let c = self.constant_value()?;
        if c > 0.0 || r <= 0.0 {
            return None;
        }
        if c == 0.0 {
            return Some(1.0 / r);
        }
        // J_z = sinh(ku)/k, tail = k (coth(kr) - 1) = 2k / (e^{2kr} - 1)
        let k = (-c).sqrt();
        Some(2.0 * k / (2.0 * k * r).exp_m1())
    }
}
