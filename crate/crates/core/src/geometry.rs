//! Surface models, the complex structure, and curvature quantities.
//!
//! Conformal chart convention: on the torus the metric is
//! `g = e^{2φ}(dx² + dy²)` and a unit tangent vector with angle `theta`
//! has chart velocity `e^{-φ}(cos θ, sin θ)`. Rotation by `i` is the
//! Euclidean quarter turn, which is also a g-isometry because g is
//! conformal.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::CurvatureProfile;

/// One real Fourier mode `cos·cos(2π(kx x/Lx + ky y/Ly)) + sin·sin(...)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierMode2d {
    pub kx: i32,
    pub ky: i32,
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

/// Doubly periodic function given by finitely many Fourier modes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fourier2d {
    modes: Vec<FourierMode2d>,
    periods: [f64; 2],
}

impl Fourier2d {
    pub fn new(modes: Vec<FourierMode2d>, periods: [f64; 2]) -> Result<Self> {
        if !(periods[0] > 0.0 && periods[1] > 0.0 && periods.iter().all(|p| p.is_finite())) {
            return Err(Error::InvalidModel("torus periods must be positive".into()));
        }
        if modes.iter().any(|m| !m.cos.is_finite() || !m.sin.is_finite()) {
            return Err(Error::InvalidModel("Fourier coefficients must be finite".into()));
        }
        Ok(Fourier2d { modes, periods })
    }

    pub fn zero(periods: [f64; 2]) -> Self {
        Fourier2d {
            modes: Vec::new(),
            periods,
        }
    }

    pub fn modes(&self) -> &[FourierMode2d] {
        &self.modes
    }

    fn wavevector(&self, m: &FourierMode2d) -> (f64, f64) {
        (TAU * m.kx as f64 / self.periods[0], TAU * m.ky as f64 / self.periods[1])
    }

    pub fn value(&self, x: f64, y: f64) -> f64 {
        self.modes
            .iter()
            .map(|m| {
                let (wx, wy) = self.wavevector(m);
                let (s, c) = (wx * x + wy * y).sin_cos();
                m.cos * c + m.sin * s
            })
            .sum()
    }

    pub fn gradient(&self, x: f64, y: f64) -> [f64; 2] {
        let mut g = [0.0; 2];
        for m in &self.modes {
            let (wx, wy) = self.wavevector(m);
            let (s, c) = (wx * x + wy * y).sin_cos();
            let d = -m.cos * s + m.sin * c;
            g[0] += d * wx;
            g[1] += d * wy;
        }
        g
    }

    pub fn laplacian(&self, x: f64, y: f64) -> f64 {
        self.modes
            .iter()
            .map(|m| {
                let (wx, wy) = self.wavevector(m);
                let (s, c) = (wx * x + wy * y).sin_cos();
                -(wx * wx + wy * wy) * (m.cos * c + m.sin * s)
            })
            .sum()
    }

    /// Same function multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Fourier2d {
            modes: self
                .modes
                .iter()
                .map(|m| FourierMode2d {
                    cos: m.cos * factor,
                    sin: m.sin * factor,
                    ..*m
                })
                .collect(),
            periods: self.periods,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.modes.iter().all(|m| m.cos == 0.0 && m.sin == 0.0)
    }
}

#[derive(Debug, Clone)]
pub enum ModelKind {
    ConstantCurvature {
        curvature: f64,
        magnetic: f64,
        euler_characteristic: i64,
        area: f64,
    },
    ConformalTorus {
        phi: Fourier2d,
        b: Fourier2d,
        periods: [f64; 2],
    },
    AbstractProfile {
        profile: CurvatureProfile,
        euler_characteristic: Option<i64>,
        area: Option<f64>,
    },
}

/// A closed oriented surface with magnetic intensity.
#[derive(Debug, Clone)]
pub struct SurfaceModel {
    kind: ModelKind,
}

const GAUSS_BONNET_TOL: f64 = 1e-9;

impl SurfaceModel {
    /// Constant curvature `curvature` with constant magnetic intensity.
    /// When `area` is `None` it is taken from Gauss–Bonnet.
    pub fn constant_curvature(
        curvature: f64,
        magnetic: f64,
        euler_characteristic: i64,
        area: Option<f64>,
    ) -> Result<Self> {
        if !curvature.is_finite() || !magnetic.is_finite() {
            return Err(Error::InvalidModel(
                "curvature and magnetic intensity must be finite".into(),
            ));
        }
        let two_pi_chi = TAU * euler_characteristic as f64;
        let area = match area {
            Some(a) => a,
            None if curvature != 0.0 => two_pi_chi / curvature,
            None => {
                return Err(Error::InvalidModel(
                    "area is required when the curvature vanishes".into(),
                ))
            }
        };
        if !(area > 0.0 && area.is_finite()) {
            return Err(Error::InvalidModel(format!(
                "area must be positive (got {area}); check the sign of the curvature against χ"
            )));
        }
        if (curvature * area - two_pi_chi).abs() > GAUSS_BONNET_TOL {
            return Err(Error::InvalidModel(format!(
                "Gauss–Bonnet violated: K·area = {} but 2πχ = {}",
                curvature * area,
                two_pi_chi
            )));
        }
        Ok(SurfaceModel {
            kind: ModelKind::ConstantCurvature {
                curvature,
                magnetic,
                euler_characteristic,
                area,
            },
        })
    }

    pub fn conformal_torus(periods: [f64; 2], phi: Vec<FourierMode2d>, b: Vec<FourierMode2d>) -> Result<Self> {
        let phi = Fourier2d::new(phi, periods)?;
        let b = Fourier2d::new(b, periods)?;
        Ok(SurfaceModel {
            kind: ModelKind::ConformalTorus { phi, b, periods },
        })
    }

    pub fn abstract_profile(
        profile: CurvatureProfile,
        euler_characteristic: Option<i64>,
        area: Option<f64>,
    ) -> Result<Self> {
        if let Some(a) = area {
            if !(a > 0.0 && a.is_finite()) {
                return Err(Error::InvalidModel("area must be positive".into()));
            }
        }
        Ok(SurfaceModel {
            kind: ModelKind::AbstractProfile {
                profile,
                euler_characteristic,
                area,
            },
        })
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            ModelKind::ConstantCurvature { .. } => "constant_curvature",
            ModelKind::ConformalTorus { .. } => "conformal_torus",
            ModelKind::AbstractProfile { .. } => "abstract_profile",
        }
    }

    pub fn euler_characteristic(&self) -> Option<i64> {
        match self.kind {
            ModelKind::ConstantCurvature {
                euler_characteristic, ..
            } => Some(euler_characteristic),
            ModelKind::ConformalTorus { .. } => Some(0),
            ModelKind::AbstractProfile {
                euler_characteristic, ..
            } => euler_characteristic,
        }
    }

    pub fn area(&self) -> Option<f64> {
        match &self.kind {
            ModelKind::ConstantCurvature { area, .. } => Some(*area),
            ModelKind::ConformalTorus { phi, periods, .. } => {
                torus_integral(periods, DEFAULT_GRID, GRID_TOL, |x, y| (2.0 * phi.value(x, y)).exp()).ok()
            }
            ModelKind::AbstractProfile { area, .. } => *area,
        }
    }

    pub fn periods(&self) -> Option<[f64; 2]> {
        match self.kind {
            ModelKind::ConformalTorus { periods, .. } => Some(periods),
            _ => None,
        }
    }

    /// The same metric with magnetic intensity multiplied by `lambda`.
    pub fn with_magnetic_scaled(&self, lambda: f64) -> Result<Self> {
        let kind = match &self.kind {
            ModelKind::ConstantCurvature {
                curvature,
                magnetic,
                euler_characteristic,
                area,
            } => ModelKind::ConstantCurvature {
                curvature: *curvature,
                magnetic: magnetic * lambda,
                euler_characteristic: *euler_characteristic,
                area: *area,
            },
            ModelKind::ConformalTorus { phi, b, periods } => ModelKind::ConformalTorus {
                phi: phi.clone(),
                b: b.scaled(lambda),
                periods: *periods,
            },
            ModelKind::AbstractProfile { .. } => {
                return Err(Error::Unsupported(
                    "abstract profiles carry no magnetic intensity to scale",
                ))
            }
        };
        Ok(SurfaceModel { kind })
    }

    /// The system `(g, -b)`.
    pub fn with_flipped_field(&self) -> Result<Self> {
        self.with_magnetic_scaled(-1.0)
    }

    /// Conformal factor `φ` at a point (zero off the torus chart).
    pub fn conformal_factor(&self, x: f64, y: f64) -> f64 {
        match &self.kind {
            ModelKind::ConformalTorus { phi, .. } => phi.value(x, y),
            _ => 0.0,
        }
    }

    pub fn magnetic_intensity(&self, x: f64, y: f64) -> Result<f64> {
        match &self.kind {
            ModelKind::ConstantCurvature { magnetic, .. } => Ok(*magnetic),
            ModelKind::ConformalTorus { b, .. } => Ok(b.value(x, y)),
            ModelKind::AbstractProfile { .. } => Err(Error::Unsupported(
                "abstract profiles have no pointwise magnetic intensity",
            )),
        }
    }

    /// Chart velocity of a unit tangent vector.
    pub fn velocity(&self, v: &UnitTangent) -> [f64; 2] {
        let scale = (-self.conformal_factor(v.x, v.y)).exp();
        let (s, c) = v.theta.sin_cos();
        [scale * c, scale * s]
    }

    /// Metric inner product of two chart vectors based at `(x, y)`.
    pub fn g_inner(&self, x: f64, y: f64, a: [f64; 2], b: [f64; 2]) -> f64 {
        (2.0 * self.conformal_factor(x, y)).exp() * (a[0] * b[0] + a[1] * b[1])
    }
}

/// A unit tangent vector in chart coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitTangent {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl UnitTangent {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        UnitTangent { x, y, theta }
    }

    /// The opposite vector `-v` at the same point.
    pub fn reversed(&self) -> Self {
        UnitTangent {
            theta: (self.theta + PI).rem_euclid(TAU),
            ..*self
        }
    }
}

/// Rotation by +π/2 in the surface orientation.
pub fn rotate_i(v: UnitTangent) -> UnitTangent {
    UnitTangent {
        theta: (v.theta + PI / 2.0).rem_euclid(TAU),
        ..v
    }
}

pub fn gaussian_curvature(m: &SurfaceModel, p: [f64; 2]) -> Result<f64> {
    match &m.kind {
        ModelKind::ConstantCurvature { curvature, .. } => Ok(*curvature),
        ModelKind::ConformalTorus { phi, .. } => {
            let (x, y) = (p[0], p[1]);
            Ok(-(-2.0 * phi.value(x, y)).exp() * phi.laplacian(x, y))
        }
        ModelKind::AbstractProfile { .. } => Err(Error::Unsupported("abstract profiles have no pointwise geometry")),
    }
}

/// `K(x) - d_x b(i v) + b(x)^2`.
pub fn magnetic_curvature(m: &SurfaceModel, v: &UnitTangent) -> Result<f64> {
    match &m.kind {
        ModelKind::ConstantCurvature {
            curvature, magnetic, ..
        } => Ok(curvature + magnetic * magnetic),
        ModelKind::ConformalTorus { phi, b, .. } => {
            let (x, y) = (v.x, v.y);
            let e = (-phi.value(x, y)).exp();
            let k = -e * e * phi.laplacian(x, y);
            let grad_b = b.gradient(x, y);
            let (s, c) = v.theta.sin_cos();
            // chart components of i v are e^{-φ}(-sin θ, cos θ)
            let db_iv = e * (-grad_b[0] * s + grad_b[1] * c);
            let bv = b.value(x, y);
            Ok(k - db_iv + bv * bv)
        }
        ModelKind::AbstractProfile { .. } => Err(Error::Unsupported("abstract profiles have no pointwise geometry")),
    }
}

pub(crate) const DEFAULT_GRID: usize = 128;
pub(crate) const GRID_TOL: f64 = 1e-8;
const MAX_GRID: usize = 2048;

/// Tensor trapezoidal rule over one period cell, doubling the grid from
/// `start` until successive estimates agree to `tol`.
pub(crate) fn torus_integral<F: Fn(f64, f64) -> f64>(periods: &[f64; 2], start: usize, tol: f64, f: F) -> Result<f64> {
    let rule = |n: usize| {
        let (hx, hy) = (periods[0] / n as f64, periods[1] / n as f64);
        let mut sum = 0.0;
        for i in 0..n {
            let x = i as f64 * hx;
            let row: f64 = (0..n).map(|j| f(x, j as f64 * hy)).sum();
            sum += row;
        }
        sum * hx * hy
    };
    let mut n = start.max(4);
    let mut coarse = rule(n);
    loop {
        let fine = rule(2 * n);
        let estimate = (fine - coarse).abs();
        if estimate < tol {
            return Ok(fine);
        }
        n *= 2;
        if 2 * n > MAX_GRID {
            return Err(Error::Resolution {
                estimate,
                requested: tol,
                grid: n,
            });
        }
        coarse = fine;
    }
}

/// `|∫ K dν - 2πχ|`.
pub fn gauss_bonnet_residual(m: &SurfaceModel) -> Result<f64> {
    gauss_bonnet_residual_with(m, GRID_TOL)
}

pub fn gauss_bonnet_residual_with(m: &SurfaceModel, tol: f64) -> Result<f64> {
    match &m.kind {
        ModelKind::ConstantCurvature {
            curvature,
            euler_characteristic,
            area,
            ..
        } => Ok((curvature * area - TAU * *euler_characteristic as f64).abs()),
        ModelKind::ConformalTorus { phi, periods, .. } => {
            let total = torus_integral(periods, DEFAULT_GRID, tol, |x, y| {
                let k = gaussian_curvature(m, [x, y]).unwrap_or(f64::NAN);
                k * (2.0 * phi.value(x, y)).exp()
            })?;
            Ok(total.abs())
        }
        ModelKind::AbstractProfile { .. } => Err(Error::Unsupported("abstract profiles have no pointwise geometry")),
    }
}

/// Outcome of the necessary condition `∫ b² dν < -2πχ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InequalityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub passes: bool,
    /// Largest admissible `λ²` for the scaled intensity `λ b`, when `lhs > 0`.
    pub lambda_sq_threshold: Option<f64>,
}

pub fn integral_inequality_check(m: &SurfaceModel) -> Result<InequalityCheck> {
    let (lhs, chi) = match &m.kind {
        ModelKind::ConstantCurvature {
            magnetic,
            euler_characteristic,
            area,
            ..
        } => (magnetic * magnetic * area, *euler_characteristic),
        ModelKind::ConformalTorus { phi, b, periods } => {
            let lhs = torus_integral(periods, DEFAULT_GRID, GRID_TOL, |x, y| {
                let bv = b.value(x, y);
                bv * bv * (2.0 * phi.value(x, y)).exp()
            })?;
            (lhs, 0)
        }
        ModelKind::AbstractProfile { .. } => {
            return Err(Error::Unsupported(
                "abstract profiles carry no magnetic intensity to integrate",
            ))
        }
    };
    let rhs = TAU * (-chi) as f64;
    Ok(InequalityCheck {
        lhs,
        rhs,
        passes: lhs < rhs,
        lambda_sq_threshold: (lhs > 0.0).then(|| rhs / lhs),
    })
}
