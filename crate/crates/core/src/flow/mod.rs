//! Magnetic geodesic integration and curvature extraction along orbits.
//!
//! In the conformal chart the unit-speed magnetic geodesic equation
//! `D γ̇/dt = b(γ) i γ̇` reduces to
//!
//! ```text
//! ẋ = e^{-φ} cos θ,   ẏ = e^{-φ} sin θ,
//! θ̇ = b + e^{-φ} (φ_y cos θ − φ_x sin θ),
//! ```
//!
//! where the last term is the Christoffel contribution of `e^{2φ}`.

mod profile;

use std::f64::consts::TAU;
use std::io::Write;

use serde::Serialize;

pub use profile::{CurvatureProfile, FourierSeries, FourierTerm, ProfileFunction};

use crate::error::{Error, Result};
use crate::geometry::{magnetic_curvature, ModelKind, SurfaceModel, UnitTangent};
use crate::ode::{Dopri5, OdeSystem, StepControl};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrbitOptions {
    pub tol: f64,
    /// Output sample spacing.
    pub spacing: f64,
}

impl Default for OrbitOptions {
    fn default() -> Self {
        OrbitOptions {
            tol: 1e-10,
            spacing: 0.01,
        }
    }
}

/// A sampled unit-speed magnetic geodesic.
#[derive(Debug, Clone, Serialize)]
pub struct OrbitTrace {
    pub t_samples: Vec<f64>,
    pub states: Vec<UnitTangent>,
    pub kappa_samples: Vec<f64>,
    pub step_controls: OrbitOptions,
}

impl OrbitTrace {
    pub fn len(&self) -> usize {
        self.t_samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_samples.is_empty()
    }

    /// CSV with columns `t,x,y,theta,kappa`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,x,y,theta,kappa")?;
        for ((t, s), k) in self.t_samples.iter().zip(&self.states).zip(&self.kappa_samples) {
            writeln!(w, "{t},{},{},{},{k}", s.x, s.y, s.theta)?;
        }
        Ok(())
    }
}

struct MagneticSystem<'a> {
    model: &'a SurfaceModel,
}

impl OdeSystem<3> for MagneticSystem<'_> {
    fn rhs(&self, _t: f64, y: &[f64; 3]) -> [f64; 3] {
        let ModelKind::ConformalTorus { phi, b, .. } = self.model.kind() else {
            unreachable!("chart dynamics only exist on the torus model")
        };
        let (x, yy, theta) = (y[0], y[1], y[2]);
        let e = (-phi.value(x, yy)).exp();
        let grad = phi.gradient(x, yy);
        let (s, c) = theta.sin_cos();
        [e * c, e * s, b.value(x, yy) + e * (grad[1] * c - grad[0] * s)]
    }
}

fn wrap(y: &mut [f64; 3], periods: [f64; 2]) {
    y[0] = y[0].rem_euclid(periods[0]);
    y[1] = y[1].rem_euclid(periods[1]);
    y[2] = y[2].rem_euclid(TAU);
}

fn sample_times(horizon: f64, spacing: f64) -> Vec<f64> {
    let n = (horizon / spacing + 1e-9).floor() as usize;
    let mut ts: Vec<f64> = (0..=n).map(|i| (i as f64 * spacing).min(horizon)).collect();
    if horizon - ts[n] > 1e-9 * spacing {
        ts.push(horizon);
    } else {
        ts[n] = horizon;
    }
    ts
}

/// Integrates the magnetic geodesic from `v0` over `[0, horizon]`.
pub fn integrate_orbit(m: &SurfaceModel, v0: UnitTangent, horizon: f64, opts: OrbitOptions) -> Result<OrbitTrace> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Domain(format!("orbit horizon must be positive, got {horizon}")));
    }
    if !(opts.tol > 0.0 && opts.spacing > 0.0) {
        return Err(Error::Domain("orbit tolerance and spacing must be positive".into()));
    }
    let t_samples = sample_times(horizon, opts.spacing);
    let periods = match m.kind() {
        ModelKind::AbstractProfile { .. } => {
            return Err(Error::Unsupported("abstract profiles have no orbits to integrate"))
        }
        ModelKind::ConstantCurvature { .. } => {
            // homogeneous: the magnetic curvature is the same along every orbit
            let kappa = magnetic_curvature(m, &v0)?;
            let n = t_samples.len();
            return Ok(OrbitTrace {
                t_samples,
                states: vec![v0; n],
                kappa_samples: vec![kappa; n],
                step_controls: opts,
            });
        }
        ModelKind::ConformalTorus { periods, .. } => *periods,
    };

    let sys = MagneticSystem { model: m };
    let mut y0 = [v0.x, v0.y, v0.theta];
    wrap(&mut y0, periods);
    let mut stepper = Dopri5::new(&sys, 0.0, y0, horizon, StepControl::with_tol(opts.tol));
    let mut states = Vec::with_capacity(t_samples.len());
    states.push(UnitTangent::new(y0[0], y0[1], y0[2]));
    let mut next = 1;
    while next < t_samples.len() {
        let step = stepper.step()?.ok_or_else(|| Error::IntegrationFailure {
            t: stepper.t(),
            reason: "integrator stopped before the horizon".into(),
        })?;
        while next < t_samples.len() && t_samples[next] <= step.t1() {
            let mut y = step.eval(t_samples[next]);
            wrap(&mut y, periods);
            states.push(UnitTangent::new(y[0], y[1], y[2]));
            next += 1;
        }
        stepper.remap_state(|y| wrap(y, periods));
    }
    let kappa_samples = states
        .iter()
        .map(|s| magnetic_curvature(m, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(OrbitTrace {
        t_samples,
        states,
        kappa_samples,
        step_controls: opts,
    })
}

/// Curvature profile along a forward orbit trace.
pub fn curvature_profile(m: &SurfaceModel, orbit: &OrbitTrace) -> Result<CurvatureProfile> {
    match m.kind() {
        ModelKind::ConstantCurvature { .. } => {
            let k = orbit
                .kappa_samples
                .first()
                .copied()
                .ok_or(Error::InsufficientData { needed: 1, got: 0 })?;
            Ok(CurvatureProfile::constant(k).with_provenance("constant-model orbit"))
        }
        ModelKind::AbstractProfile { profile, .. } => Ok(profile.clone()),
        ModelKind::ConformalTorus { .. } => {
            if orbit.len() < 4 {
                return Err(Error::InsufficientData {
                    needed: 4,
                    got: orbit.len(),
                });
            }
            CurvatureProfile::from_samples(orbit.t_samples.clone(), orbit.kappa_samples.clone(), "orbit".into())
        }
    }
}

/// Profile for an abstract model (pass-through).
pub fn abstract_profile(m: &SurfaceModel) -> Result<CurvatureProfile> {
    match m.kind() {
        ModelKind::AbstractProfile { profile, .. } => Ok(profile.clone()),
        _ => Err(Error::Unsupported("model has pointwise geometry; integrate an orbit")),
    }
}

/// Orbit through `v0` on `[-horizon, horizon]`.
///
/// The past half is obtained by integrating the system `(g, -b)` forward
/// from `-v0`, whose magnetic curvature at `(x, w)` equals that of
/// `(g, b)` at `(x, -w)`.
#[derive(Debug, Clone)]
pub struct TwoSidedOrbit {
    pub forward: OrbitTrace,
    /// Trace of the flipped system; sample `s` corresponds to time `-s`.
    pub backward: OrbitTrace,
    pub profile: CurvatureProfile,
}

pub fn two_sided_orbit(m: &SurfaceModel, v0: UnitTangent, horizon: f64, opts: OrbitOptions) -> Result<TwoSidedOrbit> {
    let forward = integrate_orbit(m, v0, horizon, opts)?;
    let flipped_model = m.with_flipped_field()?;
    let backward = integrate_orbit(&flipped_model, v0.reversed(), horizon, opts)?;
    let profile = match m.kind() {
        ModelKind::ConformalTorus { .. } => {
            let n = backward.len();
            let mut knots = Vec::with_capacity(n + forward.len() - 1);
            let mut values = Vec::with_capacity(knots.capacity());
            for i in (1..n).rev() {
                knots.push(-backward.t_samples[i]);
                values.push(backward.kappa_samples[i]);
            }
            knots.extend_from_slice(&forward.t_samples);
            values.extend_from_slice(&forward.kappa_samples);
            CurvatureProfile::from_samples(knots, values, "orbit".into())?
        }
        _ => curvature_profile(m, &forward)?,
    };
    Ok(TwoSidedOrbit {
        forward,
        backward,
        profile,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::FourierMode2d;
    use std::f64::consts::PI;

    fn flat(b: f64) -> SurfaceModel {
        let modes = if b == 0.0 {
            vec![]
        } else {
            vec![FourierMode2d {
                kx: 0,
                ky: 0,
                cos: b,
                sin: 0.0,
            }]
        };
        SurfaceModel::conformal_torus([1.0, 1.0], vec![], modes).unwrap()
    }

    fn bumpy() -> SurfaceModel {
        SurfaceModel::conformal_torus(
            [1.0, 1.0],
            vec![
                FourierMode2d {
                    kx: 1,
                    ky: 0,
                    cos: 0.08,
                    sin: 0.0,
                },
                FourierMode2d {
                    kx: 1,
                    ky: 1,
                    cos: 0.0,
                    sin: 0.05,
                },
            ],
            vec![
                FourierMode2d {
                    kx: 0,
                    ky: 0,
                    cos: 0.4,
                    sin: 0.0,
                },
                FourierMode2d {
                    kx: 0,
                    ky: 1,
                    cos: 0.2,
                    sin: 0.1,
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn straight_line_on_flat_torus() {
        let tr = integrate_orbit(
            &flat(0.0),
            UnitTangent::new(0.0, 0.25, 0.0),
            3.5,
            OrbitOptions::default(),
        )
        .unwrap();
        for (t, s) in tr.t_samples.iter().zip(&tr.states) {
            assert_eq!(s.theta, 0.0);
            assert!((s.x - t.rem_euclid(1.0)).abs() < 1e-12 || (s.x - t.rem_euclid(1.0)).abs() > 1.0 - 1e-12);
            assert!((s.y - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn unit_rotation_rate_for_unit_field() {
        let tr = integrate_orbit(
            &flat(1.0),
            UnitTangent::new(0.5, 0.5, 0.3),
            20.0,
            OrbitOptions::default(),
        )
        .unwrap();
        for (t, s) in tr.t_samples.iter().zip(&tr.states) {
            let d = (s.theta - (0.3 + t)).rem_euclid(TAU);
            assert!(d.min(TAU - d) < 1e-9, "t={t}");
        }
        assert!(tr.kappa_samples.iter().all(|&k| k == 1.0));
    }

    #[test]
    fn constant_model_gives_degenerate_trace() {
        let m = SurfaceModel::constant_curvature(-1.0, 0.5, -2, None).unwrap();
        let tr = integrate_orbit(&m, UnitTangent::new(0.0, 0.0, 1.0), 1.0, OrbitOptions::default()).unwrap();
        assert!(tr.kappa_samples.iter().all(|&k| k == -0.75));
        let p = curvature_profile(&m, &tr).unwrap();
        assert_eq!(p.constant_value(), Some(-0.75));
    }

    #[test]
    fn abstract_models_cannot_be_integrated() {
        let m = SurfaceModel::abstract_profile(CurvatureProfile::constant(-1.0), None, None).unwrap();
        assert!(integrate_orbit(&m, UnitTangent::new(0.0, 0.0, 0.0), 1.0, OrbitOptions::default()).is_err());
        assert_eq!(abstract_profile(&m).unwrap().constant_value(), Some(-1.0));
    }

    #[test]
    fn unit_speed_and_kappa_consistency() {
        let m = bumpy();
        let tr = integrate_orbit(&m, UnitTangent::new(0.1, 0.2, 0.9), 100.0, OrbitOptions::default()).unwrap();
        for (s, k) in tr.states.iter().zip(&tr.kappa_samples) {
            let v = m.velocity(s);
            assert!((m.g_inner(s.x, s.y, v, v) - 1.0).abs() < 1e-10);
            assert!((magnetic_curvature(&m, s).unwrap() - k).abs() < 1e-12);
        }
    }

    #[test]
    fn reversibility_through_flipped_field() {
        let m = bumpy();
        let v0 = UnitTangent::new(0.3, 0.7, 2.0);
        let h = 10.0;
        let fwd = integrate_orbit(&m, v0, h, OrbitOptions::default()).unwrap();
        let end = *fwd.states.last().unwrap();
        let back = integrate_orbit(
            &m.with_flipped_field().unwrap(),
            end.reversed(),
            h,
            OrbitOptions::default(),
        )
        .unwrap();
        let ret = back.states.last().unwrap().reversed();
        let d = |a: f64, b: f64, p: f64| {
            let d = (a - b).rem_euclid(p);
            d.min(p - d)
        };
        assert!(d(ret.x, v0.x, 1.0) < 1e-7);
        assert!(d(ret.y, v0.y, 1.0) < 1e-7);
        assert!(d(ret.theta, v0.theta, TAU) < 1e-7);
    }

    #[test]
    fn two_sided_profile_matches_both_halves() {
        let m = bumpy();
        let v0 = UnitTangent::new(0.3, 0.7, 2.0);
        let orbit = two_sided_orbit(&m, v0, 5.0, OrbitOptions::default()).unwrap();
        assert_eq!(orbit.profile.domain(), (-5.0, 5.0));
        for (t, k) in orbit.forward.t_samples.iter().zip(&orbit.forward.kappa_samples) {
            assert_eq!(orbit.profile.eval(*t), *k);
        }
        // kappa at time -s is the (g, b) curvature at (x(-s), -(-v)) on the flipped trace
        for (s, st) in orbit.backward.t_samples.iter().zip(&orbit.backward.states).skip(1) {
            let k = magnetic_curvature(&m, &st.reversed()).unwrap();
            assert!((orbit.profile.eval(-s) - k).abs() < 1e-12);
        }
    }

    #[test]
    fn flat_circle_is_periodic() {
        let v0 = UnitTangent::new(0.2, 0.4, 1.0);
        let tr = integrate_orbit(
            &flat(1.0),
            v0,
            2.0 * PI,
            OrbitOptions {
                tol: 1e-10,
                spacing: 2.0 * PI / 100.0,
            },
        )
        .unwrap();
        let end = tr.states.last().unwrap();
        assert!(
            (end.x - v0.x).abs() < 1e-8 && (end.y - v0.y).abs() < 1e-8,
            "{end:?} {:?}",
            tr.t_samples.last()
        );
    }

    #[test]
    fn csv_header_and_rows() {
        let tr = integrate_orbit(
            &flat(0.0),
            UnitTangent::new(0.0, 0.0, 0.0),
            0.05,
            OrbitOptions::default(),
        )
        .unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,x,y,theta,kappa"));
        assert_eq!(lines.count(), tr.len());
    }
}
