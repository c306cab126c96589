//! Analytic level-set functions for circles and p-petaled flowers, plus the
//! exact curvature and closest-point oracles used to build regression targets.

use std::f64::consts::TAU;

use thiserror::Error;

use crate::grid::Point2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("circle radius must be positive, got {0}")]
    InvalidRadius(f64),
    #[error("flower parameters must satisfy b > a >= 0 (a = {a}, b = {b}, p = {p})")]
    InvalidFlower { a: f64, b: f64, p: u32 },
    #[error("the flower level set is undefined at the origin")]
    UndefinedAtOrigin,
    #[error("point ({x}, {y}) is farther than 10 b from the flower center")]
    PointTooFar { x: f64, y: f64 },
    #[error("closest-point search did not converge for ({x}, {y}): {reason}")]
    NoConvergence { x: f64, y: f64, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CircleForm {
    /// `sqrt((x - x0)^2 + (y - y0)^2) - r`
    SignedDistance,
    /// `(x - x0)^2 + (y - y0)^2 - r^2`
    Quadratic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircleSpec {
    pub center: Point2,
    pub radius: f64,
    pub form: CircleForm,
}

impl CircleSpec {
    pub fn new(center: Point2, radius: f64, form: CircleForm) -> Result<Self, FieldError> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(FieldError::InvalidRadius(radius));
        }
        Ok(Self {
            center,
            radius,
            form,
        })
    }

    pub fn with_form(self, form: CircleForm) -> Self {
        Self { form, ..self }
    }
}

pub fn eval_circle(spec: &CircleSpec, point: Point2) -> f64 {
    let dx = point.x - spec.center.x;
    let dy = point.y - spec.center.y;
    match spec.form {
        CircleForm::SignedDistance => (dx * dx + dy * dy).sqrt() - spec.radius,
        CircleForm::Quadratic => dx * dx + dy * dy - spec.radius * spec.radius,
    }
}

/// Flower interface `r(theta) = a cos(p theta) + b` centered at the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowerSpec {
    pub a: f64,
    pub b: f64,
    pub p: u32,
}

impl FlowerSpec {
    pub fn new(a: f64, b: f64, p: u32) -> Result<Self, FieldError> {
        if !(a >= 0.0 && b > a && b.is_finite()) {
            return Err(FieldError::InvalidFlower { a, b, p });
        }
        Ok(Self { a, b, p })
    }

    /// Three petals with gentle junctions.
    pub fn smooth() -> Self {
        Self {
            a: 0.05,
            b: 0.15,
            p: 3,
        }
    }

    /// Three petals with sharp junctions.
    pub fn acute() -> Self {
        Self {
            a: 0.075,
            b: 0.15,
            p: 3,
        }
    }

    /// Interface radius and its first two derivatives at `theta`.
    pub fn radius_derivatives(&self, theta: f64) -> (f64, f64, f64) {
        let p = f64::from(self.p);
        let (s, c) = (p * theta).sin_cos();
        (
            self.a * c + self.b,
            -self.a * p * s,
            -self.a * p * p * c,
        )
    }

    pub fn interface_point(&self, theta: f64) -> Point2 {
        let r = self.radius_derivatives(theta).0;
        let (s, c) = theta.sin_cos();
        Point2::new(r * c, r * s)
    }

    /// Level-set value used to fill grids. At the origin the polar angle is
    /// undefined; there the deepest interior value `-(a + b)` is used.
    pub fn grid_value(&self, point: Point2) -> f64 {
        eval_flower(self, point).unwrap_or(-(self.a + self.b))
    }
}

/// Polar angle mapped to `[0, 2 pi)`.
pub fn polar_angle(point: Point2) -> f64 {
    let theta = point.y.atan2(point.x);
    if theta < 0.0 {
        // atan2 can return -0.0 or a tiny negative angle that rounds to 2 pi.
        let shifted = theta + TAU;
        if shifted >= TAU {
            0.0
        } else {
            shifted
        }
    } else {
        theta
    }
}

/// `phi(x, y) = r - a cos(p theta) - b`, negative inside the petals.
pub fn eval_flower(spec: &FlowerSpec, point: Point2) -> Result<f64, FieldError> {
    let r = point.x.hypot(point.y);
    if r == 0.0 {
        return Err(FieldError::UndefinedAtOrigin);
    }
    let theta = polar_angle(point);
    Ok(r - spec.a * (f64::from(spec.p) * theta).cos() - spec.b)
}

/// Curvature of the flower interface at polar angle `theta`:
/// `(r^2 + 2 r'^2 - r r'') / (r^2 + r'^2)^{3/2}`.
pub fn flower_curvature(spec: &FlowerSpec, theta: f64) -> f64 {
    let (r, dr, ddr) = spec.radius_derivatives(theta);
    let speed_sq = r * r + dr * dr;
    (r * r + 2.0 * dr * dr - r * ddr) / (speed_sq * speed_sq.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvatureOracleResult {
    pub theta_star: f64,
    pub closest_point: Point2,
    pub kappa: f64,
    /// `h * kappa` for the mesh size supplied by the caller.
    pub hkappa: f64,
}

const SCAN_SAMPLES: usize = 4096;
const NEWTON_TOL: f64 = 1e-13;
const NEWTON_MAX_ITERS: usize = 50;

/// Distance-derivative pieces for the curve `C(theta) = r(theta) (cos, sin)`.
struct CurveGeometry {
    dist_sq: f64,
    /// `(P - C) . C'`, zero at a critical point of the squared distance.
    g: f64,
    /// Derivative of `g` with respect to theta.
    dg: f64,
}

fn curve_geometry(spec: &FlowerSpec, point: Point2, theta: f64) -> CurveGeometry {
    let (r, dr, ddr) = spec.radius_derivatives(theta);
    let (s, c) = theta.sin_cos();
    let cx = r * c;
    let cy = r * s;
    let d1x = dr * c - r * s;
    let d1y = dr * s + r * c;
    let d2x = ddr * c - 2.0 * dr * s - r * c;
    let d2y = ddr * s + 2.0 * dr * c - r * s;
    let ex = point.x - cx;
    let ey = point.y - cy;
    CurveGeometry {
        dist_sq: ex * ex + ey * ey,
        g: ex * d1x + ey * d1y,
        dg: -(d1x * d1x + d1y * d1y) + ex * d2x + ey * d2y,
    }
}

fn wrap_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(TAU);
    if t >= TAU {
        0.0
    } else {
        t
    }
}

/// Normal projection of `point` onto the flower interface.
///
/// A dense scan over 4096 angles brackets the global minimizer of the squared
/// distance; Newton iterations on its derivative refine it, falling back to
/// bisection inside the bracket when Newton leaves it.
pub fn flower_closest_point(
    spec: &FlowerSpec,
    point: Point2,
    h: f64,
) -> Result<CurvatureOracleResult, FieldError> {
    if point.x.hypot(point.y) > 10.0 * spec.b {
        return Err(FieldError::PointTooFar {
            x: point.x,
            y: point.y,
        });
    }
    let step = TAU / SCAN_SAMPLES as f64;
    let (best_index, _) = (0..SCAN_SAMPLES)
        .map(|k| (k, curve_geometry(spec, point, k as f64 * step).dist_sq))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
    let center = best_index as f64 * step;
    let (lo, hi) = (center - step, center + step);

    let theta = match newton(spec, point, center, lo, hi) {
        Some(theta) => theta,
        None => bisect(spec, point, lo, hi).ok_or_else(|| FieldError::NoConvergence {
            x: point.x,
            y: point.y,
            reason: format!("no sign change of the distance derivative in [{lo}, {hi}]"),
        })?,
    };
    let theta_star = wrap_angle(theta);
    let kappa = flower_curvature(spec, theta_star);
    Ok(CurvatureOracleResult {
        theta_star,
        closest_point: spec.interface_point(theta_star),
        kappa,
        hkappa: h * kappa,
    })
}

/// Exact signed distance to the flower interface, negative inside.
///
/// Unlike [`FlowerSpec::grid_value`], whose gradient norm reaches about 2 on
/// the acute petal flanks, this is 1-Lipschitz, which is what adaptive
/// refinement criteria assume of the field they sample.
pub fn flower_signed_distance(spec: &FlowerSpec, point: Point2) -> Result<f64, FieldError> {
    let value = spec.grid_value(point);
    let distance = flower_closest_point(spec, point, 1.0)?
        .closest_point
        .distance(point);
    Ok(if value < 0.0 { -distance } else { distance })
}

fn newton(spec: &FlowerSpec, point: Point2, start: f64, lo: f64, hi: f64) -> Option<f64> {
    let mut theta = start;
    for _ in 0..NEWTON_MAX_ITERS {
        let geo = curve_geometry(spec, point, theta);
        if geo.g == 0.0 {
            return Some(theta);
        }
        // A minimum needs a positive second derivative of the squared
        // distance, i.e. dg < 0.
        if !(geo.dg < 0.0) {
            return None;
        }
        let delta = -geo.g / geo.dg;
        theta += delta;
        if !(lo..=hi).contains(&theta) {
            return None;
        }
        if delta.abs() < NEWTON_TOL {
            return Some(theta);
        }
    }
    None
}

fn bisect(spec: &FlowerSpec, point: Point2, mut lo: f64, mut hi: f64) -> Option<f64> {
    // g > 0 where the squared distance decreases, g < 0 past the minimum.
    let g_lo = curve_geometry(spec, point, lo).g;
    let g_hi = curve_geometry(spec, point, hi).g;
    if g_lo == 0.0 {
        return Some(lo);
    }
    if g_hi == 0.0 {
        return Some(hi);
    }
    if g_lo.signum() == g_hi.signum() {
        return None;
    }
    let lo_positive = g_lo > 0.0;
    while hi - lo > NEWTON_TOL {
        let mid = 0.5 * (lo + hi);
        let g = curve_geometry(spec, point, mid).g;
        if g == 0.0 {
            return Some(mid);
        }
        if (g > 0.0) == lo_positive {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn circle_forms() {
        let sdf = CircleSpec::new(Point2::new(0.5, 0.5), 0.25, CircleForm::SignedDistance).unwrap();
        let quad = sdf.with_form(CircleForm::Quadratic);
        assert_eq!(eval_circle(&sdf, Point2::new(0.5, 0.75)), 0.0);
        assert_eq!(eval_circle(&quad, Point2::new(0.5, 0.75)), 0.0);
        assert_eq!(eval_circle(&sdf, Point2::new(0.5, 0.5)), -0.25);
        assert!(CircleSpec::new(Point2::default(), 0.0, CircleForm::Quadratic).is_err());
    }

    #[test]
    fn sdf_circle_has_unit_gradient() {
        let sdf = CircleSpec::new(Point2::new(0.5, 0.5), 0.25, CircleForm::SignedDistance).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = 1e-6;
        for _ in 0..1000 {
            let p = Point2::new(rng.random::<f64>(), rng.random::<f64>());
            if p.distance(sdf.center) < 0.01 {
                continue;
            }
            let gx = (eval_circle(&sdf, Point2::new(p.x + d, p.y))
                - eval_circle(&sdf, Point2::new(p.x - d, p.y)))
                / (2.0 * d);
            let gy = (eval_circle(&sdf, Point2::new(p.x, p.y + d))
                - eval_circle(&sdf, Point2::new(p.x, p.y - d)))
                / (2.0 * d);
            let norm = gx.hypot(gy);
            assert!((norm - 1.0).abs() <= 1e-4, "gradient norm {norm}");
        }
    }

    #[test]
    fn flower_values() {
        let circle = FlowerSpec::new(0.0, 0.15, 3).unwrap();
        assert_eq!(eval_flower(&circle, Point2::new(0.15, 0.0)).unwrap(), 0.0);
        let f = FlowerSpec::smooth();
        assert!(eval_flower(&f, Point2::new(0.20, 0.0)).unwrap().abs() < 1e-16);
        assert!((eval_flower(&f, Point2::new(0.10, 0.0)).unwrap() + 0.10).abs() < 1e-16);
        assert_eq!(
            eval_flower(&f, Point2::new(0.0, 0.0)),
            Err(FieldError::UndefinedAtOrigin)
        );
        assert!(FlowerSpec::new(0.2, 0.15, 3).is_err());
        assert!(FlowerSpec::new(-0.01, 0.15, 3).is_err());
    }

    #[test]
    fn polar_angle_branch() {
        assert_eq!(polar_angle(Point2::new(1.0, 0.0)), 0.0);
        assert_eq!(polar_angle(Point2::new(1.0, -0.0)), 0.0);
        let a = polar_angle(Point2::new(0.0, -1.0));
        assert!((a - 1.5 * PI).abs() < 1e-15);
        assert!(polar_angle(Point2::new(1.0, -1e-300)) < TAU);
    }

    #[test]
    fn flower_with_zero_amplitude_matches_circle_zero_set() {
        let flower = FlowerSpec::new(0.0, 0.15, 3).unwrap();
        let circle = CircleSpec::new(Point2::default(), 0.15, CircleForm::SignedDistance).unwrap();
        for k in 0..1000 {
            let theta = k as f64 * TAU / 1000.0;
            let p = flower.interface_point(theta);
            assert!(eval_flower(&flower, p).unwrap().abs() < 1e-15);
            assert!(eval_circle(&circle, p).abs() < 1e-15);
        }
    }

    #[test]
    fn curvature_values() {
        let circle = FlowerSpec::new(0.0, 0.15, 3).unwrap();
        for k in 0..8 {
            let kappa = flower_curvature(&circle, k as f64 * 0.7);
            assert!((kappa - 1.0 / 0.15).abs() < 1e-12);
        }
        let f = FlowerSpec::smooth();
        assert!((flower_curvature(&f, 0.0) - 16.25).abs() < 1e-10);
        let period = TAU / 3.0;
        for k in 0..200 {
            let theta = k as f64 * 0.031;
            let diff = flower_curvature(&f, theta) - flower_curvature(&f, theta + period);
            assert!(diff.abs() < 1e-12, "theta {theta}: {diff}");
        }
    }

    #[test]
    fn closest_point_on_axis() {
        let circle = FlowerSpec::new(0.0, 0.15, 3).unwrap();
        let res = flower_closest_point(&circle, Point2::new(0.3, 0.0), 1.0).unwrap();
        assert!(res.theta_star.abs() < 1e-12 || (res.theta_star - TAU).abs() < 1e-12);
        assert!(res.closest_point.distance(Point2::new(0.15, 0.0)) < 1e-12);

        let f = FlowerSpec::smooth();
        let res = flower_closest_point(&f, Point2::new(0.25, 0.0), 0.5).unwrap();
        assert!(res.theta_star.abs() < 1e-12 || (res.theta_star - TAU).abs() < 1e-12);
        assert!((res.hkappa - 0.5 * 16.25).abs() < 1e-9);
        assert!(flower_closest_point(&f, Point2::new(2.0, 0.0), 1.0).is_err());
    }

    #[test]
    fn closest_point_is_a_projection() {
        for spec in [FlowerSpec::smooth(), FlowerSpec::acute()] {
            for k in 0..360 {
                let theta = k as f64 * TAU / 360.0 + 1e-3;
                let p = spec.interface_point(theta);
                let res = flower_closest_point(&spec, p, 1.0).unwrap();
                assert!(res.closest_point.distance(p) < 1e-10);
            }
        }
    }

    #[test]
    fn closest_point_dominates_dense_samples() {
        // Brute-force oracle: 10^5 samples along the curve.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for spec in [FlowerSpec::smooth(), FlowerSpec::acute()] {
            let curve: Vec<Point2> = (0..100_000)
                .map(|k| spec.interface_point(k as f64 * TAU / 100_000.0))
                .collect();
            for _ in 0..40 {
                let theta = rng.random::<f64>() * TAU;
                let base = spec.interface_point(theta);
                let offset = (rng.random::<f64>() - 0.5) * 0.03;
                let normal_dir = Point2::new(theta.cos(), theta.sin());
                let p = Point2::new(base.x + offset * normal_dir.x, base.y + offset * normal_dir.y);
                let res = flower_closest_point(&spec, p, 1.0).unwrap();
                let d_star = p.distance(res.closest_point);
                let brute = curve
                    .iter()
                    .map(|q| p.distance(*q))
                    .fold(f64::INFINITY, f64::min);
                assert!(d_star <= brute + 1e-15, "{d_star} > {brute}");
                let r = spec.radius_derivatives(res.theta_star).0;
                let on_curve = res.closest_point.x.hypot(res.closest_point.y);
                assert!((on_curve - r).abs() <= 1e-12 * r);
            }
        }
    }

    #[test]
    fn signed_distance_matches_sign_and_is_lipschitz() {
        let spec = FlowerSpec::acute();
        let on = spec.interface_point(0.7);
        assert!(flower_signed_distance(&spec, on).unwrap().abs() < 1e-12);
        assert!(flower_signed_distance(&spec, Point2 { x: 0.0, y: 0.0 }).unwrap() < 0.0);
        let far = Point2 { x: 0.3, y: 0.0 };
        assert!((flower_signed_distance(&spec, far).unwrap() - 0.075).abs() < 1e-12);
        let step = 1e-3;
        for k in 0..200 {
            let x = -0.25 + k as f64 * 2.5e-3;
            let p = Point2 { x, y: 0.11 };
            let q = Point2 { x: x + step, y: 0.11 };
            let d = flower_signed_distance(&spec, q).unwrap() - flower_signed_distance(&spec, p).unwrap();
            assert!(d.abs() <= step * (1.0 + 1e-9), "x={x} diff={d}");
        }
    }
}
