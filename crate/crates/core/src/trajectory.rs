//! Elliptical reference path and the revolving target cursor.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use serde::{Deserialize, Serialize};

use crate::robot::{ArmParams, TaskPoint};

/// Clearance kept between the ellipse and the workspace boundary (m).
pub const REACH_MARGIN: f64 = 0.02;

/// Ellipse of fixed semi-axes around `center`; the orientation is supplied
/// per call so that the optimizer can rotate it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EllipseSpec {
    pub center: TaskPoint,
    pub semi_major: f64,
    pub semi_minor: f64,
    /// Time for the cursor to complete one revolution (s).
    pub t_rev: f64,
    pub phase0: f64,
}

impl Default for EllipseSpec {
    fn default() -> Self {
        Self {
            center: TaskPoint::new(0.45, -0.10),
            semi_major: 0.20,
            semi_minor: 0.05,
            t_rev: 1.25,
            phase0: 0.0,
        }
    }
}

impl EllipseSpec {
    /// Invariant check against the arm that must reach every point for any
    /// orientation.
    pub fn violations(&self, arm: &ArmParams, prefix: &str) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.semi_minor > 0.0 && self.semi_minor.is_finite()) {
            out.push(format!("{prefix}.semi_minor must be positive (got {})", self.semi_minor));
        }
        if !(self.semi_major >= self.semi_minor && self.semi_major.is_finite()) {
            out.push(format!("{prefix}.semi_major must be >= semi_minor (got {})", self.semi_major));
        }
        if !(self.t_rev > 0.0 && self.t_rev.is_finite()) {
            out.push(format!("{prefix}.t_rev must be positive (got {})", self.t_rev));
        }
        if !self.phase0.is_finite() || !self.center.is_finite() {
            out.push(format!("{prefix}.center and {prefix}.phase0 must be finite"));
        }
        if out.is_empty() {
            // Every orientation sweeps the disc annulus between semi_minor and
            // semi_major around the center, so bound with the major axis.
            let (inner, outer) = arm.reach();
            let c = self.center.norm();
            if c - self.semi_major < inner + REACH_MARGIN || c + self.semi_major > outer - REACH_MARGIN {
                out.push(format!(
                    "{prefix} does not fit the reachable annulus [{inner:.3}, {outer:.3}] m with {REACH_MARGIN} m margin"
                ));
            }
        }
        out
    }

    /// Cursor phase angle at time `t`.
    pub fn phase(&self, t: f64) -> f64 {
        TAU * t / self.t_rev + self.phase0
    }

    fn point_at_phase(&self, theta: f64, phi: f64) -> TaskPoint {
        let (sp, cp) = phi.sin_cos();
        let (st, ct) = theta.sin_cos();
        let (u, v) = (self.semi_major * cp, self.semi_minor * sp);
        TaskPoint::new(self.center.x + ct * u - st * v, self.center.y + st * u + ct * v)
    }
}

/// Desired cursor position at time `t` for orientation `theta` (rad).
pub fn ellipse_point(spec: &EllipseSpec, theta: f64, t: f64) -> TaskPoint {
    spec.point_at_phase(theta, spec.phase(t))
}

/// `n` evenly spaced samples of one revolution, starting at `phase0`.
pub fn ellipse_path(spec: &EllipseSpec, theta: f64, n: usize) -> Vec<TaskPoint> {
    assert!(n >= 2, "ellipse_path needs at least two samples");
    (0..n)
        .map(|i| spec.point_at_phase(theta, spec.phase0 + TAU * i as f64 / n as f64))
        .collect()
}

/// Wraps an orientation to (−π/2, π/2]; the ellipse is symmetric under θ → θ + π.
pub fn wrap_orientation(theta: f64) -> f64 {
    let w = theta - PI * ((theta + FRAC_PI_2) / PI).floor();
    // w is in [−π/2, π/2); map the open end.
    if w <= -FRAC_PI_2 {
        w + PI
    } else {
        w
    }
}

/// [`wrap_orientation`] in degrees.
pub fn wrap_orientation_deg(deg: f64) -> f64 {
    let w = deg - 180.0 * ((deg + 90.0) / 180.0).floor();
    if w <= -90.0 {
        w + 180.0
    } else {
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::robot::inverse_kinematics;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn point_examples() {
        let spec = EllipseSpec::default();
        let p = ellipse_point(&spec, 0.0, 0.0);
        assert_abs_diff_eq!(p.x, spec.center.x + spec.semi_major, epsilon = 1e-15);
        assert_abs_diff_eq!(p.y, spec.center.y, epsilon = 1e-15);
        let p = ellipse_point(&spec, FRAC_PI_2, 0.0);
        assert_abs_diff_eq!(p.x, spec.center.x, epsilon = 1e-15);
        assert_abs_diff_eq!(p.y, spec.center.y + spec.semi_major, epsilon = 1e-15);
    }

    #[test]
    fn four_point_path_hits_axis_endpoints() {
        let spec = EllipseSpec { semi_minor: 0.10, ..EllipseSpec::default() };
        let path = ellipse_path(&spec, 0.0, 4);
        let c = spec.center;
        let expected = [
            (c.x + 0.2, c.y),
            (c.x, c.y + 0.1),
            (c.x - 0.2, c.y),
            (c.x, c.y - 0.1),
        ];
        for (p, e) in path.iter().zip(expected) {
            assert_abs_diff_eq!(p.x, e.0, epsilon = 1e-12);
            assert_abs_diff_eq!(p.y, e.1, epsilon = 1e-12);
        }
    }

    #[test]
    fn default_path_is_reachable_at_every_orientation() {
        let arm = ArmParams::default();
        let spec = EllipseSpec::default();
        assert!(spec.violations(&arm, "ellipse").is_empty());
        for deg in (-90..=90).step_by(5) {
            for p in ellipse_path(&spec, (deg as f64).to_radians(), 360) {
                inverse_kinematics(&arm, p).unwrap();
            }
        }
    }

    #[test]
    fn validation_names_fields() {
        let arm = ArmParams::default();
        let bad = EllipseSpec { t_rev: -1.0, ..EllipseSpec::default() };
        let v = bad.violations(&arm, "ellipse");
        assert!(v.iter().any(|m| m.contains("ellipse.t_rev")));
        let too_big = EllipseSpec { semi_major: 0.5, ..EllipseSpec::default() };
        assert!(!too_big.violations(&arm, "ellipse").is_empty());
    }

    #[test]
    fn wrapping() {
        assert_abs_diff_eq!(wrap_orientation(FRAC_PI_2), FRAC_PI_2);
        assert_abs_diff_eq!(wrap_orientation(-FRAC_PI_2), FRAC_PI_2);
        assert_abs_diff_eq!(wrap_orientation(PI + 0.3), 0.3, epsilon = 1e-12);
        assert_eq!(wrap_orientation_deg(-90.0), 90.0);
        assert_eq!(wrap_orientation_deg(135.0), -45.0);
        assert_eq!(wrap_orientation_deg(39.5), 39.5);
    }

    proptest! {
        #[test]
        fn periodic_in_time(theta in -4.0..4.0f64, t in 0.0..100.0f64) {
            let spec = EllipseSpec::default();
            let a = ellipse_point(&spec, theta, t);
            let b = ellipse_point(&spec, theta, t + spec.t_rev);
            prop_assert!((a.x - b.x).abs() < 1e-12 && (a.y - b.y).abs() < 1e-12);
        }

        #[test]
        fn half_turn_symmetry(theta in -4.0..4.0f64) {
            let spec = EllipseSpec::default();
            let n = 64;
            let a = ellipse_path(&spec, theta, n);
            let b = ellipse_path(&spec, theta + PI, n);
            for i in 0..n {
                let q = b[(i + n / 2) % n];
                prop_assert!((a[i].x - q.x).abs() < 1e-12 && (a[i].y - q.y).abs() < 1e-12);
            }
        }

        #[test]
        fn radius_between_semi_axes(theta in -4.0..4.0f64, t in 0.0..10.0f64) {
            let spec = EllipseSpec::default();
            let p = ellipse_point(&spec, theta, t);
            let r = (p.x - spec.center.x).hypot(p.y - spec.center.y);
            prop_assert!(r >= spec.semi_minor - 1e-12 && r <= spec.semi_major + 1e-12);
        }

        #[test]
        fn wrap_range(theta in -20.0..20.0f64) {
            let w = wrap_orientation(theta);
            prop_assert!(w > -FRAC_PI_2 && w <= FRAC_PI_2);
            let k = ((theta - w) / PI).round();
            prop_assert!((theta - w - k * PI).abs() < 1e-9);
        }
    }
}
