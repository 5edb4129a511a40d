//! Planar two-link manipulator in a vertical plane.
//!
//! The exercise robot is modelled by its two active joints only: the shoulder
//! joint `q[0]` measured from the +x axis and the elbow joint `q[1]` measured
//! relative to the upper link. Gravity acts along −y. The equations of motion
//! are
//!
//! ```text
//! D(q) q̈ + C(q, q̇) q̇ + g(q) + B q̇ = τ + Jᵀ(q) F_ext
//! ```
//!
//! with `C` built from Christoffel symbols, so `Ḋ − 2C` is skew-symmetric.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RobotError {
    #[error("point ({x:.4}, {y:.4}) m is outside the reachable annulus [{inner:.4}, {outer:.4}] m")]
    Unreachable { x: f64, y: f64, inner: f64, outer: f64 },
    #[error("inertia matrix is singular at q = [{0:.6}, {1:.6}]")]
    SingularInertia(f64, f64),
}

/// Inertial and geometric parameters of the arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArmParams {
    pub l1: f64,
    pub l2: f64,
    pub m1: f64,
    pub m2: f64,
    pub lc1: f64,
    pub lc2: f64,
    pub i1: f64,
    pub i2: f64,
    pub b1: f64,
    pub b2: f64,
    pub g: f64,
}

impl Default for ArmParams {
    fn default() -> Self {
        let (l1, l2, m1, m2) = (0.55, 0.35, 5.0, 2.5);
        Self {
            l1,
            l2,
            m1,
            m2,
            lc1: l1 / 2.0,
            lc2: l2 / 2.0,
            i1: m1 * l1 * l1 / 12.0,
            i2: m2 * l2 * l2 / 12.0,
            b1: 0.1,
            b2: 0.1,
            g: 9.81,
        }
    }
}

impl ArmParams {
    /// Returns one message per violated invariant, prefixed with `prefix`.
    pub fn violations(&self, prefix: &str) -> Vec<String> {
        let mut out = Vec::new();
        let positive = [
            ("l1", self.l1),
            ("l2", self.l2),
            ("m1", self.m1),
            ("m2", self.m2),
            ("lc1", self.lc1),
            ("lc2", self.lc2),
            ("i1", self.i1),
            ("i2", self.i2),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                out.push(format!("{prefix}.{name} must be positive and finite (got {v})"));
            }
        }
        if self.lc1 > self.l1 {
            out.push(format!("{prefix}.lc1 must not exceed l1"));
        }
        if self.lc2 > self.l2 {
            out.push(format!("{prefix}.lc2 must not exceed l2"));
        }
        for (name, v) in [("b1", self.b1), ("b2", self.b2), ("g", self.g)] {
            if !(v >= 0.0 && v.is_finite()) {
                out.push(format!("{prefix}.{name} must be non-negative and finite (got {v})"));
            }
        }
        out
    }

    /// Inner and outer radius of the reachable workspace.
    pub fn reach(&self) -> (f64, f64) {
        ((self.l1 - self.l2).abs(), self.l1 + self.l2)
    }
}

/// Joint angles (rad) and rates (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct JointState {
    pub q: [f64; 2],
    pub qdot: [f64; 2],
}

impl JointState {
    pub fn at_rest(q: [f64; 2]) -> Self {
        Self { q, qdot: [0.0; 2] }
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(self.qdot.iter()).all(|v| v.is_finite())
    }
}

/// A point in the vertical task plane (m), y pointing up, origin at the shoulder.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TaskPoint {
    pub x: f64,
    pub y: f64,
}

impl TaskPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn to_vector(self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }

    pub fn from_vector(v: Vector2<f64>) -> Self {
        Self { x: v.x, y: v.y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Diagonal joint-space PD gains. Both default to zero: in the planar
/// reduction the controller only compensates gravity.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdGains {
    pub p_gain: [f64; 2],
    pub d_gain: [f64; 2],
}

impl PdGains {
    pub fn violations(&self, prefix: &str) -> Vec<String> {
        self.p_gain
            .iter()
            .chain(self.d_gain.iter())
            .filter(|v| !(**v >= 0.0 && v.is_finite()))
            .map(|v| format!("{prefix} gains must be non-negative (got {v})"))
            .collect()
    }
}

pub fn forward_kinematics(params: &ArmParams, q: [f64; 2]) -> TaskPoint {
    let q12 = q[0] + q[1];
    TaskPoint {
        x: params.l1 * q[0].cos() + params.l2 * q12.cos(),
        y: params.l1 * q[0].sin() + params.l2 * q12.sin(),
    }
}

/// Closed-form inverse kinematics on the elbow-down branch, `q[1] ∈ [0, π]`.
pub fn inverse_kinematics(params: &ArmParams, p: TaskPoint) -> Result<[f64; 2], RobotError> {
    let (inner, outer) = params.reach();
    let r = p.norm();
    // Allow for rounding right at the workspace boundary.
    let slack = 1e-12 * outer;
    if !(r >= inner - slack && r <= outer + slack) {
        return Err(RobotError::Unreachable { x: p.x, y: p.y, inner, outer });
    }
    let (l1, l2) = (params.l1, params.l2);
    let c2 = ((r * r - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)).clamp(-1.0, 1.0);
    let q2 = c2.acos();
    let q1 = p.y.atan2(p.x) - (l2 * q2.sin()).atan2(l1 + l2 * c2);
    Ok([q1, q2])
}

/// Manipulator Jacobian ∂P/∂q.
pub fn jacobian(params: &ArmParams, q: [f64; 2]) -> Matrix2<f64> {
    let q12 = q[0] + q[1];
    let (s1, c1) = q[0].sin_cos();
    let (s12, c12) = q12.sin_cos();
    Matrix2::new(
        -params.l1 * s1 - params.l2 * s12,
        -params.l2 * s12,
        params.l1 * c1 + params.l2 * c12,
        params.l2 * c12,
    )
}

/// Joint-space inertia matrix D(q).
pub fn mass_matrix(params: &ArmParams, q: [f64; 2]) -> Matrix2<f64> {
    let ArmParams { l1, m1, m2, lc1, lc2, i1, i2, .. } = *params;
    let c2 = q[1].cos();
    let d11 = m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * c2) + i1 + i2;
    let d12 = m2 * (lc2 * lc2 + l1 * lc2 * c2) + i2;
    let d22 = m2 * lc2 * lc2 + i2;
    Matrix2::new(d11, d12, d12, d22)
}

/// Time derivative of D(q) along the motion.
pub fn mass_matrix_rate(params: &ArmParams, state: &JointState) -> Matrix2<f64> {
    let k = -params.m2 * params.l1 * params.lc2 * state.q[1].sin() * state.qdot[1];
    Matrix2::new(2.0 * k, k, k, 0.0)
}

/// Coriolis/centripetal matrix from the Christoffel symbols of D(q).
pub fn coriolis_matrix(params: &ArmParams, state: &JointState) -> Matrix2<f64> {
    let h = -params.m2 * params.l1 * params.lc2 * state.q[1].sin();
    let [w1, w2] = state.qdot;
    Matrix2::new(h * w2, h * (w1 + w2), -h * w1, 0.0)
}

pub fn gravity_vector(params: &ArmParams, q: [f64; 2]) -> [f64; 2] {
    let ArmParams { l1, m1, m2, lc1, lc2, g, .. } = *params;
    let c1 = q[0].cos();
    let c12 = (q[0] + q[1]).cos();
    [
        (m1 * lc1 + m2 * l1) * g * c1 + m2 * lc2 * g * c12,
        m2 * lc2 * g * c12,
    ]
}

/// Gravitational potential relative to the arm pointing straight up.
pub fn potential_energy(params: &ArmParams, q: [f64; 2]) -> f64 {
    let ArmParams { l1, m1, m2, lc1, lc2, g, .. } = *params;
    let height = |q1: f64, q12: f64| (m1 * lc1 + m2 * l1) * q1.sin() + m2 * lc2 * q12.sin();
    g * (height(q[0], q[0] + q[1]) - height(std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2))
}

pub fn total_energy(params: &ArmParams, state: &JointState) -> f64 {
    let w = Vector2::from(state.qdot);
    0.5 * w.dot(&(mass_matrix(params, state.q) * w)) + potential_energy(params, state.q)
}

/// τ = P·e + D·ė + g(q) with e = q_des − q and ė = −q̇.
pub fn pd_gravity_torque(
    params: &ArmParams,
    gains: &PdGains,
    state: &JointState,
    q_des: [f64; 2],
) -> [f64; 2] {
    let g = gravity_vector(params, state.q);
    std::array::from_fn(|i| {
        gains.p_gain[i] * (q_des[i] - state.q[i]) - gains.d_gain[i] * state.qdot[i] + g[i]
    })
}

/// Joint accelerations from the equations of motion.
pub fn joint_acceleration(
    params: &ArmParams,
    state: &JointState,
    tau: [f64; 2],
    f_ext: [f64; 2],
) -> Result<[f64; 2], RobotError> {
    let d = mass_matrix(params, state.q);
    let c = coriolis_matrix(params, state);
    let g = Vector2::from(gravity_vector(params, state.q));
    let w = Vector2::from(state.qdot);
    let friction = Vector2::new(params.b1 * w.x, params.b2 * w.y);
    let rhs = Vector2::from(tau) + jacobian(params, state.q).transpose() * Vector2::from(f_ext)
        - c * w
        - g
        - friction;
    let det = d.determinant();
    if !(det.abs() > 1e-12 * d.norm_squared()) {
        return Err(RobotError::SingularInertia(state.q[0], state.q[1]));
    }
    let inv = Matrix2::new(d.m22, -d.m12, -d.m21, d.m11) / det;
    let qdd = inv * rhs;
    Ok([qdd.x, qdd.y])
}

/// One classical RK4 step with τ and F_ext held constant over the step.
pub fn dynamics_step(
    params: &ArmParams,
    state: &JointState,
    tau: [f64; 2],
    f_ext: [f64; 2],
    dt: f64,
) -> Result<JointState, RobotError> {
    let deriv = |s: &JointState| -> Result<[f64; 4], RobotError> {
        let a = joint_acceleration(params, s, tau, f_ext)?;
        Ok([s.qdot[0], s.qdot[1], a[0], a[1]])
    };
    let offset = |s: &JointState, k: &[f64; 4], h: f64| JointState {
        q: [s.q[0] + h * k[0], s.q[1] + h * k[1]],
        qdot: [s.qdot[0] + h * k[2], s.qdot[1] + h * k[3]],
    };
    let k1 = deriv(state)?;
    let k2 = deriv(&offset(state, &k1, 0.5 * dt))?;
    let k3 = deriv(&offset(state, &k2, 0.5 * dt))?;
    let k4 = deriv(&offset(state, &k3, dt))?;
    let incr: [f64; 4] = std::array::from_fn(|i| (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) / 6.0);
    Ok(offset(state, &incr, dt))
}

/// End-effector velocity J(q)·q̇.
pub fn task_velocity(params: &ArmParams, state: &JointState) -> [f64; 2] {
    let v = jacobian(params, state.q) * Vector2::from(state.qdot);
    [v.x, v.y]
}
