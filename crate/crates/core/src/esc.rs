//! Perturbation-based extremum seeking for a scalar parameter.
//!
//! ```text
//!            ┌──────────┐    ┌─────┐    ┌──────────┐    ┌─────┐
//!   y ──────▶│ s/(s+ωh) │──▶ │  ×  │──▶ │ ωl/(s+ωl)│──▶ │ k/s │──▶ θ̂ ──(+)──▶ θ
//!            └──────────┘    └─────┘    └──────────┘    └─────┘        ▲
//!                               ▲                                      │
//!                          sin(ω1 t) ───────────── a sin(ω1 t) ─────────┘
//! ```
//!
//! Both filters are first-order sections discretized with the bilinear
//! transform at the loop step.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trajectory::{wrap_orientation, wrap_orientation_deg};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EscError {
    #[error("performance input is not finite ({0})")]
    NonFiniteInput(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EscParams {
    /// Dither amplitude (rad).
    pub amplitude: f64,
    /// Dither frequency ω1 (rad/s).
    pub dither_freq: f64,
    /// Demodulation low-pass cutoff ω_l (rad/s).
    pub lowpass_cutoff: f64,
    /// Input high-pass cutoff ω_h (rad/s).
    pub highpass_cutoff: f64,
    /// Integrator gain; positive maximizes, negative minimizes.
    pub gain: f64,
    /// Divisor applied to the performance signal before the high-pass.
    /// `None` means "sum of the muscle weights" when used by the harness.
    pub y_scale: Option<f64>,
}

impl Default for EscParams {
    fn default() -> Self {
        Self {
            amplitude: 0.1,
            dither_freq: 1.0,
            lowpass_cutoff: 0.1,
            highpass_cutoff: 0.5,
            gain: 1000.0,
            y_scale: None,
        }
    }
}

impl EscParams {
    pub fn violations(&self, prefix: &str) -> Vec<String> {
        let mut out = Vec::new();
        let checks = [
            ("amplitude", self.amplitude > 0.0),
            ("dither_freq", self.dither_freq > 0.0),
            ("lowpass_cutoff", self.lowpass_cutoff > 0.0 && self.lowpass_cutoff < self.dither_freq),
            ("highpass_cutoff", self.highpass_cutoff > 0.0 && self.highpass_cutoff < self.dither_freq),
            ("gain", self.gain.is_finite()),
            ("y_scale", self.y_scale.is_none_or(|s| s > 0.0 && s.is_finite())),
        ];
        for (name, ok) in checks {
            if !ok {
                out.push(format!("{prefix}.{name} is out of range"));
            }
        }
        if !(self.amplitude.is_finite() && self.dither_freq.is_finite()) {
            out.push(format!("{prefix} amplitude and dither_freq must be finite"));
        }
        out
    }
}

/// First-order section `H(s) = (c1 s + c0) / (s + ω)` after the bilinear map.
#[derive(Debug, Clone, Copy, PartialEq)]
struct FirstOrder {
    b0: f64,
    b1: f64,
    a1: f64,
    x1: f64,
    y1: f64,
}

impl FirstOrder {
    fn highpass(omega: f64, dt: f64) -> Self {
        let k = 2.0 / dt;
        let n = 1.0 / (k + omega);
        Self { b0: k * n, b1: -k * n, a1: (omega - k) * n, x1: 0.0, y1: 0.0 }
    }

    fn lowpass(omega: f64, dt: f64) -> Self {
        let k = 2.0 / dt;
        let n = 1.0 / (k + omega);
        Self { b0: omega * n, b1: omega * n, a1: (omega - k) * n, x1: 0.0, y1: 0.0 }
    }

    #[inline]
    fn step(&mut self, x: f64) -> f64 {
        let y = self.b0 * x + self.b1 * self.x1 - self.a1 * self.y1;
        self.x1 = x;
        self.y1 = y;
        y
    }

    /// Steady state for constant input `x`.
    fn prime(&mut self, x: f64) {
        self.x1 = x;
        self.y1 = x * (self.b0 + self.b1) / (1.0 + self.a1);
    }
}

/// Integrator and filter state of one optimizer instance.
#[derive(Debug, Clone, PartialEq)]
pub struct EscState {
    /// Parameter estimate (rad), not wrapped.
    pub theta_hat: f64,
    /// Elapsed optimizer time (s).
    pub t: f64,
    highpass: Option<FirstOrder>,
    lowpass: Option<FirstOrder>,
    last_gradient: f64,
}

impl EscState {
    /// Wrapped estimate in degrees.
    pub fn theta_hat_deg(&self) -> f64 {
        wrap_orientation(self.theta_hat).to_degrees()
    }

    /// Latest demodulated, low-passed gradient estimate.
    pub fn gradient_estimate(&self) -> f64 {
        self.last_gradient
    }
}

/// Fresh optimizer state at `theta0` (rad).
pub fn reset(theta0: f64) -> EscState {
    EscState { theta_hat: theta0, t: 0.0, highpass: None, lowpass: None, last_gradient: 0.0 }
}

/// Advances the optimizer by `dt` with the performance sample `y` and
/// returns the commanded parameter θ̂ + a sin(ω1 t).
///
/// The high-pass section is primed on the first sample, so a constant
/// offset on `y` never reaches the integrator. A non-finite `y` leaves the
/// state untouched.
pub fn esc_step(state: &mut EscState, params: &EscParams, y: f64, dt: f64) -> Result<f64, EscError> {
    if !y.is_finite() {
        return Err(EscError::NonFiniteInput(y));
    }
    let scaled = y / params.y_scale.unwrap_or(1.0);
    let hp = state.highpass.get_or_insert_with(|| {
        let mut f = FirstOrder::highpass(params.highpass_cutoff, dt);
        f.prime(scaled);
        f
    });
    let lp = state.lowpass.get_or_insert_with(|| FirstOrder::lowpass(params.lowpass_cutoff, dt));

    state.t += dt;
    let carrier = (params.dither_freq * state.t).sin();
    let demodulated = hp.step(scaled) * carrier;
    let gradient = lp.step(demodulated);
    state.last_gradient = gradient;
    state.theta_hat += params.gain * gradient * dt;
    Ok(state.theta_hat + params.amplitude * carrier)
}

/// Length of the convergence window (s).
pub const CONVERGENCE_WINDOW_SECS: f64 = 10.0;
/// Half-width of the convergence band (deg).
pub const CONVERGENCE_BAND_DEG: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ConvergenceStatus {
    pub converged: bool,
    /// Band center (deg), wrapped to (−90, 90].
    pub solution: f64,
    /// Time at which the criterion first held (s); zero when not converged.
    pub convergence_time: f64,
}

/// Timed samples of θ̂ (rad, unwrapped).
#[derive(Debug, Clone, Default)]
pub struct ThetaHistory {
    samples: VecDeque<(f64, f64)>,
    horizon: f64,
}

impl ThetaHistory {
    /// Keeps at least `horizon` seconds of samples.
    pub fn with_horizon(horizon: f64) -> Self {
        Self { samples: VecDeque::new(), horizon }
    }

    pub fn push(&mut self, t: f64, theta_hat: f64) {
        self.samples.push_back((t, theta_hat));
        if self.horizon > 0.0 {
            while let Some(&(t0, _)) = self.samples.front() {
                // Keep one sample at or before the window start.
                if t - t0 > self.horizon + 1.0 {
                    self.samples.pop_front();
                } else {
                    break;
                }
            }
        }
    }

    pub fn samples(&self) -> impl Iterator<Item = &(f64, f64)> {
        self.samples.iter()
    }

    pub fn first_time(&self) -> Option<f64> {
        self.samples.front().map(|s| s.0)
    }
}

/// Evaluates the criterion at `now`: the θ̂ samples of the trailing 10 s
/// window fit inside a ±10° band, i.e. they span at most 20°. The reported
/// solution is the window median.
pub fn check_convergence<'a>(history: impl IntoIterator<Item = &'a (f64, f64)>, now: f64) -> ConvergenceStatus {
    let start = now - CONVERGENCE_WINDOW_SECS;
    let mut covered = false;
    let mut window = Vec::new();
    for &(t, theta) in history {
        if t <= start + 1e-9 {
            covered = true;
        }
        if t >= start - 1e-9 && t <= now + 1e-9 {
            window.push(theta.to_degrees());
        }
    }
    if !covered || window.is_empty() {
        return ConvergenceStatus::default();
    }
    window.sort_by(f64::total_cmp);
    let span = window[window.len() - 1] - window[0];
    if span > 2.0 * CONVERGENCE_BAND_DEG + 1e-9 {
        return ConvergenceStatus::default();
    }
    let mid = window.len() / 2;
    let median = if window.len() % 2 == 0 { 0.5 * (window[mid - 1] + window[mid]) } else { window[mid] };
    ConvergenceStatus { converged: true, solution: wrap_orientation_deg(median), convergence_time: now }
}

/// Latches the first time the convergence criterion holds.
#[derive(Debug, Clone, Default)]
pub struct ConvergenceMonitor {
    history: ThetaHistory,
    status: ConvergenceStatus,
}

impl ConvergenceMonitor {
    pub fn new() -> Self {
        Self { history: ThetaHistory::with_horizon(CONVERGENCE_WINDOW_SECS), status: ConvergenceStatus::default() }
    }

    pub fn record(&mut self, t: f64, theta_hat: f64) {
        self.history.push(t, theta_hat);
    }

    /// Checks the criterion at `now` unless it already held.
    pub fn check(&mut self, now: f64) -> ConvergenceStatus {
        if !self.status.converged {
            let s = check_convergence(self.history.samples(), now);
            if s.converged {
                self.status = s;
            }
        }
        self.status
    }

    pub fn status(&self) -> ConvergenceStatus {
        self.status
    }
}
