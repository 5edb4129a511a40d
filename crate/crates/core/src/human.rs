//! Synthetic human in the loop.
//!
//! The person exercising is modelled as a delayed spring-damper tracker that
//! pulls the end-effector toward the cursor. The resulting hand force is
//! split over four shoulder muscles by rectified projection onto each
//! muscle's pull direction, scaled by a recruitment factor that grows with
//! accumulated activity. Raw EMG is synthesized by amplitude-modulating
//! band-limited noise with the activations.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::emg::{butterworth_section_qs, design_butterworth, design_second_order, Cascade, FilterError, FilterKind};
use crate::robot::TaskPoint;

/// Upper activation clamp.
pub const ACTIVATION_CEILING: f64 = 1.5;
/// Cursor updates older than this are considered stale (s).
pub const CURSOR_STALE_SECS: f64 = 0.5;

/// Carrier band of the synthesized EMG (Hz). The upper edge uses a steeper
/// fourth-order roll-off placed inside the nominal 450 Hz limit so that
/// almost all carrier power stays within 30–450 Hz.
pub const CARRIER_LOW_HZ: f64 = 30.0;
pub const CARRIER_HIGH_HZ: f64 = 360.0;

/// Muscle activation vector, dimensionless, ordered lateral deltoid,
/// anterior deltoid, biceps brachii, pectoralis major.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Activation4(pub [f64; 4]);

impl Activation4 {
    pub const ZERO: Self = Self([0.0; 4]);

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|m| m.is_finite())
    }
}

pub const MUSCLE_NAMES: [&str; 4] = ["lateral deltoid", "anterior deltoid", "biceps brachii", "pectoralis major"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HumanParams {
    /// Tracking stiffness (N/m).
    pub kp: f64,
    /// Tracking damping (N·s/m).
    pub kd: f64,
    /// Visual-motor reaction delay (s).
    pub delay: f64,
    /// Standard deviation of the hand-force noise (N).
    pub force_noise: f64,
}

impl Default for HumanParams {
    fn default() -> Self {
        Self { kp: 400.0, kd: 40.0, delay: 0.15, force_noise: 2.0 }
    }
}

impl HumanParams {
    pub fn violations(&self, prefix: &str) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.kp > 0.0 && self.kp.is_finite()) {
            out.push(format!("{prefix}.kp must be positive (got {})", self.kp));
        }
        for (name, v) in [("kd", self.kd), ("delay", self.delay), ("force_noise", self.force_noise)] {
            if !(v >= 0.0 && v.is_finite()) {
                out.push(format!("{prefix}.{name} must be non-negative (got {v})"));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MuscleSpec {
    pub name: String,
    /// Pull direction in the task plane, degrees from +x.
    pub direction_deg: f64,
    /// Hand force (N) that produces unit activation.
    pub max_force: f64,
    /// Recruitment growth under fatigue; recruitment saturates at `1 + fatigue_gain`.
    pub fatigue_gain: f64,
}

impl MuscleSpec {
    pub fn direction(&self) -> [f64; 2] {
        let (s, c) = self.direction_deg.to_radians().sin_cos();
        [c, s]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MuscleModel {
    pub muscles: [MuscleSpec; 4],
    /// Fatigue time constant (s).
    pub fatigue_tau: f64,
    /// Standard deviation of additive activation noise.
    pub activation_noise: f64,
}

impl Default for MuscleModel {
    fn default() -> Self {
        let spec = |name: &str, direction_deg: f64, max_force: f64| MuscleSpec {
            name: name.to_owned(),
            direction_deg,
            max_force,
            fatigue_gain: 0.3,
        };
        Self {
            muscles: [
                spec(MUSCLE_NAMES[0], 100.0, 1200.0),
                spec(MUSCLE_NAMES[1], 60.0, 1500.0),
                spec(MUSCLE_NAMES[2], 80.0, 1000.0),
                spec(MUSCLE_NAMES[3], -20.0, 2000.0),
            ],
            fatigue_tau: 120.0,
            activation_noise: 0.002,
        }
    }
}

impl MuscleModel {
    pub fn violations(&self, prefix: &str) -> Vec<String> {
        let mut out = Vec::new();
        for (i, m) in self.muscles.iter().enumerate() {
            if !m.direction_deg.is_finite() {
                out.push(format!("{prefix}.muscles[{i}].direction_deg must be finite"));
            }
            if !(m.max_force > 0.0 && m.max_force.is_finite()) {
                out.push(format!("{prefix}.muscles[{i}].max_force must be positive (got {})", m.max_force));
            }
            if !(m.fatigue_gain >= 0.0 && m.fatigue_gain.is_finite()) {
                out.push(format!("{prefix}.muscles[{i}].fatigue_gain must be non-negative (got {})", m.fatigue_gain));
            }
        }
        if !(self.fatigue_tau > 0.0 && self.fatigue_tau.is_finite()) {
            out.push(format!("{prefix}.fatigue_tau must be positive (got {})", self.fatigue_tau));
        }
        if !(self.activation_noise >= 0.0 && self.activation_noise.is_finite()) {
            out.push(format!("{prefix}.activation_noise must be non-negative (got {})", self.activation_noise));
        }
        out
    }
}

/// Motor-unit recruitment state. `active_time[i]` is the activation-weighted
/// time muscle `i` has been working.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FatigueState {
    pub recruitment: [f64; 4],
    pub active_time: [f64; 4],
}

impl Default for FatigueState {
    fn default() -> Self {
        Self { recruitment: [1.0; 4], active_time: [0.0; 4] }
    }
}

/// F_h = Kp (P_des − P) − Kd Ṗ + noise, with `p_des` already delayed.
pub fn tracking_force(
    params: &HumanParams,
    p: TaskPoint,
    pdot: [f64; 2],
    p_des: TaskPoint,
    noise: [f64; 2],
) -> [f64; 2] {
    [
        params.kp * (p_des.x - p.x) - params.kd * pdot[0] + noise[0],
        params.kp * (p_des.y - p.y) - params.kd * pdot[1] + noise[1],
    ]
}

/// The same spring-damper law aimed at a live mouse cursor.
pub fn external_cursor_force(params: &HumanParams, p: TaskPoint, pdot: [f64; 2], cursor: TaskPoint) -> [f64; 2] {
    tracking_force(params, p, pdot, cursor, [0.0; 2])
}

/// Muscles pull but do not push: each activation is the positive part of the
/// force projection onto the muscle's direction.
pub fn muscle_activation(
    model: &MuscleModel,
    force: [f64; 2],
    fatigue: &FatigueState,
    noise: [f64; 4],
) -> Activation4 {
    Activation4(std::array::from_fn(|i| {
        let m = &model.muscles[i];
        let u = m.direction();
        let pull = (force[0] * u[0] + force[1] * u[1]).max(0.0);
        (fatigue.recruitment[i] * pull / m.max_force + noise[i]).clamp(0.0, ACTIVATION_CEILING)
    }))
}

pub fn fatigue_update(state: &FatigueState, m: &Activation4, dt: f64, model: &MuscleModel) -> FatigueState {
    let active_time: [f64; 4] = std::array::from_fn(|i| state.active_time[i] + m.0[i].max(0.0) * dt);
    let recruitment = std::array::from_fn(|i| {
        1.0 + model.muscles[i].fatigue_gain * (1.0 - (-active_time[i] / model.fatigue_tau).exp())
    });
    FatigueState { recruitment, active_time }
}

/// Four independent band-limited Gaussian carriers of unit RMS, each scaled
/// by its muscle's activation.
#[derive(Debug, Clone)]
pub struct EmgSynth {
    rngs: [ChaCha8Rng; 4],
    carriers: [Cascade; 4],
    gain: f64,
}

impl EmgSynth {
    pub fn new(seed: u64, fs: f64) -> Result<Self, FilterError> {
        Self::with_stream_base(seed, 16, fs)
    }

    /// Uses random streams `base..base + 4` of `seed`.
    pub fn with_stream_base(seed: u64, base: u64, fs: f64) -> Result<Self, FilterError> {
        let mut sections = vec![design_butterworth(FilterKind::Highpass, CARRIER_LOW_HZ, fs)?];
        for q in butterworth_section_qs(4) {
            sections.push(design_second_order(FilterKind::Lowpass, CARRIER_HIGH_HZ.min(0.45 * fs), fs, q)?);
        }
        let cascade = Cascade::new(sections);

        // White noise of unit variance leaves the cascade with variance Σh².
        let mut probe = cascade.clone();
        let energy: f64 = (0..(10.0 * fs) as usize)
            .map(|n| probe.step(if n == 0 { 1.0 } else { 0.0 }).powi(2))
            .sum();

        Ok(Self {
            rngs: std::array::from_fn(|i| stream_rng(seed, base + i as u64)),
            carriers: std::array::from_fn(|_| cascade.clone()),
            gain: 1.0 / energy.sqrt(),
        })
    }

    /// Next raw sample for activations `m`.
    pub fn sample(&mut self, m: &Activation4) -> [f64; 4] {
        std::array::from_fn(|i| {
            let white: f64 = self.rngs[i].sample(StandardNormal);
            m.0[i] * self.gain * self.carriers[i].step(white)
        })
    }
}

/// Independent deterministic random stream `stream` derived from `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Latest cursor position received from an interactive client.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CursorTracker {
    last: Option<(TaskPoint, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CursorSample {
    pub point: TaskPoint,
    /// True once no update has arrived for more than [`CURSOR_STALE_SECS`];
    /// the last position is held.
    pub stale: bool,
}

impl CursorTracker {
    pub fn update(&mut self, point: TaskPoint, now: f64) {
        self.last = Some((point, now));
    }

    pub fn clear(&mut self) {
        self.last = None;
    }

    pub fn sample(&self, now: f64) -> Option<CursorSample> {
        self.last.map(|(point, at)| CursorSample { point, stale: now - at > CURSOR_STALE_SECS })
    }
}

/// Seeded simulated subject: delayed tracking, fatigue, and raw EMG.
#[derive(Debug, Clone)]
pub struct HumanPlant {
    params: HumanParams,
    model: MuscleModel,
    fatigue: FatigueState,
    freeze_fatigue: bool,
    delay_line: VecDeque<TaskPoint>,
    delay_steps: usize,
    force_rng: ChaCha8Rng,
    activation_rng: ChaCha8Rng,
    synth: EmgSynth,
}

impl HumanPlant {
    pub fn new(params: HumanParams, model: MuscleModel, seed: u64, fs: f64) -> Result<Self, FilterError> {
        let delay_steps = (params.delay * fs).round() as usize;
        Ok(Self {
            params,
            model,
            fatigue: FatigueState::default(),
            freeze_fatigue: false,
            delay_line: VecDeque::with_capacity(delay_steps + 1),
            delay_steps,
            force_rng: stream_rng(seed, 1),
            activation_rng: stream_rng(seed, 2),
            synth: EmgSynth::new(seed, fs)?,
        })
    }

    pub fn params(&self) -> &HumanParams {
        &self.params
    }

    pub fn model(&self) -> &MuscleModel {
        &self.model
    }

    pub fn fatigue(&self) -> &FatigueState {
        &self.fatigue
    }

    pub fn set_fatigue(&mut self, fatigue: FatigueState) {
        self.fatigue = fatigue;
    }

    /// Holds recruitment at its current value.
    pub fn freeze_fatigue(&mut self, frozen: bool) {
        self.freeze_fatigue = frozen;
    }

    /// Perceived cursor position after the reaction delay. Before the line
    /// has filled, the oldest sample is held.
    fn delayed_target(&mut self, p_des: TaskPoint) -> TaskPoint {
        self.delay_line.push_back(p_des);
        if self.delay_line.len() > self.delay_steps + 1 {
            self.delay_line.pop_front();
        }
        self.delay_line[0]
    }

    /// Hand force while tracking the displayed cursor `p_des`.
    pub fn tracking_force(&mut self, p: TaskPoint, pdot: [f64; 2], p_des: TaskPoint) -> [f64; 2] {
        let target = self.delayed_target(p_des);
        let sigma = self.params.force_noise;
        let noise = std::array::from_fn(|_| sigma * self.force_rng.sample::<f64, _>(StandardNormal));
        tracking_force(&self.params, p, pdot, target, noise)
    }

    /// True muscle activations for the hand force; advances fatigue by `dt`.
    pub fn activate(&mut self, force: [f64; 2], dt: f64) -> Activation4 {
        let sigma = self.model.activation_noise;
        let noise = std::array::from_fn(|_| sigma * self.activation_rng.sample::<f64, _>(StandardNormal));
        let m = muscle_activation(&self.model, force, &self.fatigue, noise);
        if !self.freeze_fatigue {
            self.fatigue = fatigue_update(&self.fatigue, &m, dt, &self.model);
        }
        m
    }

    /// Raw EMG for the activations.
    pub fn emg(&mut self, m: &Activation4) -> [f64; 4] {
        self.synth.sample(m)
    }
}
