//! The closed exercise loop, one physics/DSP tick at a time.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::{ConfigError, Mode, SimConfig};
use crate::emg::{performance, EmgError, EmgPipeline, FilterError, OutputSmoother, PerformanceWindow};
use crate::esc::{esc_step, reset, ConvergenceMonitor, ConvergenceStatus, EscState};
use crate::human::{external_cursor_force, Activation4, CursorTracker, EmgSynth, FatigueState, HumanPlant};
use crate::robot::{
    dynamics_step, forward_kinematics, inverse_kinematics, pd_gravity_torque, task_velocity, JointState, RobotError,
    TaskPoint,
};
use crate::trajectory::{ellipse_point, wrap_orientation};

/// Rate at which θ̂ is sampled for the convergence check (Hz).
const HISTORY_RATE: f64 = 100.0;
/// Random stream base of the calibration EMG.
const CALIBRATION_STREAM: u64 = 64;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Emg(#[from] EmgError),
    #[error(transparent)]
    Robot(#[from] RobotError),
    #[error("numeric divergence at step {step} (t = {t:.4} s, record {record}): {what}")]
    Divergence { step: u64, t: f64, record: usize, what: String },
    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("CSV row {row}: {msg}")]
    CsvFormat { row: usize, msg: String },
}

/// One telemetry sample of the loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimRecord {
    pub t: f64,
    pub p: TaskPoint,
    pub p_des: TaskPoint,
    pub m: Activation4,
    pub j_raw: f64,
    pub j_smooth: f64,
    pub theta_hat_deg: f64,
    pub theta_cmd_deg: f64,
    pub converged: bool,
    pub f_h: [f64; 2],
}

/// Loop stages in evaluation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// Cursor placed on the current ellipse.
    Display,
    /// Hand force applied and arm integrated.
    Track,
    /// Muscles activate and emit raw EMG.
    Activate,
    /// EMG filtered into normalized activations.
    Envelope,
    /// Windowed weighted performance.
    Performance,
    /// Performance smoothing.
    Smooth,
    /// Optimizer update.
    Optimize,
    /// New orientation applied to the displayed path.
    Reorient,
}

pub trait StageObserver {
    fn stage(&mut self, stage: Stage);
}

impl StageObserver for () {
    #[inline]
    fn stage(&mut self, _: Stage) {}
}

impl StageObserver for Vec<Stage> {
    fn stage(&mut self, stage: Stage) {
        self.push(stage);
    }
}

/// Who moves the handle.
#[derive(Debug, Clone)]
enum Driver {
    Simulated,
    Cursor(CursorTracker),
}

/// State of one running experiment.
#[derive(Debug, Clone)]
pub struct Simulation {
    config: SimConfig,
    dt: f64,
    step: u64,
    arm: JointState,
    /// PD set-point: the arm posture at the ellipse center.
    q_home: [f64; 2],
    human: HumanPlant,
    driver: Driver,
    pipeline: EmgPipeline,
    window: PerformanceWindow,
    smoother: OutputSmoother,
    esc: EscState,
    esc_engaged: bool,
    /// Orientation held fixed instead of optimized.
    fixed_theta: Option<f64>,
    theta_cmd: f64,
    monitor: ConvergenceMonitor,
    history_every: u64,
    check_every: u64,
    last: SimRecord,
    cursor_stale: bool,
}

impl Simulation {
    pub fn new(config: SimConfig) -> Result<Self, SimError> {
        config.validate()?;
        let fs = config.physics_rate;
        let dt = config.dt();
        let theta0 = config.theta0_deg.to_radians();

        let mut pipeline = EmgPipeline::new(&config.dsp, fs)?;
        let calibration = {
            let mut synth = EmgSynth::with_stream_base(config.seed, CALIBRATION_STREAM, fs)?;
            let full = Activation4([1.0; 4]);
            (0..(config.dsp.calibration_secs * fs).round() as usize).map(|_| synth.sample(&full)).collect::<Vec<_>>()
        };
        pipeline.calibrate_mvc(&calibration)?;

        let start = ellipse_point(&config.ellipse, theta0, 0.0);
        let arm = JointState::at_rest(inverse_kinematics(&config.arm, start)?);
        let driver = match config.mode {
            Mode::SimulatedHuman => Driver::Simulated,
            Mode::Interactive => Driver::Cursor(CursorTracker::default()),
        };

        let mut monitor = ConvergenceMonitor::new();
        monitor.record(0.0, theta0);

        Ok(Self {
            dt,
            step: 0,
            arm,
            q_home: inverse_kinematics(&config.arm, config.ellipse.center)?,
            human: HumanPlant::new(config.human, config.muscles.clone(), config.seed, fs)?,
            driver,
            pipeline,
            window: PerformanceWindow::for_revolution(config.ellipse.t_rev, dt),
            smoother: OutputSmoother::new(config.dsp.smoothing_hz, fs)?,
            esc: reset(theta0),
            esc_engaged: false,
            fixed_theta: None,
            theta_cmd: theta0,
            monitor,
            history_every: ((fs / HISTORY_RATE).round() as u64).max(1),
            check_every: (fs.round() as u64).max(1),
            last: SimRecord {
                t: 0.0,
                p: start,
                p_des: start,
                m: Activation4::ZERO,
                j_raw: 0.0,
                j_smooth: 0.0,
                theta_hat_deg: wrap_orientation(theta0).to_degrees(),
                theta_cmd_deg: wrap_orientation(theta0).to_degrees(),
                converged: false,
                f_h: [0.0; 2],
            },
            cursor_stale: false,
            config,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.dt
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn esc_state(&self) -> &EscState {
        &self.esc
    }

    pub fn arm_state(&self) -> &JointState {
        &self.arm
    }

    pub fn fatigue(&self) -> FatigueState {
        *self.human.fatigue()
    }

    /// Continues from an earlier trial's fatigue.
    pub fn set_fatigue(&mut self, fatigue: FatigueState) {
        self.human.set_fatigue(fatigue);
    }

    /// Disables the optimizer and holds the orientation at `theta` (rad).
    pub fn fix_orientation(&mut self, theta: f64) -> Result<(), SimError> {
        self.fixed_theta = Some(theta);
        self.theta_cmd = theta;
        self.esc = reset(theta);
        let start = ellipse_point(&self.config.ellipse, theta, self.time());
        self.arm = JointState::at_rest(inverse_kinematics(&self.config.arm, start)?);
        Ok(())
    }

    pub fn freeze_fatigue(&mut self, frozen: bool) {
        self.human.freeze_fatigue(frozen);
    }

    /// Replaces the muscle weights, e.g. between interactive trials.
    pub fn set_weights(&mut self, weights: crate::emg::WeightVector) {
        self.config.weights = weights;
    }

    /// Feeds a live cursor position (interactive mode only).
    pub fn update_cursor(&mut self, p: TaskPoint) {
        let now = self.time();
        if let Driver::Cursor(c) = &mut self.driver {
            c.update(p, now);
        }
    }

    /// Drops the cursor source, e.g. when the client disconnects.
    pub fn clear_cursor(&mut self) {
        if let Driver::Cursor(c) = &mut self.driver {
            c.clear();
        }
    }

    pub fn has_cursor(&self) -> bool {
        match &self.driver {
            Driver::Simulated => true,
            Driver::Cursor(c) => c.sample(self.time()).is_some(),
        }
    }

    /// True while the interactive cursor has not been refreshed recently.
    pub fn cursor_stale(&self) -> bool {
        self.cursor_stale
    }

    pub fn convergence(&self) -> ConvergenceStatus {
        self.monitor.status()
    }

    /// Most recent loop sample.
    pub fn latest(&self) -> &SimRecord {
        &self.last
    }

    pub fn step(&mut self) -> Result<&SimRecord, SimError> {
        self.step_observed(&mut ())
    }

    /// Advances one tick, reporting each stage to `obs`.
    pub fn step_observed<O: StageObserver>(&mut self, obs: &mut O) -> Result<&SimRecord, SimError> {
        let cfg = &self.config;
        let t = self.time();
        let dt = self.dt;

        // (a) visual feedback
        let p_des = ellipse_point(&cfg.ellipse, self.theta_cmd, t);
        obs.stage(Stage::Display);

        // (b) the subject drives the handle
        let p = forward_kinematics(&cfg.arm, self.arm.q);
        let pdot = task_velocity(&cfg.arm, &self.arm);
        let f_h = match &self.driver {
            Driver::Simulated => self.human.tracking_force(p, pdot, p_des),
            Driver::Cursor(c) => match c.sample(t) {
                Some(s) => {
                    self.cursor_stale = s.stale;
                    external_cursor_force(&cfg.human, p, pdot, s.point)
                }
                None => [0.0; 2],
            },
        };
        let tau = pd_gravity_torque(&cfg.arm, &cfg.pd, &self.arm, self.q_home);
        self.arm = match dynamics_step(&cfg.arm, &self.arm, tau, f_h, dt) {
            Ok(next) => next,
            Err(e) => return Err(self.divergence(e.to_string())),
        };
        obs.stage(Stage::Track);

        // (c) muscles and raw EMG
        let m_true = self.human.activate(f_h, dt);
        let raw = self.human.emg(&m_true);
        obs.stage(Stage::Activate);

        // (d) envelope
        let m = self.pipeline.process(raw);
        obs.stage(Stage::Envelope);

        // (e) performance
        let j_raw = performance(&mut self.window, &m, &cfg.weights);
        obs.stage(Stage::Performance);

        // (f) smoothing
        let j_smooth = self.smoother.step(j_raw);
        obs.stage(Stage::Smooth);

        // (g) optimizer
        self.step += 1;
        let now = self.time();
        if self.fixed_theta.is_none() && now > cfg.esc_hold_secs() + 0.5 * dt {
            self.esc_engaged = true;
        }
        if self.esc_engaged {
            let params = crate::esc::EscParams { y_scale: Some(cfg.y_scale()), ..cfg.esc };
            match esc_step(&mut self.esc, &params, j_smooth, dt) {
                Ok(cmd) => self.theta_cmd = cmd,
                Err(e) => return Err(self.divergence(e.to_string())),
            }
        }
        obs.stage(Stage::Optimize);

        // (h) the next tick displays the path at the new orientation
        if self.step % self.history_every == 0 {
            self.monitor.record(now, self.esc.theta_hat);
        }
        if self.step % self.check_every == 0 {
            self.monitor.check(now);
        }
        obs.stage(Stage::Reorient);

        if !(self.arm.is_finite() && m.is_finite() && j_raw.is_finite() && j_smooth.is_finite()) {
            return Err(self.divergence("non-finite loop state".to_owned()));
        }

        self.last = SimRecord {
            t: now,
            p,
            p_des,
            m,
            j_raw,
            j_smooth,
            theta_hat_deg: wrap_orientation(self.esc.theta_hat).to_degrees(),
            theta_cmd_deg: wrap_orientation(self.theta_cmd).to_degrees(),
            converged: self.monitor.status().converged,
            f_h,
        };
        Ok(&self.last)
    }

    fn divergence(&self, what: String) -> SimError {
        SimError::Divergence {
            step: self.step,
            t: self.time(),
            record: telemetry_count(self.step, self.config.physics_rate, self.config.telemetry_rate) as usize,
            what,
        }
    }

    /// True when the tick just completed should be published.
    pub fn is_telemetry_tick(&self) -> bool {
        let (fs, ft) = (self.config.physics_rate, self.config.telemetry_rate);
        self.step > 0 && telemetry_count(self.step, fs, ft) > telemetry_count(self.step - 1, fs, ft)
    }

    /// Runs to `duration`, collecting telemetry records.
    pub fn run(&mut self) -> Result<Vec<SimRecord>, SimError> {
        let total = (self.config.duration * self.config.physics_rate).round() as u64;
        let mut records = Vec::with_capacity((self.config.duration * self.config.telemetry_rate) as usize + 1);
        while self.step < total {
            let rec = *self.step()?;
            if self.is_telemetry_tick() {
                records.push(rec);
            }
        }
        Ok(records)
    }
}

/// Number of telemetry records due after `step` physics steps.
fn telemetry_count(step: u64, physics_rate: f64, telemetry_rate: f64) -> u64 {
    // Integer arithmetic when both rates are whole numbers keeps the schedule exact.
    if physics_rate.fract() == 0.0 && telemetry_rate.fract() == 0.0 {
        step * telemetry_rate as u64 / physics_rate as u64
    } else {
        (step as f64 * telemetry_rate / physics_rate).floor() as u64
    }
}

/// Headless closed-loop run.
pub fn run_simulation(config: &SimConfig) -> Result<(Vec<SimRecord>, ConvergenceStatus), SimError> {
    let mut sim = Simulation::new(config.clone())?;
    let records = sim.run()?;
    Ok((records, sim.convergence()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short(duration: f64) -> SimConfig {
        SimConfig { duration, ..SimConfig::default() }
    }

    #[test]
    fn stages_run_in_pipeline_order() {
        let mut sim = Simulation::new(short(1.0)).unwrap();
        let mut seen = Vec::new();
        for _ in 0..3 {
            sim.step_observed(&mut seen).unwrap();
        }
        let order = [
            Stage::Display,
            Stage::Track,
            Stage::Activate,
            Stage::Envelope,
            Stage::Performance,
            Stage::Smooth,
            Stage::Optimize,
            Stage::Reorient,
        ];
        assert_eq!(seen, order.repeat(3));
    }

    #[test]
    fn telemetry_schedule_is_exact() {
        assert_eq!(telemetry_count(240_000, 2000.0, 60.0), 7200);
        let mut sim = Simulation::new(short(2.0)).unwrap();
        let recs = sim.run().unwrap();
        assert_eq!(recs.len(), 120);
        assert!(recs.windows(2).all(|w| w[1].t > w[0].t));
    }

    #[test]
    fn zero_gain_holds_initial_orientation() {
        let mut cfg = short(12.0);
        cfg.esc.gain = 0.0;
        cfg.theta0_deg = 25.0;
        let (recs, status) = run_simulation(&cfg).unwrap();
        assert!(recs.iter().all(|r| (r.theta_hat_deg - 25.0).abs() < 1e-9));
        assert!(status.converged);
        assert!((status.solution - 25.0).abs() < 1e-9);
        assert!((status.convergence_time - 10.0).abs() < 1e-9);
    }

    #[test]
    fn fixed_orientation_disables_optimizer() {
        let mut sim = Simulation::new(short(6.0)).unwrap();
        sim.fix_orientation(0.5).unwrap();
        let recs = sim.run().unwrap();
        let last = recs.last().unwrap();
        assert!((last.theta_cmd_deg - 0.5f64.to_degrees()).abs() < 1e-9);
        assert!(last.j_raw > 0.0);
    }

    #[test]
    fn interactive_without_cursor_applies_no_force() {
        let cfg = SimConfig { mode: Mode::Interactive, ..short(1.0) };
        let mut sim = Simulation::new(cfg).unwrap();
        assert!(!sim.has_cursor());
        let rec = *sim.step().unwrap();
        assert_eq!(rec.f_h, [0.0, 0.0]);
        sim.update_cursor(TaskPoint::new(rec.p.x + 0.01, rec.p.y));
        let rec = *sim.step().unwrap();
        assert!(rec.f_h[0] > 3.0);
        for _ in 0..1100 {
            sim.step().unwrap();
        }
        assert!(sim.cursor_stale());
    }

    #[test]
    fn invalid_config_is_rejected() {
        let cfg = SimConfig { duration: -1.0, ..SimConfig::default() };
        assert!(matches!(Simulation::new(cfg), Err(SimError::Config(_))));
    }
}
