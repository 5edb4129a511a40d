//! Experiment configuration, loaded from JSON with defaults for omitted fields.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::emg::{DspConfig, WeightVector};
use crate::esc::EscParams;
use crate::human::{HumanParams, MuscleModel};
use crate::robot::{ArmParams, PdGains};
use crate::trajectory::EllipseSpec;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("config parse error at line {line}, column {column}: {msg}")]
    Parse { line: usize, column: usize, msg: String },
    #[error("invalid config:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    SimulatedHuman,
    Interactive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub arm: ArmParams,
    pub pd: PdGains,
    pub ellipse: EllipseSpec,
    pub human: HumanParams,
    pub muscles: MuscleModel,
    pub esc: EscParams,
    pub dsp: DspConfig,
    pub weights: WeightVector,
    /// Initial orientation (deg).
    pub theta0_deg: f64,
    /// Simulated duration (s).
    pub duration: f64,
    pub seed: u64,
    pub mode: Mode,
    /// Physics and DSP rate (Hz).
    pub physics_rate: f64,
    /// Telemetry record rate (Hz).
    pub telemetry_rate: f64,
    /// Time the optimizer waits before adapting (s); defaults to one
    /// revolution so that the performance window is full.
    pub esc_hold: Option<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            arm: ArmParams::default(),
            pd: PdGains::default(),
            ellipse: EllipseSpec::default(),
            human: HumanParams::default(),
            muscles: MuscleModel::default(),
            esc: EscParams::default(),
            dsp: DspConfig::default(),
            weights: WeightVector::default(),
            theta0_deg: 0.0,
            duration: 120.0,
            seed: 1,
            mode: Mode::SimulatedHuman,
            physics_rate: 2000.0,
            telemetry_rate: 60.0,
            esc_hold: None,
        }
    }
}

impl SimConfig {
    pub fn dt(&self) -> f64 {
        1.0 / self.physics_rate
    }

    /// ESC performance divisor: explicit setting or the sum of the weights.
    pub fn y_scale(&self) -> f64 {
        self.esc.y_scale.unwrap_or_else(|| self.weights.sum())
    }

    pub fn esc_hold_secs(&self) -> f64 {
        self.esc_hold.unwrap_or(self.ellipse.t_rev)
    }

    /// All violated invariants, each naming its field.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        out.extend(self.arm.violations("arm"));
        out.extend(self.pd.violations("pd"));
        out.extend(self.ellipse.violations(&self.arm, "ellipse"));
        out.extend(self.human.violations("human"));
        out.extend(self.muscles.violations("muscles"));
        out.extend(self.esc.violations("esc"));
        out.extend(self.weights.violations("weights"));
        if !(self.physics_rate > 0.0 && self.physics_rate.is_finite()) {
            out.push(format!("physics_rate must be positive (got {})", self.physics_rate));
        } else {
            out.extend(self.dsp.violations(self.physics_rate, "dsp"));
        }
        if !(self.telemetry_rate > 0.0 && self.telemetry_rate <= self.physics_rate) {
            out.push(format!(
                "telemetry_rate must lie in (0, physics_rate] (got {})",
                self.telemetry_rate
            ));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            out.push(format!("duration must be positive (got {})", self.duration));
        }
        if !self.theta0_deg.is_finite() {
            out.push("theta0_deg must be finite".to_owned());
        }
        if let Some(h) = self.esc_hold {
            if !(h >= 0.0 && h.is_finite()) {
                out.push(format!("esc_hold must be non-negative (got {h})"));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(v))
        }
    }
}

/// Parses and validates a JSON config. Blank input yields the defaults.
pub fn load_config(text: &str) -> Result<SimConfig, ConfigError> {
    let config: SimConfig = if text.trim().is_empty() {
        SimConfig::default()
    } else {
        serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            line: e.line(),
            column: e.column(),
            msg: e.to_string(),
        })?
    };
    config.validate()?;
    Ok(config)
}
