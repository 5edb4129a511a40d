//! JSON messages of the interactive session and the session state machine
//! driven by them.

use serde::{Deserialize, Serialize};

use super::closed_loop::{SimError, SimRecord, Simulation};
use super::config::SimConfig;
use crate::emg::WeightVector;
use crate::robot::TaskPoint;
use crate::trajectory::ellipse_path;

/// Vertices of the ellipse polyline sent in the greeting.
pub const PATH_POINTS: usize = 128;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Hello {
        config: Box<SimConfig>,
        path: Vec<[f64; 2]>,
    },
    State {
        t: f64,
        p: [f64; 2],
        p_des: [f64; 2],
        m: [f64; 4],
        j: f64,
        theta_hat_deg: f64,
        theta_cmd_deg: f64,
        converged: bool,
    },
    Error {
        code: String,
        msg: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlAction {
    Start,
    Stop,
    Reset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    Cursor { p: [f64; 2] },
    Control { action: ControlAction },
    SetWeights { w: [f64; 4] },
}

impl ServerMessage {
    pub fn error(code: &str, msg: impl Into<String>) -> Self {
        Self::Error { code: code.to_owned(), msg: msg.into() }
    }

    pub fn state(r: &SimRecord) -> Self {
        Self::State {
            t: r.t,
            p: [r.p.x, r.p.y],
            p_des: [r.p_des.x, r.p_des.y],
            m: r.m.0,
            j: r.j_smooth,
            theta_hat_deg: r.theta_hat_deg,
            theta_cmd_deg: r.theta_cmd_deg,
            converged: r.converged,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages always serialize")
    }
}

/// Parses a client text frame; failures come back as the error frame to send.
pub fn parse_client_message(text: &str) -> Result<ClientMessage, ServerMessage> {
    let msg: ClientMessage =
        serde_json::from_str(text).map_err(|e| ServerMessage::error("malformed", e.to_string()))?;
    match &msg {
        ClientMessage::Cursor { p } if !(p[0].is_finite() && p[1].is_finite()) => {
            Err(ServerMessage::error("invalid", "cursor coordinates must be finite"))
        }
        ClientMessage::SetWeights { w } => {
            let v = WeightVector(*w).violations("w");
            if v.is_empty() {
                Ok(msg)
            } else {
                Err(ServerMessage::error("invalid", v.join("; ")))
            }
        }
        _ => Ok(msg),
    }
}

/// One interactive trial: owns the simulation, applies client commands, and
/// advances only while started and fed by a cursor.
#[derive(Debug, Clone)]
pub struct InteractiveSession {
    config: SimConfig,
    sim: Simulation,
    running: bool,
}

impl InteractiveSession {
    pub fn new(config: SimConfig) -> Result<Self, SimError> {
        let sim = Simulation::new(config.clone())?;
        Ok(Self { config, sim, running: true })
    }

    pub fn simulation(&self) -> &Simulation {
        &self.sim
    }

    pub fn is_running(&self) -> bool {
        self.running
    }

    /// False while paused or waiting for a cursor source.
    pub fn is_advancing(&self) -> bool {
        self.running && self.sim.has_cursor()
    }

    pub fn hello(&self) -> ServerMessage {
        let theta = self.sim.latest().theta_cmd_deg.to_radians();
        ServerMessage::Hello {
            config: Box::new(self.config.clone()),
            path: ellipse_path(&self.config.ellipse, theta, PATH_POINTS).iter().map(|p| [p.x, p.y]).collect(),
        }
    }

    pub fn handle(&mut self, msg: ClientMessage) -> Result<(), SimError> {
        match msg {
            ClientMessage::Cursor { p } => self.sim.update_cursor(TaskPoint::new(p[0], p[1])),
            ClientMessage::Control { action: ControlAction::Start } => self.running = true,
            ClientMessage::Control { action: ControlAction::Stop } => self.running = false,
            ClientMessage::Control { action: ControlAction::Reset } => {
                self.sim = Simulation::new(self.config.clone())?;
            }
            ClientMessage::SetWeights { w } => {
                self.config.weights = WeightVector(w);
                self.sim.set_weights(WeightVector(w));
            }
        }
        Ok(())
    }

    /// Handles one raw text frame, returning an error frame for bad input.
    pub fn handle_text(&mut self, text: &str) -> Option<ServerMessage> {
        match parse_client_message(text) {
            Ok(msg) => self.handle(msg).err().map(|e| ServerMessage::error("internal", e.to_string())),
            Err(frame) => Some(frame),
        }
    }

    pub fn disconnect(&mut self) {
        self.sim.clear_cursor();
    }

    /// One physics tick; yields a state message on telemetry ticks.
    pub fn tick(&mut self) -> Result<Option<ServerMessage>, SimError> {
        if !self.is_advancing() {
            return Ok(None);
        }
        let rec = *self.sim.step()?;
        Ok(self.sim.is_telemetry_tick().then(|| ServerMessage::state(&rec)))
    }
}
