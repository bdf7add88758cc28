//! Typed envelope and payload bodies.

use crate::dynamics::VehicleState;
use crate::guidance::ControlCommand;
use crate::perception::Cause;
use crate::reasoner::StrategyTheta;
use crate::sensors::{DvlMeasurement, Measurement};
use crate::solver::{SolverVerdict, Violation};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModuleId {
    Vehicle,
    Scheduler,
    Perception,
    Reasoner,
    Solver,
    Guidance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MsgType {
    StateData,
    PlanningRequest,
    Strategy,
    VerificationResult,
    ControlCommand,
}

/// What the vehicle reports on each sensor tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Telemetry {
    /// Sensor sample index since start.
    pub sample: u64,
    pub truth: VehicleState,
    pub measurement: Measurement,
    pub dvl: Option<DvlMeasurement>,
    pub steering_locked: bool,
}

/// The agent's per-report-cycle summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateMessage {
    pub est_state: VehicleState,
    pub e_p: f64,
    pub e_psi: f64,
    pub rudder_ok_m: bool,
    pub t: f64,
    pub raw_flag: bool,
    pub confirmed: bool,
    pub mission_complete: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub enum StateData {
    Telemetry(Telemetry),
    Agent(StateMessage),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanningRequest {
    pub initial: bool,
    pub retry_index: u32,
    pub violations: BTreeSet<Violation>,
    pub causes: BTreeSet<Cause>,
    pub prompt: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyMsg {
    /// Reasoner output exactly as received.
    pub raw: String,
    /// Parsed strategy, absent when parsing failed.
    pub theta: Option<StrategyTheta>,
    pub parse_error: Option<String>,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerificationMsg {
    pub verdict: SolverVerdict,
    /// Out-of-schema actions that passed the bound check.
    pub admitted: Vec<String>,
    pub rejected: Vec<String>,
    /// Whether this verification was part of a fault response.
    pub fault_triggered: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    StateData(StateData),
    PlanningRequest(PlanningRequest),
    Strategy(StrategyMsg),
    VerificationResult(VerificationMsg),
    ControlCommand(ControlCommand),
}

impl Payload {
    pub fn msg_type(&self) -> MsgType {
        match self {
            Self::StateData(_) => MsgType::StateData,
            Self::PlanningRequest(_) => MsgType::PlanningRequest,
            Self::Strategy(_) => MsgType::Strategy,
            Self::VerificationResult(_) => MsgType::VerificationResult,
            Self::ControlCommand(_) => MsgType::ControlCommand,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TypedMessage {
    /// Sim time, s.
    pub t_stamp: f64,
    pub src: ModuleId,
    pub dst: ModuleId,
    /// Planning-cycle correlation id; 0 outside a planning cycle.
    pub corr: u64,
    pub payload: Payload,
}

impl TypedMessage {
    pub fn new(t_stamp: f64, src: ModuleId, dst: ModuleId, corr: u64, payload: Payload) -> Self {
        Self {
            t_stamp,
            src,
            dst,
            corr,
            payload,
        }
    }

    pub fn msg_type(&self) -> MsgType {
        self.payload.msg_type()
    }

    pub fn telemetry(&self) -> Option<&Telemetry> {
        match &self.payload {
            Payload::StateData(StateData::Telemetry(t)) => Some(t),
            _ => None,
        }
    }

    pub fn state_message(&self) -> Option<&StateMessage> {
        match &self.payload {
            Payload::StateData(StateData::Agent(s)) => Some(s),
            _ => None,
        }
    }

    pub fn command(&self) -> Option<&ControlCommand> {
        match &self.payload {
            Payload::ControlCommand(c) => Some(c),
            _ => None,
        }
    }
}
