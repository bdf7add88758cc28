//! Strategy generation. Every reasoner, scripted or remote, produces raw
//! text in one key-value format; the symbolic parser turns that text into a
//! [`StrategyTheta`] and the solver decides whether it may fly.

pub mod endpoint;
pub mod memory;
pub mod parse;
pub mod prompt;
pub mod scripted;

use crate::dynamics::VehicleState;
use crate::geometry::Vec2;
use crate::guidance::Waypoint;
use crate::perception::ContextPackage;
use crate::solver::Violation;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

pub use endpoint::EndpointReasoner;
pub use memory::{MemoryContext, MemoryStores};
pub use parse::{parse_symbolic, serialize, ParseError, ParseLimits, Parsed};
pub use prompt::{build_prompt, PromptContext, TaskSpec};
pub use scripted::{PlanSpec, RecoverySpec, ScriptedPlanner};

/// A candidate replanning strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyTheta {
    /// Turn radius at every corner, m.
    pub radius: f64,
    /// Route speed, m/s.
    pub speed: f64,
    /// Route corners, the first usually being the vehicle's position.
    pub waypoints: Vec<Waypoint>,
    /// Desired heading on arrival at the last waypoint, rad.
    pub return_heading: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extra_actions: Vec<OutOfSchemaAction>,
}

impl StrategyTheta {
    pub fn positions(&self) -> Vec<Vec2> {
        self.waypoints.iter().map(Waypoint::pos).collect()
    }

    pub fn rudder_bias(&self) -> Option<f64> {
        self.extra_actions.iter().find_map(|a| match a {
            OutOfSchemaAction::RudderBias { bias } => Some(*bias),
            _ => None,
        })
    }

    pub fn covariance_scale(&self) -> Option<(f64, f64, f64)> {
        self.extra_actions.iter().find_map(|a| match a {
            OutOfSchemaAction::KfCovarianceScale { q_vel, r_gps, r_dvl } => Some((*q_vel, *r_gps, *r_dvl)),
            _ => None,
        })
    }
}

/// Corrections that live outside the geometric strategy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum OutOfSchemaAction {
    /// Constant rudder trim, rad.
    RudderBias { bias: f64 },
    /// Factors on the filter's (process, GPS, DVL) covariances.
    KfCovarianceScale { q_vel: f64, r_gps: f64, r_dvl: f64 },
}

/// Default upper bound on a covariance factor.
pub const SCALE_MAX: f64 = 100.0;

/// Bound check for an out-of-schema action. Rejection is a value.
pub fn admit_extra_action(action: &OutOfSchemaAction, delta_max: f64, scale_max: f64) -> bool {
    match *action {
        OutOfSchemaAction::RudderBias { bias } => bias.is_finite() && bias.abs() <= delta_max,
        OutOfSchemaAction::KfCovarianceScale { q_vel, r_gps, r_dvl } => {
            [q_vel, r_gps, r_dvl].iter().all(|f| *f > 0.0 && *f <= scale_max)
        }
    }
}

/// Which scripted strategy table applies, and the key for long-term memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Nominal,
    LowerRudder,
    SteeringLock,
    Surface,
    CrossCurrent,
    Dvl,
}

impl ScenarioKind {
    pub fn label(self) -> &'static str {
        match self {
            Self::Nominal => "nominal",
            Self::LowerRudder => "lower_rudder",
            Self::SteeringLock => "steering_lock",
            Self::Surface => "surface",
            Self::CrossCurrent => "cross_current",
            Self::Dvl => "dvl",
        }
    }
}

/// Why a planning call is happening.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "stage", rename_all = "snake_case")]
pub enum PlanningStage {
    /// Mission start: no reference plan yet.
    Initial { state: VehicleState },
    /// A confirmed fault, or a retry of one.
    Recovery { context: ContextPackage },
}

impl PlanningStage {
    pub fn state(&self) -> &VehicleState {
        match self {
            Self::Initial { state } => state,
            Self::Recovery { context } => &context.est_state,
        }
    }
}

/// Everything a reasoner sees for one call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasonerRequest {
    pub prompt: PromptContext,
    pub stage: PlanningStage,
    /// The proposal that failed verification, on a retry.
    pub previous: Option<StrategyTheta>,
    /// Rudder health the solver will assume.
    pub rudder_ok: bool,
}

impl ReasonerRequest {
    pub fn retry_index(&self) -> u32 {
        self.prompt.retry_index
    }

    pub fn violations(&self) -> &BTreeSet<Violation> {
        &self.prompt.violation_labels
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReasonerError {
    #[error("reasoner call timed out after {0:.2} s")]
    Timeout(f64),
    #[error("reasoner transport failure: {0}")]
    Transport(String),
    #[error("malformed reasoner response: {0}")]
    Malformed(String),
    #[error("reasoner configuration error: {0}")]
    Config(String),
}

impl ReasonerError {
    /// Retryable failures count against the regeneration budget; the rest
    /// abort the run.
    pub fn is_retryable(&self) -> bool {
        !matches!(self, Self::Config(_))
    }
}

/// A strategy generator. Implementations return raw text in the key-value
/// format understood by [`parse_symbolic`].
pub trait Reasoner: Send {
    fn generate(&mut self, request: &ReasonerRequest) -> Result<String, ReasonerError>;

    fn name(&self) -> &str;

    /// Raw request/response bodies recorded since the last call.
    fn take_exchanges(&mut self) -> Vec<endpoint::Exchange> {
        Vec::new()
    }
}
