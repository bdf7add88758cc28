//! Run metrics, computed from the transcript alone.

use crate::bus::{decode, DecodeError, Payload, StateMessage, Telemetry, TypedMessage};
use crate::geometry::{wrap_angle, Vec2};
use crate::guidance::CommandSource;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    /// Sim time of the last message, s.
    pub duration_s: f64,
    /// Largest cross-track error perception reported, m.
    pub e_p_max: f64,
    pub fault_raised: bool,
    /// First report with the confirmed flag up, s.
    pub detection_time: Option<f64>,
    /// First report with the raw flag up, s.
    pub time_to_trigger: Option<f64>,
    /// Verifications run in response to a fault, retries included.
    pub solver_invocations: u32,
    pub first_attempt_pass: Option<bool>,
    pub planning_requests: u32,
    pub hold_fallback: bool,
    pub mission_completed: bool,
    /// Largest body-lateral gap between perception's estimate and truth, m.
    pub peak_lateral_err: f64,
    /// Largest |rudder + bias| commanded, rad.
    pub max_abs_rudder: f64,
    /// Trim bias of the last command, rad.
    pub final_rudder_bias: f64,
    pub max_truth_depth: f64,
    pub max_measured_depth: f64,
    /// Depth gained over steps that began with the steering locked, m.
    pub lock_dive: f64,
    /// Largest depth change over one such step, m.
    pub lock_dive_step_max: f64,
    /// Largest heading change over one such step, rad.
    pub lock_heading_change: f64,
    /// Whether any command carried the replanned source.
    pub replanned: bool,
    /// Fingerprint of the vehicle's reports; equal digests mean equal traces.
    pub telemetry_digest: String,
}

/// Decode a transcript file; blank lines and `#` notes are skipped.
pub fn decode_transcript(text: &str) -> Result<Vec<TypedMessage>, DecodeError> {
    text.lines()
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(decode)
        .collect()
}

/// FNV-1a, 64 bit.
fn fnv1a(hash: u64, bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(hash, |h, b| (h ^ *b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;

fn lateral_gap(est: &StateMessage, truth: &Telemetry) -> f64 {
    let t = truth.truth;
    let gap = est.est_state.pos() - Vec2::new(t.x, t.y);
    gap.dot(Vec2::from_heading(t.psi).perp_left()).abs()
}

pub fn compute_metrics(msgs: &[TypedMessage]) -> RunMetrics {
    let mut m = RunMetrics {
        duration_s: 0.0,
        e_p_max: 0.0,
        fault_raised: false,
        detection_time: None,
        time_to_trigger: None,
        solver_invocations: 0,
        first_attempt_pass: None,
        planning_requests: 0,
        hold_fallback: false,
        mission_completed: false,
        peak_lateral_err: 0.0,
        max_abs_rudder: 0.0,
        final_rudder_bias: 0.0,
        max_truth_depth: 0.0,
        max_measured_depth: 0.0,
        lock_dive: 0.0,
        lock_dive_step_max: 0.0,
        lock_heading_change: 0.0,
        replanned: false,
        telemetry_digest: String::new(),
    };
    let mut digest = FNV_OFFSET;
    let mut last_tel: Option<Telemetry> = None;
    for msg in msgs {
        m.duration_s = m.duration_s.max(msg.t_stamp);
        match &msg.payload {
            Payload::StateData(crate::bus::StateData::Telemetry(tel)) => {
                let bytes = serde_json::to_vec(tel).expect("telemetry serializes");
                digest = fnv1a(digest, &bytes);
                m.max_truth_depth = m.max_truth_depth.max(tel.truth.d);
                m.max_measured_depth = m.max_measured_depth.max(tel.measurement.d_m);
                if let Some(prev) = last_tel.filter(|p| p.steering_locked) {
                    let dd = tel.truth.d - prev.truth.d;
                    m.lock_dive += dd;
                    m.lock_dive_step_max = m.lock_dive_step_max.max(dd);
                    m.lock_heading_change = m
                        .lock_heading_change
                        .max(wrap_angle(tel.truth.psi - prev.truth.psi).abs());
                }
                last_tel = Some(*tel);
            }
            Payload::StateData(crate::bus::StateData::Agent(s)) => {
                m.e_p_max = m.e_p_max.max(s.e_p);
                if s.raw_flag && m.time_to_trigger.is_none() {
                    m.time_to_trigger = Some(s.t);
                }
                if s.confirmed && !m.fault_raised {
                    m.fault_raised = true;
                    m.detection_time = Some(s.t);
                }
                m.mission_completed = s.mission_complete;
                if let Some(tel) = &last_tel {
                    m.peak_lateral_err = m.peak_lateral_err.max(lateral_gap(s, tel));
                }
            }
            Payload::PlanningRequest(_) => m.planning_requests += 1,
            Payload::VerificationResult(v) if v.fault_triggered => {
                m.solver_invocations += 1;
                if m.first_attempt_pass.is_none() {
                    m.first_attempt_pass = Some(v.verdict.passed);
                }
            }
            Payload::ControlCommand(c) => {
                m.max_abs_rudder = m.max_abs_rudder.max(c.applied_rudder().abs());
                m.final_rudder_bias = c.rudder_bias;
                m.hold_fallback |= c.source == CommandSource::HoldFallback;
                m.replanned |= c.source == CommandSource::Replanned;
            }
            _ => {}
        }
    }
    m.telemetry_digest = format!("{digest:016x}");
    m
}
