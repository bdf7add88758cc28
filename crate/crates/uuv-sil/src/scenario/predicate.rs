//! Per-scenario pass conditions, evaluated on run metrics. The CLI exits 0
//! only when every check of the scenario's kind holds.

use super::config::ScenarioConfig;
use super::metrics::RunMetrics;
use crate::reasoner::ScenarioKind;

/// Time the cross-current scenario is expected to trip, s.
pub const CROSS_CURRENT_TRIGGER_S: f64 = 33.3;

/// Largest cross-track error a nominal run may show, m.
pub const NOMINAL_E_P_MAX: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: impl Into<String>) -> Check {
    Check {
        name,
        passed,
        detail: detail.into(),
    }
}

pub fn checks(cfg: &ScenarioConfig, m: &RunMetrics) -> Vec<Check> {
    let complete = check(
        "mission_completed",
        m.mission_completed,
        format!("{:.1} s", m.duration_s),
    );
    let raised = check(
        "fault_raised",
        m.fault_raised,
        format!("detected at {:?}", m.detection_time),
    );
    match cfg.kind {
        ScenarioKind::Nominal => vec![
            check(
                "no_fault",
                !m.fault_raised,
                format!("detected at {:?}", m.detection_time),
            ),
            complete,
            check(
                "e_p_max",
                m.e_p_max < NOMINAL_E_P_MAX,
                format!("{:.2} m (limit {NOMINAL_E_P_MAX})", m.e_p_max),
            ),
        ],
        ScenarioKind::LowerRudder => vec![
            raised,
            check(
                "first_attempt_pass",
                m.first_attempt_pass == Some(true),
                format!("{:?}", m.first_attempt_pass),
            ),
            check(
                "single_invocation",
                m.solver_invocations == 1,
                format!("{} invocations", m.solver_invocations),
            ),
            complete,
        ],
        ScenarioKind::SteeringLock => {
            let unlock = cfg.fault.params.get("unlock_depth").copied().unwrap_or(f64::NAN);
            let step = cfg.fault.params.get("dive_step_max").copied().unwrap_or(f64::NAN);
            vec![
                raised,
                check(
                    "lock_dive",
                    (m.lock_dive - unlock).abs() < 1e-9 && m.lock_dive_step_max <= step + 1e-12,
                    format!("{:.3} m in steps <= {:.3} m", m.lock_dive, m.lock_dive_step_max),
                ),
                check(
                    "heading_frozen",
                    m.lock_heading_change < 1e-12,
                    format!("{:.2e} rad", m.lock_heading_change),
                ),
                check("replanned", m.replanned, ""),
                complete,
            ]
        }
        ScenarioKind::Surface => {
            // measured depth may sit anywhere inside the sensor's bias band
            let band = cfg
                .resolve()
                .map(|r| r.noise.depth_bias_max + 4.0 * (r.noise.depth_white + r.noise.sigma_d))
                .unwrap_or(f64::NAN);
            vec![
                raised,
                check(
                    "no_dive",
                    m.max_truth_depth == 0.0,
                    format!("max truth depth {:.3} m", m.max_truth_depth),
                ),
                check(
                    "depth_in_band",
                    m.max_measured_depth <= band,
                    format!("max measured depth {:.3} m (band {band:.3} m)", m.max_measured_depth),
                ),
                check("replanned", m.replanned, ""),
                complete,
            ]
        }
        ScenarioKind::CrossCurrent => {
            let tol = cfg.timing.report_period;
            let delta_max = cfg.limits.delta_max_deg.to_radians();
            vec![
                check(
                    "trigger_time",
                    m.time_to_trigger
                        .is_some_and(|t| (t - CROSS_CURRENT_TRIGGER_S).abs() <= tol + 1e-9),
                    format!(
                        "{:?} s (expected {CROSS_CURRENT_TRIGGER_S} +/- {tol})",
                        m.time_to_trigger
                    ),
                ),
                raised,
                check(
                    "rudder_bias_applied",
                    m.final_rudder_bias != 0.0,
                    format!("{:.4} rad", m.final_rudder_bias),
                ),
                check(
                    "rudder_bound",
                    m.max_abs_rudder <= delta_max + 1e-12,
                    format!("{:.4} rad", m.max_abs_rudder),
                ),
                complete,
            ]
        }
        ScenarioKind::Dvl => vec![
            raised,
            check(
                "peak_lateral_err",
                m.peak_lateral_err.is_finite(),
                format!("{:.2} m", m.peak_lateral_err),
            ),
            complete,
        ],
    }
}

pub fn passes(cfg: &ScenarioConfig, m: &RunMetrics) -> bool {
    checks(cfg, m).iter().all(|c| c.passed)
}
