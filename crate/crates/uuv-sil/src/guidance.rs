//! Fast-loop execution: line-of-sight heading to the active waypoint, PD
//! rudder with saturation and trim bias, speed setpoint with a fault cap,
//! waypoint switching, and the dispatch / retry / hold decision.

use crate::geometry::{wrap_angle, FilletError, FilletPath, Vec2};
use crate::solver::{SolverLimits, SolverVerdict, Violation};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, VecDeque};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub x: f64,
    pub y: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<f64>,
}

impl Waypoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y, depth: None }
    }

    pub const fn with_depth(x: f64, y: f64, depth: f64) -> Self {
        Self {
            x,
            y,
            depth: Some(depth),
        }
    }

    pub fn pos(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

impl From<Vec2> for Waypoint {
    fn from(p: Vec2) -> Self {
        Self::new(p.x, p.y)
    }
}

/// Tracking waypoints with per-segment radius and speed. Segment `i` runs
/// from waypoint `i` to `i + 1`; `active_index` is the waypoint being
/// steered toward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaypointPlan {
    pub waypoints: Vec<Waypoint>,
    pub radius: Vec<f64>,
    pub speed: Vec<f64>,
    pub r_acc: f64,
    pub active_index: usize,
    #[serde(default)]
    pub completed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Advance {
    Stay,
    Next,
    Completed,
}

impl WaypointPlan {
    /// Round each corner of `corners` with `radius` and sample the result
    /// into tracking waypoints at most `spacing` apart. A corner's depth
    /// carries over to the points of the segment that ends at it.
    pub fn from_corners(
        corners: &[Waypoint],
        radius: f64,
        speed: f64,
        r_acc: f64,
        spacing: f64,
    ) -> Result<Self, FilletError> {
        let pos: Vec<Vec2> = corners.iter().map(Waypoint::pos).collect();
        let path = FilletPath::build(&pos, |_| radius)?;
        let dense = path.densify(spacing);
        let mut waypoints = Vec::with_capacity(dense.len());
        for (i, (p, seg)) in dense.iter().enumerate() {
            let depth = if i == 0 {
                corners[0].depth
            } else {
                corners[seg + 1].depth
            };
            waypoints.push(Waypoint { x: p.x, y: p.y, depth });
        }
        let n = waypoints.len();
        Ok(Self {
            waypoints,
            radius: vec![radius; n - 1],
            speed: vec![speed; n - 1],
            r_acc,
            active_index: 1.min(n - 1),
            completed: false,
        })
    }

    pub fn polyline(&self) -> Vec<Vec2> {
        self.waypoints.iter().map(Waypoint::pos).collect()
    }

    pub fn active(&self) -> &Waypoint {
        &self.waypoints[self.active_index]
    }

    /// Plan speed of the segment leading to the active waypoint.
    pub fn active_speed(&self) -> f64 {
        self.speed[self.active_index.saturating_sub(1).min(self.speed.len() - 1)]
    }

    pub fn final_waypoint(&self) -> &Waypoint {
        self.waypoints.last().expect("plan has waypoints")
    }
}

/// Switch to the next waypoint once inside the acceptance radius.
pub fn advance_waypoint(plan: &mut WaypointPlan, est_pos: Vec2) -> Advance {
    if plan.completed {
        return Advance::Completed;
    }
    if est_pos.dist(plan.active().pos()) >= plan.r_acc {
        return Advance::Stay;
    }
    if plan.active_index + 1 >= plan.waypoints.len() {
        plan.completed = true;
        Advance::Completed
    } else {
        plan.active_index += 1;
        Advance::Next
    }
}

/// Line-of-sight heading, or `None` when the points coincide.
pub fn los_heading(est_pos: Vec2, target: Vec2) -> Option<f64> {
    let d = target - est_pos;
    (d.x != 0.0 || d.y != 0.0).then(|| wrap_angle(d.heading()))
}

pub fn pd_rudder(e_psi: f64, e_psi_dot: f64, kp: f64, kd: f64, delta_max: f64) -> f64 {
    (kp * e_psi + kd * e_psi_dot).clamp(-delta_max, delta_max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gains {
    pub kp: f64,
    pub kd: f64,
}

impl Default for Gains {
    fn default() -> Self {
        Self { kp: 1.2, kd: 0.4 }
    }
}

/// PD heading loop whose derivative is a backward difference of the
/// 3-sample median of the heading error.
#[derive(Debug, Clone)]
pub struct HeadingPd {
    pub gains: Gains,
    pub delta_max: f64,
    pub dt: f64,
    recent: VecDeque<f64>,
    prev_filtered: Option<f64>,
}

impl HeadingPd {
    pub fn new(gains: Gains, delta_max: f64, dt: f64) -> Self {
        Self {
            gains,
            delta_max,
            dt,
            recent: VecDeque::with_capacity(3),
            prev_filtered: None,
        }
    }

    pub fn reset(&mut self) {
        self.recent.clear();
        self.prev_filtered = None;
    }

    fn median(&self) -> f64 {
        let mut v: Vec<f64> = self.recent.iter().copied().collect();
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    }

    /// PD output (clipped) for heading error `e_psi`.
    pub fn step(&mut self, e_psi: f64) -> f64 {
        if self.recent.len() == 3 {
            self.recent.pop_front();
        }
        self.recent.push_back(e_psi);
        let filtered = self.median();
        let rate = match self.prev_filtered {
            Some(p) => wrap_angle(filtered - p) / self.dt,
            None => 0.0,
        };
        self.prev_filtered = Some(filtered);
        pd_rudder(e_psi, rate, self.gains.kp, self.gains.kd, self.delta_max)
    }
}

/// Add the trim bias and clip so the applied deflection stays within
/// ±`delta_max`. Returns the rudder part, bias excluded.
pub fn apply_bias(pd: f64, bias: f64, delta_max: f64) -> f64 {
    let total = (pd + bias).clamp(-delta_max, delta_max);
    let mut cmd = total - bias;
    while (cmd + bias).abs() > delta_max {
        cmd = if cmd + bias > 0.0 {
            cmd.next_down()
        } else {
            cmd.next_up()
        };
    }
    cmd
}

pub fn speed_setpoint(plan_speed: f64, fault_active: bool, limits: &SolverLimits) -> f64 {
    let cap = if fault_active {
        limits.u_max_fault().min(limits.u_max)
    } else {
        limits.u_max
    };
    plan_speed.min(cap)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CommandSource {
    Track,
    Replanned,
    HoldFallback,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlCommand {
    /// Post-clip rudder deflection, bias excluded, rad.
    pub rudder_cmd: f64,
    pub speed_setpoint: f64,
    pub rudder_bias: f64,
    pub source: CommandSource,
    /// Target depth of the active waypoint, if the plan sets one.
    pub depth_setpoint: Option<f64>,
    /// Increments each time a new route is dispatched.
    pub plan_id: u32,
}

impl ControlCommand {
    pub fn applied_rudder(&self) -> f64 {
        self.rudder_cmd + self.rudder_bias
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ControlAction {
    Dispatch,
    Retry(BTreeSet<Violation>),
    HoldFallback { heading: f64, speed: f64 },
}

/// Execution decision after a verdict. `retry_count` counts regenerations
/// already spent on this fault.
pub fn decide(
    verdict: &SolverVerdict,
    retry_count: u32,
    n_max: u32,
    est_heading: f64,
    limits: &SolverLimits,
) -> ControlAction {
    if verdict.passed {
        ControlAction::Dispatch
    } else if retry_count < n_max {
        ControlAction::Retry(verdict.violations.clone())
    } else {
        ControlAction::HoldFallback {
            heading: est_heading,
            speed: limits.u_min,
        }
    }
}
