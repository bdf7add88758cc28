//! Deterministic stand-in for a language model: a strategy table per
//! scenario, plus fixed repair rules on retry.

use super::parse::serialize;
use super::{OutOfSchemaAction, PlanningStage, Reasoner, ReasonerError, ReasonerRequest, ScenarioKind, StrategyTheta};
use crate::geometry::{wrap_angle, Vec2};
use crate::guidance::Waypoint;
use crate::solver::{NavigableArea, SolverLimits, Violation};
use crate::units::Speed;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Radius growth per radius violation.
pub const INFLATE: f64 = 1.25;
/// Waypoint pull toward the area centroid per boundary violation.
pub const SHRINK: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSpec {
    pub corners: Vec<Waypoint>,
    pub radius: f64,
    pub speed: Speed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum RecoverySpec {
    /// Leave the current heading with a right-angle turn toward the target
    /// side, then head for the target.
    Turnaround {
        radius: f64,
        speed: Speed,
        target: Waypoint,
        #[serde(default)]
        forward_offset: f64,
        #[serde(default)]
        dive_depth: Option<f64>,
        #[serde(default = "default_margin")]
        margin: f64,
    },
    /// Straight line from the vehicle to the target, optionally trimmed.
    StraightTo {
        target: Waypoint,
        radius: f64,
        speed: Speed,
        #[serde(default)]
        rudder_bias: Option<f64>,
    },
    /// Keep the initial route, optionally retuning the filter.
    KeepRoute {
        #[serde(default)]
        covariance_scale: Option<[f64; 3]>,
    },
}

fn default_margin() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedPlanner {
    pub kind: ScenarioKind,
    pub initial: PlanSpec,
    pub recovery: Option<RecoverySpec>,
    pub limits: SolverLimits,
    pub area: NavigableArea,
}

fn final_heading(wps: &[Waypoint]) -> f64 {
    match wps {
        [.., a, b] => wrap_angle((b.pos() - a.pos()).heading()),
        _ => 0.0,
    }
}

/// Corners p, c1, c2, target: straight on from `p` to `c1`, a right-angle
/// turn toward the target side to `c2`, then on to the target. The side
/// leg grows until both corner arcs fit with `margin` to spare. A target
/// within 45° of dead ahead, or one no such route fits, gets a direct leg.
pub fn turnaround_corners(p: Vec2, psi: f64, target: Vec2, radius: f64, offset: f64, margin: f64) -> Vec<Vec2> {
    let h = Vec2::from_heading(psi);
    let to_t = target - p;
    if h.dot(to_t) >= h.cross(to_t).abs() {
        return vec![p, target];
    }
    let side = if h.cross(target - p) >= 0.0 {
        h.perp_left()
    } else {
        -h.perp_left()
    };
    // a right-angle corner needs a tangent length of exactly one radius
    let c1 = p + h * (offset + radius);
    let mut b = 2.0 * radius + margin;
    for _ in 0..200 {
        let c2 = c1 + side * b;
        let out = target - c2;
        let turn = side.cross(out).atan2(side.dot(out)).abs();
        let t2 = radius * (turn / 2.0).tan();
        if turn < PI - 1e-3 && radius + t2 + margin <= b && t2 + margin <= out.norm() {
            return vec![p, c1, c2, target];
        }
        b += 0.5 * radius;
    }
    vec![p, target]
}

impl ScriptedPlanner {
    fn base(&self, stage: &PlanningStage, radius: Option<f64>) -> Result<StrategyTheta, ReasonerError> {
        let state = stage.state();
        let recovery = match stage {
            PlanningStage::Initial { .. } => {
                let wps = self.initial.corners.clone();
                return Ok(StrategyTheta {
                    radius: radius.unwrap_or(self.initial.radius),
                    speed: self.initial.speed.0,
                    return_heading: final_heading(&wps),
                    waypoints: wps,
                    extra_actions: vec![],
                });
            }
            PlanningStage::Recovery { .. } => self.recovery.as_ref().ok_or_else(|| {
                ReasonerError::Config(format!("no scripted recovery for scenario {}", self.kind.label()))
            })?,
        };
        let here = Waypoint::new(state.x, state.y);
        Ok(match recovery {
            RecoverySpec::Turnaround {
                radius: r0,
                speed,
                target,
                forward_offset,
                dive_depth,
                margin,
            } => {
                let r = radius.unwrap_or(*r0);
                let corners = turnaround_corners(here.pos(), state.psi, target.pos(), r, *forward_offset, *margin);
                let n = corners.len();
                let wps: Vec<Waypoint> = corners
                    .into_iter()
                    .enumerate()
                    .map(|(i, c)| Waypoint {
                        depth: match i {
                            0 => None,
                            1 if n == 4 => *dive_depth,
                            i if i == n - 1 => target.depth,
                            _ => None,
                        },
                        ..Waypoint::from(c)
                    })
                    .collect();
                StrategyTheta {
                    radius: r,
                    speed: speed.0,
                    return_heading: final_heading(&wps),
                    waypoints: wps,
                    extra_actions: vec![],
                }
            }
            RecoverySpec::StraightTo {
                target,
                radius: r0,
                speed,
                rudder_bias,
            } => {
                let wps = vec![here, *target];
                StrategyTheta {
                    radius: radius.unwrap_or(*r0),
                    speed: speed.0,
                    return_heading: final_heading(&wps),
                    waypoints: wps,
                    extra_actions: rudder_bias
                        .map(|b| OutOfSchemaAction::RudderBias { bias: b })
                        .into_iter()
                        .collect(),
                }
            }
            RecoverySpec::KeepRoute { covariance_scale } => {
                let wps = self.initial.corners.clone();
                StrategyTheta {
                    radius: radius.unwrap_or(self.initial.radius),
                    speed: self.initial.speed.0,
                    return_heading: final_heading(&wps),
                    waypoints: wps,
                    extra_actions: covariance_scale
                        .map(|[q, g, d]| OutOfSchemaAction::KfCovarianceScale {
                            q_vel: q,
                            r_gps: g,
                            r_dvl: d,
                        })
                        .into_iter()
                        .collect(),
                }
            }
        })
    }

    /// The strategy for a request; a pure function of the request.
    pub fn strategy(&self, req: &ReasonerRequest) -> Result<StrategyTheta, ReasonerError> {
        let e = req.violations();
        let prev = match &req.previous {
            Some(p) if !e.is_empty() && !e.contains(&Violation::Schema) => p,
            _ => return self.base(&req.stage, None),
        };
        let mut theta = if e.contains(&Violation::Radius) {
            let need = self.limits.required_radius(req.rudder_ok, prev.speed);
            let r = (INFLATE * prev.radius).max(INFLATE * need);
            let mut t = self.base(&req.stage, Some(r))?;
            t.speed = prev.speed;
            t
        } else {
            prev.clone()
        };
        if e.contains(&Violation::Speed) {
            let l = &self.limits;
            let carry = (l.a_max * theta.radius).sqrt();
            theta.speed = theta.speed.min(carry).min(l.u_max).max(l.u_min);
        }
        if e.contains(&Violation::Boundary) {
            let c = self.area.polygon.centroid();
            for w in &mut theta.waypoints {
                let p = c + (w.pos() - c) * SHRINK;
                w.x = p.x;
                w.y = p.y;
            }
            theta.return_heading = final_heading(&theta.waypoints);
        }
        Ok(theta)
    }
}

impl Reasoner for ScriptedPlanner {
    fn generate(&mut self, request: &ReasonerRequest) -> Result<String, ReasonerError> {
        self.strategy(request).map(|t| serialize(&t))
    }

    fn name(&self) -> &str {
        "scripted"
    }
}
