//! Physical verification of a proposed strategy before anything reaches the
//! actuators. Three checks, always all three:
//!
//! * boundary: every waypoint, every arc sample and every straight-segment
//!   sample keeps at least `d_safe` clearance from the area's edges;
//! * speed: the speed is inside the envelope and the radius can carry it
//!   within the lateral-acceleration limit;
//! * radius: the radius clears the minimum turning radius for the current
//!   rudder health.

use crate::dynamics::{deflection_for_radius, min_turn_radius};
use crate::geometry::{ConvexPolygon, FilletError, FilletPath, PathElement, Vec2};
use crate::reasoner::StrategyTheta;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NavigableArea {
    pub polygon: ConvexPolygon,
    pub d_safe: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverLimits {
    pub u_min: f64,
    pub u_max: f64,
    pub a_max: f64,
    pub length: f64,
    pub delta_max: f64,
    pub delta_max_eff: f64,
    /// Arc sampling step, rad.
    pub dtheta: f64,
}

impl SolverLimits {
    /// Limits whose degraded deflection gives the requested fault radius.
    pub fn with_fault_radius(
        u_min: f64,
        u_max: f64,
        a_max: f64,
        length: f64,
        delta_max: f64,
        r_min_fault: f64,
    ) -> Self {
        Self {
            u_min,
            u_max,
            a_max,
            length,
            delta_max,
            delta_max_eff: deflection_for_radius(length, r_min_fault),
            dtheta: 1f64.to_radians(),
        }
    }

    pub fn r_min_nom(&self) -> f64 {
        min_turn_radius(self.length, self.delta_max)
    }

    pub fn r_min_fault(&self) -> f64 {
        min_turn_radius(self.length, self.delta_max_eff)
    }

    /// Highest speed the degraded rudder can hold on its tightest turn.
    pub fn u_max_fault(&self) -> f64 {
        (self.a_max * self.r_min_fault()).sqrt()
    }

    /// Radius a strategy must clear for the given health and speed.
    pub fn required_radius(&self, rudder_ok: bool, u: f64) -> f64 {
        let geometric = if rudder_ok {
            self.r_min_nom()
        } else {
            self.r_min_fault()
        };
        geometric.max(u * u / self.a_max)
    }

    pub fn validate(&self) -> Result<(), String> {
        let pos = [
            ("u_min", self.u_min),
            ("a_max", self.a_max),
            ("length", self.length),
            ("delta_max_eff", self.delta_max_eff),
            ("dtheta", self.dtheta),
        ];
        for (n, v) in pos {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("limits.{n} must be positive, got {v}"));
            }
        }
        if self.u_min.partial_cmp(&self.u_max) != Some(std::cmp::Ordering::Less) {
            return Err(format!(
                "limits need u_min < u_max, got {} and {}",
                self.u_min, self.u_max
            ));
        }
        if !(self.delta_max_eff <= self.delta_max && self.delta_max < std::f64::consts::FRAC_PI_2) {
            return Err("limits need 0 < delta_max_eff <= delta_max < 90°".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Violation {
    Boundary,
    Speed,
    Radius,
    /// The strategy could not be read at all.
    Schema,
}

impl Violation {
    pub fn label(self) -> &'static str {
        match self {
            Violation::Boundary => "boundary",
            Violation::Speed => "speed",
            Violation::Radius => "radius",
            Violation::Schema => "schema",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        [Self::Boundary, Self::Speed, Self::Radius, Self::Schema]
            .into_iter()
            .find(|v| v.label() == s)
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Diagnostic {
    pub label: Violation,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverVerdict {
    pub passed: bool,
    pub violations: BTreeSet<Violation>,
    pub checks_passed: u8,
    pub details: Vec<Diagnostic>,
}

impl SolverVerdict {
    /// Verdict for a strategy that never parsed.
    pub fn schema_failure(message: impl Into<String>) -> Self {
        Self {
            passed: false,
            violations: BTreeSet::from([Violation::Schema]),
            checks_passed: 0,
            details: vec![Diagnostic {
                label: Violation::Schema,
                message: message.into(),
            }],
        }
    }
}

/// Combine the three check outcomes into a verdict.
pub fn combine(boundary: CheckResult, speed: CheckResult, radius: CheckResult) -> SolverVerdict {
    let mut violations = BTreeSet::new();
    let mut details = Vec::new();
    let mut checks_passed = 0;
    for (label, r) in [
        (Violation::Boundary, boundary),
        (Violation::Speed, speed),
        (Violation::Radius, radius),
    ] {
        if r.ok {
            checks_passed += 1;
        } else {
            violations.insert(label);
        }
        details.extend(r.notes.into_iter().map(|message| Diagnostic { label, message }));
    }
    SolverVerdict {
        passed: violations.is_empty(),
        violations,
        checks_passed,
        details,
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CheckResult {
    pub ok: bool,
    pub notes: Vec<String>,
}

impl CheckResult {
    fn pass() -> Self {
        Self {
            ok: true,
            notes: vec![],
        }
    }

    fn fail(note: String) -> Self {
        Self {
            ok: false,
            notes: vec![note],
        }
    }
}

/// Clearance from the nearest edge, and whether the point is inside.
/// Points outside the area report zero clearance.
pub fn boundary_distance(p: Vec2, area: &NavigableArea) -> (f64, bool) {
    if area.polygon.contains(p) {
        (area.polygon.edge_distance(p), true)
    } else {
        (0.0, false)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryReport {
    pub ok: bool,
    pub min_clearance: f64,
    pub samples: usize,
    pub notes: Vec<String>,
}

/// Sample points of the path: waypoints, arcs every `dtheta`, straight
/// segments every `d_safe / 2` plus both ends.
pub fn path_samples(waypoints: &[Vec2], path: &FilletPath, d_safe: f64, dtheta: f64) -> Vec<Vec2> {
    let mut pts: Vec<Vec2> = waypoints.to_vec();
    let step = d_safe / 2.0;
    for e in &path.elements {
        match e {
            PathElement::Line { a, b, .. } => {
                let n = (a.dist(*b) / step).ceil().max(1.0) as usize;
                pts.extend((0..=n).map(|i| a.lerp(*b, i as f64 / n as f64)));
            }
            PathElement::Arc { arc, .. } => {
                pts.extend(arc.sample_angles(dtheta).into_iter().map(|th| arc.point_at(th)));
            }
        }
    }
    pts
}

pub fn check_boundary(waypoints: &[Vec2], radius: f64, area: &NavigableArea, dtheta: f64) -> BoundaryReport {
    let mut notes = Vec::new();
    let path = match FilletPath::build(waypoints, |_| radius) {
        Ok(p) => p,
        Err(e) => {
            return BoundaryReport {
                ok: false,
                min_clearance: 0.0,
                samples: 0,
                notes: vec![format!("path geometry: {e}")],
            }
        }
    };
    let mut ok = true;
    for (corner, arc) in path.arcs() {
        if !area.polygon.contains(arc.center) {
            ok = false;
            notes.push(format!("arc at waypoint {corner} has its center outside the area"));
        }
    }
    let samples = path_samples(waypoints, &path, area.d_safe, dtheta);
    let mut min_clearance = f64::INFINITY;
    let mut offending = 0usize;
    let mut worst: Option<(Vec2, f64, bool)> = None;
    for p in &samples {
        let (d, inside) = boundary_distance(*p, area);
        if d < min_clearance {
            min_clearance = d;
        }
        if d < area.d_safe {
            offending += 1;
            if worst.is_none_or(|(_, wd, _)| d < wd) {
                worst = Some((*p, d, inside));
            }
        }
    }
    if let Some((p, d, inside)) = worst {
        ok = false;
        let where_ = if inside { "" } else { " (outside the area)" };
        notes.push(format!(
            "{offending} of {} samples closer than {} m; worst ({:.2}, {:.2}) at {d:.3} m{where_}",
            samples.len(),
            area.d_safe,
            p.x,
            p.y
        ));
    }
    BoundaryReport {
        ok,
        min_clearance,
        samples: samples.len(),
        notes,
    }
}

pub fn check_speed(u_new: f64, r_new: f64, limits: &SolverLimits) -> CheckResult {
    if !(limits.u_min <= u_new && u_new <= limits.u_max) {
        return CheckResult::fail(format!(
            "speed {u_new:.4} m/s outside [{:.4}, {:.4}] m/s",
            limits.u_min, limits.u_max
        ));
    }
    let r_speed = u_new * u_new / limits.a_max;
    if r_new < r_speed {
        return CheckResult::fail(format!(
            "radius {r_new:.3} m below {r_speed:.3} m needed to turn at {u_new:.4} m/s"
        ));
    }
    CheckResult::pass()
}

pub fn check_fault_radius(r_new: f64, rudder_ok: bool, limits: &SolverLimits, u_new: f64) -> CheckResult {
    let req = limits.required_radius(rudder_ok, u_new);
    if r_new >= req {
        CheckResult::pass()
    } else {
        let state = if rudder_ok { "nominal" } else { "degraded" };
        CheckResult::fail(format!(
            "radius {r_new:.3} m below {req:.3} m required with {state} rudder"
        ))
    }
}

fn malformed(theta: &StrategyTheta) -> Option<String> {
    if theta.waypoints.is_empty() {
        return Some("no waypoints".into());
    }
    let nums = [theta.radius, theta.speed, theta.return_heading];
    if !nums.iter().all(|v| v.is_finite()) {
        return Some("non-finite radius, speed or return heading".into());
    }
    if !theta
        .waypoints
        .iter()
        .all(|w| w.pos().is_finite() && w.depth.is_none_or(f64::is_finite))
    {
        return Some("non-finite waypoint".into());
    }
    if theta.waypoints.len() < 2 {
        return Some("a route needs at least 2 waypoints".into());
    }
    if let Err(e @ (FilletError::Coincident(..) | FilletError::Reversal(_))) =
        FilletPath::build(&theta.positions(), |_| theta.radius.max(f64::MIN_POSITIVE))
    {
        return Some(format!("route shape: {e}"));
    }
    None
}

/// Run all three checks on a strategy.
pub fn verify(theta: &StrategyTheta, area: &NavigableArea, limits: &SolverLimits, rudder_ok: bool) -> SolverVerdict {
    if let Some(why) = malformed(theta) {
        return SolverVerdict::schema_failure(why);
    }
    let b = check_boundary(&theta.positions(), theta.radius, area, limits.dtheta);
    let boundary = CheckResult {
        ok: b.ok,
        notes: b.notes,
    };
    combine(
        boundary,
        check_speed(theta.speed, theta.radius, limits),
        check_fault_radius(theta.radius, rudder_ok, limits, theta.speed),
    )
}
