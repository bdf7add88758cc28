//! Prompt engine: four fixed sections rendered deterministically.

use super::memory::MemoryContext;
use super::parse::serialize;
use super::{PlanningStage, ScenarioKind};
use crate::solver::{NavigableArea, SolverLimits, Violation};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt::Write as _;

/// Mission-level facts that do not change between calls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub scenario: ScenarioKind,
    pub area: NavigableArea,
    pub limits: SolverLimits,
    /// Free-text goal, e.g. "reach (0, 90)".
    pub goal: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptContext {
    pub role_section: String,
    pub state_section: String,
    pub task_constraints_section: String,
    pub abnormality_section: String,
    pub violation_labels: BTreeSet<Violation>,
    pub retry_index: u32,
}

impl PromptContext {
    pub fn text(&self) -> String {
        format!(
            "## Role\n{}\n## State\n{}\n## Task and constraints\n{}\n## Abnormality\n{}",
            self.role_section, self.state_section, self.task_constraints_section, self.abnormality_section
        )
    }
}

const ROLE: &str = "You plan routes for a small unmanned underwater vehicle. \
Propose one strategy that the physical solver will accept. \
Answer only with the fields listed under Output format.";

pub const FIRST_ABNORMALITY: &str = "detected navigation deviation";

fn guidance_for(v: Violation) -> &'static str {
    match v {
        Violation::Boundary => "keep every waypoint and every arc at least d_safe inside the area",
        Violation::Speed => "keep speed inside [u_min, u_max] and speed^2 / radius within a_max",
        Violation::Radius => "raise the turn radius above the minimum for the current rudder health",
        Violation::Schema => "emit every mandatory field with finite numbers and at least 2 distinct waypoints",
    }
}

fn state_section(stage: &PlanningStage, rudder_ok: bool, memory: &MemoryContext) -> String {
    let s = stage.state();
    let mut out = String::new();
    let _ = writeln!(
        out,
        "position: ({:.2}, {:.2}) m, heading: {:.4} rad, speed: {:.3} m/s, depth: {:.2} m",
        s.x, s.y, s.psi, s.u, s.d
    );
    let _ = writeln!(
        out,
        "rudder health assumed by the solver: {}",
        if rudder_ok { "ok" } else { "degraded" }
    );
    match stage {
        PlanningStage::Initial { .. } => {
            let _ = writeln!(out, "phase: mission start, no reference route yet");
        }
        PlanningStage::Recovery { context } => {
            let plan = &context.ref_plan;
            let active = plan.active();
            let last = plan.final_waypoint();
            let _ = writeln!(
                out,
                "reference route: {} points, active ({:.2}, {:.2}), final ({:.2}, {:.2})",
                plan.waypoints.len(),
                active.x,
                active.y,
                last.x,
                last.y
            );
            let causes: Vec<&str> = context
                .violation_labels
                .iter()
                .map(|c| match c {
                    crate::perception::Cause::CrossTrack => "cross_track",
                    crate::perception::Cause::Heading => "heading",
                    crate::perception::Cause::Rudder => "rudder",
                })
                .collect();
            let _ = writeln!(out, "flag causes: {}", causes.join(", "));
        }
    }
    if !memory.is_empty() {
        let _ = writeln!(out, "history:");
        for (_, theta) in &memory.short_term {
            let _ = writeln!(
                out,
                "- earlier proposal: {}",
                serialize(theta).trim_end().replace('\n', ", ")
            );
        }
        for rec in &memory.long_term {
            let _ = writeln!(out, "- recorded recovery: {}", rec.summary);
        }
    }
    out
}

fn task_section(task: &TaskSpec) -> String {
    let l = &task.limits;
    let mut out = String::new();
    let _ = writeln!(out, "goal: {}", task.goal);
    let verts: Vec<String> = task
        .area
        .polygon
        .vertices()
        .iter()
        .map(|v| format!("({:.2}, {:.2})", v.x, v.y))
        .collect();
    let _ = writeln!(
        out,
        "area polygon: {}; d_safe: {:.2} m",
        verts.join(", "),
        task.area.d_safe
    );
    let _ = writeln!(
        out,
        "speed range: [{:.3}, {:.3}] m/s; a_max: {:.3} m/s^2",
        l.u_min, l.u_max, l.a_max
    );
    let _ = writeln!(
        out,
        "minimum turn radius: {:.3} m nominal, {:.3} m degraded",
        l.r_min_nom(),
        l.r_min_fault()
    );
    let _ = writeln!(out, "rudder limit: {:.4} rad", l.delta_max);
    let _ = writeln!(out, "Output format, one field per line:");
    let _ = writeln!(out, "radius: <m>");
    let _ = writeln!(out, "speed: <m/s or kn>");
    let _ = writeln!(out, "waypoints: (x, y[, depth]); (x, y[, depth]); ...");
    let _ = writeln!(out, "return_heading: <rad or deg>");
    let _ = writeln!(
        out,
        "extra: rudder_bias(<angle>); kf_scale(<q>, <gps>, <dvl>)   (optional)"
    );
    out
}

/// Render the four prompt sections. Identical inputs give identical text.
pub fn build_prompt(
    stage: &PlanningStage,
    task: &TaskSpec,
    memory: &MemoryContext,
    violations: &BTreeSet<Violation>,
    retry_index: u32,
    rudder_ok: bool,
) -> PromptContext {
    let abnormality_section = match stage {
        PlanningStage::Initial { .. } => String::new(),
        PlanningStage::Recovery { .. } if violations.is_empty() => FIRST_ABNORMALITY.to_string(),
        PlanningStage::Recovery { .. } => {
            let mut out = format!("retry {retry_index}: the previous strategy failed verification\n");
            for v in violations {
                let _ = writeln!(out, "violated: {} ({})", v.label(), guidance_for(*v));
            }
            out
        }
    };
    PromptContext {
        role_section: ROLE.to_string(),
        state_section: state_section(stage, rudder_ok, memory),
        task_constraints_section: task_section(task),
        abnormality_section,
        violation_labels: violations.clone(),
        retry_index,
    }
}
