//! Navigation errors and the fault flag with its confirmation window.

use crate::dynamics::VehicleState;
use crate::geometry::{nearest_on_polyline, Vec2};
use crate::guidance::WaypointPlan;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, VecDeque};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NavErrors {
    pub e_p: f64,
    pub e_psi: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerceptionError {
    #[error("reference polyline needs at least 2 waypoints, got {0}")]
    TooFewWaypoints(usize),
}

/// Distance to the nearest point of the polyline (ties to the lowest segment).
pub fn cross_track_error(pos: Vec2, polyline: &[Vec2]) -> Result<f64, PerceptionError> {
    nearest_on_polyline(pos, polyline)
        .map(|(_, pr)| pr.dist)
        .ok_or(PerceptionError::TooFewWaypoints(polyline.len()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    pub eps_p: f64,
    #[serde(default = "default_eps_psi")]
    pub eps_psi: f64,
    pub n_w: usize,
}

fn default_eps_psi() -> f64 {
    0.35
}

impl Thresholds {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.eps_p > 0.0 && self.eps_psi > 0.0) {
            return Err(format!(
                "thresholds must be positive, got eps_p={} eps_psi={}",
                self.eps_p, self.eps_psi
            ));
        }
        if self.n_w == 0 {
            return Err("n_w must be at least 1".into());
        }
        Ok(())
    }
}

/// Why the raw flag is up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cause {
    CrossTrack,
    Heading,
    Rudder,
}

pub fn fault_causes(errors: NavErrors, rudder_ok_m: bool, eps_p: f64, eps_psi: f64) -> BTreeSet<Cause> {
    let mut c = BTreeSet::new();
    if errors.e_p > eps_p {
        c.insert(Cause::CrossTrack);
    }
    if errors.e_psi.abs() > eps_psi {
        c.insert(Cause::Heading);
    }
    if !rudder_ok_m {
        c.insert(Cause::Rudder);
    }
    c
}

pub fn raw_fault_flag(errors: NavErrors, rudder_ok_m: bool, eps_p: f64, eps_psi: f64) -> bool {
    !fault_causes(errors, rudder_ok_m, eps_p, eps_psi).is_empty()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaultWindow {
    flags: VecDeque<bool>,
    n_w: usize,
}

impl FaultWindow {
    pub fn new(n_w: usize) -> Self {
        Self {
            flags: VecDeque::with_capacity(n_w),
            n_w: n_w.max(1),
        }
    }

    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }

    pub fn clear(&mut self) {
        self.flags.clear();
    }
}

/// Push a raw flag; confirmed only when the window is full and all set.
pub fn confirm_flag(window: &mut FaultWindow, alpha: bool) -> bool {
    if window.flags.len() == window.n_w {
        window.flags.pop_front();
    }
    window.flags.push_back(alpha);
    window.flags.len() == window.n_w && window.flags.iter().all(|f| *f)
}

/// What the agent hands the reasoner when a fault is confirmed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextPackage {
    pub est_state: VehicleState,
    pub ref_plan: WaypointPlan,
    pub history: Vec<String>,
    pub confirmed_flag: bool,
    pub violation_labels: BTreeSet<Cause>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlagUpdate {
    pub raw: bool,
    pub confirmed: bool,
    /// True only on the cycle the confirmed flag goes up.
    pub rising: bool,
}

/// Confirmation window plus the latch that holds the confirmed flag until
/// a replanned route is accepted or the hold fallback engages.
#[derive(Debug, Clone)]
pub struct FaultMonitor {
    pub thresholds: Thresholds,
    window: FaultWindow,
    latched: bool,
    /// Causes seen on the cycles that filled the window.
    causes: BTreeSet<Cause>,
}

impl FaultMonitor {
    pub fn new(thresholds: Thresholds) -> Self {
        Self {
            thresholds,
            window: FaultWindow::new(thresholds.n_w),
            latched: false,
            causes: BTreeSet::new(),
        }
    }

    pub fn update(&mut self, errors: NavErrors, rudder_ok_m: bool) -> FlagUpdate {
        let c = fault_causes(errors, rudder_ok_m, self.thresholds.eps_p, self.thresholds.eps_psi);
        let raw = !c.is_empty();
        if raw {
            self.causes.extend(c);
        } else if !self.latched {
            self.causes.clear();
        }
        let confirmed_now = confirm_flag(&mut self.window, raw);
        let rising = confirmed_now && !self.latched;
        if confirmed_now {
            self.latched = true;
        }
        FlagUpdate {
            raw,
            confirmed: self.latched,
            rising,
        }
    }

    pub fn confirmed(&self) -> bool {
        self.latched
    }

    pub fn causes(&self) -> &BTreeSet<Cause> {
        &self.causes
    }

    /// Drop the latch and restart the window from empty.
    pub fn release(&mut self) {
        self.latched = false;
        self.window.clear();
        self.causes.clear();
    }
}
