//! Discrete-time 3-DOF kinematic truth model.
//!
//! Yaw rate comes from inverting the turning-circle geometry: a rudder
//! deflection δ gives radius L / (2 sin|δ|), never tighter than the active
//! minimum radius. A removed lower rudder raises that minimum.

use crate::geometry::{wrap_angle, Vec2};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Hull length, m.
pub const HULL_LENGTH: f64 = 1.83;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    pub u: f64,
    pub d: f64,
    pub rudder_ok: bool,
}

impl VehicleState {
    pub fn at(pos: Vec2, psi: f64) -> Self {
        Self {
            x: pos.x,
            y: pos.y,
            psi: wrap_angle(psi),
            u: 0.0,
            d: 0.0,
            rudder_ok: true,
        }
    }

    pub fn pos(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    fn is_finite(&self) -> bool {
        [self.x, self.y, self.psi, self.u, self.d].iter().all(|v| v.is_finite())
    }
}

/// Truth-only quantities the agent never observes directly.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TruthAugmentation {
    /// Sway, m/s. Held constant; zero unless a scenario sets it.
    pub v: f64,
    /// Yaw rate, rad/s.
    pub r: f64,
    /// Current speed, m/s.
    pub current_lateral: f64,
    /// World direction the current flows toward, rad.
    pub current_dir: f64,
    pub steering_locked: bool,
    pub cum_dive: f64,
}

/// Turning authority available to the truth model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TurnLimits {
    pub length: f64,
    pub delta_max: f64,
    pub r_min: f64,
    /// Surge lag time constant, s.
    pub tau_u: f64,
}

impl TurnLimits {
    pub fn nominal(delta_max: f64) -> Self {
        Self {
            length: HULL_LENGTH,
            delta_max,
            r_min: min_turn_radius(HULL_LENGTH, delta_max),
            tau_u: 1.0,
        }
    }
}

/// Geometric minimum turning radius at deflection `delta`.
pub fn min_turn_radius(length: f64, delta: f64) -> f64 {
    length / (2.0 * delta.abs().sin())
}

/// Deflection whose geometric radius equals `radius`.
pub fn deflection_for_radius(length: f64, radius: f64) -> f64 {
    (length / (2.0 * radius)).clamp(-1.0, 1.0).asin()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FaultKind {
    None,
    LowerRudderRemoved,
    SteeringLock,
    CrossCurrent,
    DvlBias,
}

/// Fault selection as it appears in config: a kind plus named scalars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultInjection {
    pub kind: FaultKind,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl Default for FaultInjection {
    fn default() -> Self {
        Self {
            kind: FaultKind::None,
            params: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FaultError {
    #[error("fault {kind:?} is missing parameter {name:?}")]
    Missing { kind: FaultKind, name: &'static str },
    #[error("fault {kind:?} parameter {name:?} = {value} is out of range")]
    OutOfRange {
        kind: FaultKind,
        name: &'static str,
        value: f64,
    },
    #[error("fault {kind:?} has unknown parameter {name:?}")]
    Unknown { kind: FaultKind, name: String },
}

/// Validated fault with typed parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Fault {
    None,
    LowerRudderRemoved {
        r_min_fault: f64,
        /// Whether the rudder-health sensor reports the removal.
        reported: bool,
    },
    SteeringLock {
        dive_step_max: f64,
        unlock_depth: f64,
        dive_enabled: bool,
    },
    CrossCurrent {
        speed: f64,
        direction: f64,
    },
    DvlBias {
        bias: f64,
        sigma: f64,
        trigger_step: u64,
    },
}

impl FaultInjection {
    pub fn with(kind: FaultKind, params: &[(&str, f64)]) -> Self {
        Self {
            kind,
            params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    pub fn resolve(&self) -> Result<Fault, FaultError> {
        let kind = self.kind;
        let allowed: &[&'static str] = match kind {
            FaultKind::None => &[],
            FaultKind::LowerRudderRemoved => &["r_min_fault", "reported"],
            FaultKind::SteeringLock => &["dive_step_max", "unlock_depth", "dive_enabled"],
            FaultKind::CrossCurrent => &["speed", "direction"],
            FaultKind::DvlBias => &["bias", "sigma", "trigger_step"],
        };
        if let Some(name) = self.params.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(FaultError::Unknown {
                kind,
                name: name.clone(),
            });
        }
        let get = |name: &'static str| -> Result<f64, FaultError> {
            match self.params.get(name) {
                Some(v) if v.is_finite() => Ok(*v),
                Some(v) => Err(FaultError::OutOfRange { kind, name, value: *v }),
                None => Err(FaultError::Missing { kind, name }),
            }
        };
        let positive = |name: &'static str| -> Result<f64, FaultError> {
            let v = get(name)?;
            if v > 0.0 {
                Ok(v)
            } else {
                Err(FaultError::OutOfRange { kind, name, value: v })
            }
        };
        let flag = |name: &'static str, default: bool| -> Result<bool, FaultError> {
            match self.params.get(name) {
                None => Ok(default),
                Some(v) if *v == 0.0 || *v == 1.0 => Ok(*v == 1.0),
                Some(v) => Err(FaultError::OutOfRange { kind, name, value: *v }),
            }
        };
        Ok(match kind {
            FaultKind::None => Fault::None,
            FaultKind::LowerRudderRemoved => Fault::LowerRudderRemoved {
                r_min_fault: positive("r_min_fault")?,
                reported: flag("reported", false)?,
            },
            FaultKind::SteeringLock => Fault::SteeringLock {
                dive_step_max: positive("dive_step_max")?,
                unlock_depth: positive("unlock_depth")?,
                dive_enabled: flag("dive_enabled", true)?,
            },
            FaultKind::CrossCurrent => Fault::CrossCurrent {
                speed: get("speed")?,
                direction: get("direction")?,
            },
            FaultKind::DvlBias => {
                let trigger = get("trigger_step")?;
                if trigger < 0.0 || trigger.fract() != 0.0 {
                    return Err(FaultError::OutOfRange {
                        kind,
                        name: "trigger_step",
                        value: trigger,
                    });
                }
                let sigma = get("sigma")?;
                if sigma < 0.0 {
                    return Err(FaultError::OutOfRange {
                        kind,
                        name: "sigma",
                        value: sigma,
                    });
                }
                Fault::DvlBias {
                    bias: get("bias")?,
                    sigma,
                    trigger_step: trigger as u64,
                }
            }
        })
    }
}

impl Fault {
    /// Truth-model turning limits under this fault.
    pub fn turn_limits(&self, delta_max: f64) -> TurnLimits {
        let mut lim = TurnLimits::nominal(delta_max);
        if let Fault::LowerRudderRemoved { r_min_fault, .. } = *self {
            lim.r_min = r_min_fault.max(lim.r_min);
        }
        lim
    }

    /// Initial truth augmentation (current field, sway).
    pub fn initial_augmentation(&self) -> TruthAugmentation {
        let mut aug = TruthAugmentation::default();
        if let Fault::CrossCurrent { speed, direction } = *self {
            aug.current_lateral = speed;
            aug.current_dir = direction;
        }
        aug
    }

    /// Rudder-health flag as seen by the truth state.
    pub fn rudder_reported_ok(&self) -> bool {
        !matches!(self, Fault::LowerRudderRemoved { reported: true, .. })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("non-finite input to the kinematic step: {0}")]
    NonFinite(&'static str),
    #[error("time step must be positive, got {0}")]
    BadStep(f64),
}

/// Yaw rate for a rudder command at surge `u`.
pub fn yaw_rate(u: f64, rudder_cmd: f64, lim: &TurnLimits) -> f64 {
    let s = rudder_cmd.abs().min(lim.delta_max).sin();
    if s == 0.0 {
        return 0.0;
    }
    let radius = (lim.length / (2.0 * s)).max(lim.r_min);
    u / radius * rudder_cmd.signum()
}

/// One explicit-Euler step of the truth model.
pub fn step_kinematics(
    state: VehicleState,
    aug: TruthAugmentation,
    rudder_cmd: f64,
    speed_setpoint: f64,
    dt: f64,
    lim: &TurnLimits,
) -> Result<(VehicleState, TruthAugmentation), ModelError> {
    if !state.is_finite() {
        return Err(ModelError::NonFinite("state"));
    }
    if !rudder_cmd.is_finite() {
        return Err(ModelError::NonFinite("rudder_cmd"));
    }
    if !speed_setpoint.is_finite() {
        return Err(ModelError::NonFinite("speed_setpoint"));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(ModelError::BadStep(dt));
    }
    let mut aug = aug;
    aug.r = if aug.steering_locked {
        0.0
    } else {
        yaw_rate(state.u, rudder_cmd, lim)
    };
    let (s, c) = state.psi.sin_cos();
    let (u, v) = (state.u, aug.v);
    let mut next = state;
    next.x += (u * c - v * s) * dt;
    next.y += (u * s + v * c) * dt;
    if aug.current_lateral != 0.0 {
        let (cs, cc) = aug.current_dir.sin_cos();
        next.x += aug.current_lateral * cc * dt;
        next.y += aug.current_lateral * cs * dt;
    }
    next.psi = wrap_angle(state.psi + aug.r * dt);
    next.u = (u + (speed_setpoint - u) * (dt / lim.tau_u).min(1.0)).max(0.0);
    Ok((next, aug))
}

/// Arm the steering lock when a replanned route arrives.
pub fn engage_steering_lock(aug: TruthAugmentation, fault: &Fault) -> TruthAugmentation {
    let mut aug = aug;
    if matches!(fault, Fault::SteeringLock { .. }) {
        aug.steering_locked = true;
        aug.cum_dive = 0.0;
    }
    aug
}

/// One report cycle of the steering lock: dive until the unlock depth is
/// reached, holding heading meanwhile.
pub fn apply_steering_lock(
    state: VehicleState,
    aug: TruthAugmentation,
    fault: &Fault,
    replanned: bool,
) -> (VehicleState, TruthAugmentation) {
    let mut state = state;
    let mut aug = aug;
    let Fault::SteeringLock {
        dive_step_max,
        unlock_depth,
        dive_enabled,
    } = *fault
    else {
        aug.steering_locked = false;
        return (state, aug);
    };
    if !replanned || !aug.steering_locked {
        return (state, aug);
    }
    if !dive_enabled {
        aug.steering_locked = false;
        return (state, aug);
    }
    let step = dive_step_max.min(unlock_depth - aug.cum_dive).max(0.0);
    state.d += step;
    aug.cum_dive += step;
    if aug.cum_dive >= unlock_depth - 1e-12 {
        aug.steering_locked = false;
    }
    (state, aug)
}

/// Move depth toward `target` by at most `max_step`.
pub fn step_depth(state: VehicleState, target: f64, max_step: f64) -> VehicleState {
    let mut s = state;
    let delta = (target - s.d).clamp(-max_step, max_step);
    s.d = (s.d + delta).max(0.0);
    s
}
