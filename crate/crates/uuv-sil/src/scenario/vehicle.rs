//! The simulated vehicle as a bus endpoint: holds the truth state, steps
//! it once per received command, and reports sensor samples on the sensor
//! cadence.

use super::config::{Cadence, ScenarioConfig};
use crate::bus::{Endpoint, ModuleId, Payload, StateData, Telemetry, TypedMessage};
use crate::dynamics::{
    apply_steering_lock, engage_steering_lock, step_depth, step_kinematics, Fault, TruthAugmentation, TurnLimits,
    VehicleState,
};
use crate::geometry::Vec2;
use crate::guidance::{CommandSource, ControlCommand};
use crate::sensors::{body_ground_velocity, sample, sample_dvl, NoiseConfig, NoiseState};

pub struct VehicleServer {
    state: VehicleState,
    aug: TruthAugmentation,
    fault: Fault,
    turn: TurnLimits,
    noise: NoiseConfig,
    noise_state: NoiseState,
    dt: f64,
    cadence: Cadence,
    depth_step_max: f64,
    step: u64,
    last_plan: Option<u32>,
    replanned: bool,
}

impl VehicleServer {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self, String> {
        let res = cfg.resolve().map_err(|e| e.to_string())?;
        let s = &cfg.start;
        let mut state = VehicleState::at(Vec2::new(s.x, s.y), s.heading_deg.to_radians());
        state.u = s.speed.0;
        state.d = s.depth;
        state.rudder_ok = res.fault.rudder_reported_ok();
        Ok(Self {
            state,
            aug: res.fault.initial_augmentation(),
            fault: res.fault,
            turn: res.fault.turn_limits(res.limits.delta_max),
            noise: res.noise,
            noise_state: NoiseState::new(res.noise.seed),
            dt: cfg.timing.dt_fast,
            cadence: res.cadence,
            depth_step_max: cfg.guidance.depth_step_max,
            step: 0,
            last_plan: None,
            replanned: false,
        })
    }

    fn telemetry(&mut self) -> TypedMessage {
        let t = self.step as f64 * self.dt;
        let measurement = sample(&self.state, &self.noise, &mut self.noise_state, t);
        let dvl = self.step.is_multiple_of(self.cadence.report_every).then(|| {
            let k = self.step / self.cadence.report_every;
            let vel = body_ground_velocity(&self.state, &self.aug);
            sample_dvl(vel, &self.fault, k, &mut self.noise_state, t)
        });
        TypedMessage::new(
            t,
            ModuleId::Vehicle,
            ModuleId::Scheduler,
            0,
            Payload::StateData(StateData::Telemetry(Telemetry {
                sample: self.step / self.cadence.sensor_every,
                truth: self.state,
                measurement,
                dvl,
                steering_locked: self.aug.steering_locked,
            })),
        )
    }

    fn apply(&mut self, cmd: &ControlCommand) -> Result<(), String> {
        if self.last_plan != Some(cmd.plan_id) {
            self.last_plan = Some(cmd.plan_id);
            if cmd.source == CommandSource::Replanned {
                self.aug = engage_steering_lock(self.aug, &self.fault);
                self.replanned = true;
            }
        }
        let (s, a) = step_kinematics(
            self.state,
            self.aug,
            cmd.applied_rudder(),
            cmd.speed_setpoint,
            self.dt,
            &self.turn,
        )
        .map_err(|e| e.to_string())?;
        self.state = s;
        self.aug = a;
        self.step += 1;
        if self.step.is_multiple_of(self.cadence.report_every) {
            if self.aug.steering_locked {
                (self.state, self.aug) = apply_steering_lock(self.state, self.aug, &self.fault, self.replanned);
            } else if let Some(target) = cmd.depth_setpoint {
                self.state = step_depth(self.state, target, self.depth_step_max);
            }
        }
        Ok(())
    }
}

impl Endpoint for VehicleServer {
    fn on_start(&mut self) -> Vec<TypedMessage> {
        vec![self.telemetry()]
    }

    fn on_message(&mut self, msg: &TypedMessage) -> Result<Vec<TypedMessage>, String> {
        let Some(cmd) = msg.command() else {
            return Err(format!(
                "vehicle accepts only control commands, got {:?}",
                msg.msg_type()
            ));
        };
        self.apply(cmd)?;
        Ok(if self.step.is_multiple_of(self.cadence.sensor_every) {
            vec![self.telemetry()]
        } else {
            vec![]
        })
    }
}
