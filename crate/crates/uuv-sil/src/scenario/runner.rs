//! The agent side of a run: estimation, perception, the planning pipeline
//! and guidance, driving the vehicle server in lockstep over a link.
//!
//! Sim time is owned here. Every fast tick sends one command; telemetry
//! comes back on the sensor cadence. A reasoner call runs on a worker
//! thread and its result is collected a fixed number of ticks later, so
//! the command stream never pauses and the transcript does not depend on
//! wall-clock speed.

use super::config::{EstimateSource, InitialGuidance, KfAiding, KfMode, ReasonerMode, Resolved, ScenarioConfig};
use super::metrics::{compute_metrics, RunMetrics};
use super::vehicle::VehicleServer;
use crate::bus::{
    connect, encode, BusError, Link, ModuleId, Payload, PlanningRequest, StateData, StateMessage, StrategyMsg,
    Telemetry, TypedMessage, VerificationMsg,
};
use crate::dynamics::VehicleState;
use crate::estimator::{
    kf_predict, kf_update_dvl, kf_update_gps, kf_update_velocity, rescale_covariances, speed_heading_covariance,
    KfNoiseParams, KfState,
};
use crate::geometry::{nearest_on_polyline, wrap_angle, Vec2};
use crate::guidance::{
    advance_waypoint, apply_bias, decide, los_heading, speed_setpoint, CommandSource, ControlAction, ControlCommand,
    HeadingPd, WaypointPlan,
};
use crate::perception::{cross_track_error, Cause, ContextPackage, FaultMonitor, NavErrors};
use crate::reasoner::endpoint::Exchange;
use crate::reasoner::memory::LongTermRecord;
use crate::reasoner::{
    admit_extra_action, build_prompt, parse_symbolic, serialize, EndpointReasoner, MemoryStores, OutOfSchemaAction,
    ParseLimits, PlanningStage, Reasoner, ReasonerError, ReasonerRequest, ScriptedPlanner, StrategyTheta, TaskSpec,
    SCALE_MAX,
};
use crate::sensors::Measurement;
use crate::solver::{verify, SolverVerdict, Violation};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::Path;
use std::thread::JoinHandle;
use std::time::Instant;
use thiserror::Error;

/// Lines of recent perception history kept for the context package.
const HISTORY_LEN: usize = 8;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] super::config::ConfigError),
    #[error("bus: {0}")]
    Bus(#[from] BusError),
    #[error("reasoner: {0}")]
    Reasoner(ReasonerError),
    #[error("estimator: {0}")]
    Estimator(String),
    #[error("plan: {0}")]
    Plan(String),
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Wall-clock cost of one pipeline phase. Kept out of the transcript.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyRecord {
    pub corr: u64,
    pub t_sim: f64,
    pub phase: String,
    pub wall_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: String,
    pub seed: u64,
    pub mode: String,
    pub reasoner: String,
    pub metrics: RunMetrics,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub summary: RunSummary,
    /// Encoded transcript lines.
    pub transcript: Vec<String>,
    pub latency: Vec<LatencyRecord>,
    pub exchanges: Vec<Exchange>,
    pub csv: String,
}

impl RunResult {
    pub fn metrics(&self) -> &RunMetrics {
        &self.summary.metrics
    }

    pub fn transcript_text(&self) -> String {
        let mut s = self.transcript.join("\n");
        s.push('\n');
        s
    }

    /// Write transcript, CSV, metrics, latency and exchange logs.
    pub fn write(&self, dir: &Path) -> Result<(), std::io::Error> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("transcript.jsonl"), self.transcript_text())?;
        std::fs::write(dir.join("steps.csv"), &self.csv)?;
        std::fs::write(
            dir.join("metrics.json"),
            serde_json::to_string_pretty(&self.summary).expect("summary serializes") + "\n",
        )?;
        let mut lat = String::new();
        for r in &self.latency {
            lat += &serde_json::to_string(r).expect("record serializes");
            lat.push('\n');
        }
        std::fs::write(dir.join("latency.jsonl"), lat)?;
        if !self.exchanges.is_empty() {
            let mut ex = String::new();
            for e in &self.exchanges {
                ex += &serde_json::to_string(e).expect("exchange serializes");
                ex.push('\n');
            }
            std::fs::write(dir.join("exchanges.jsonl"), ex)?;
        }
        Ok(())
    }
}

/// Build the reasoner the config asks for.
pub fn make_reasoner(cfg: &ScenarioConfig) -> Result<Box<dyn Reasoner>, RunError> {
    let res = cfg.resolve()?;
    Ok(match cfg.reasoner.mode {
        ReasonerMode::Scripted => Box::new(ScriptedPlanner {
            kind: cfg.kind,
            initial: cfg.plan.clone(),
            recovery: cfg.recovery.clone(),
            limits: res.limits,
            area: res.area,
        }),
        ReasonerMode::Endpoint => {
            let ep = cfg.reasoner.endpoint.clone().ok_or_else(|| {
                RunError::Reasoner(ReasonerError::Config(
                    "endpoint mode without [reasoner.endpoint]".into(),
                ))
            })?;
            Box::new(EndpointReasoner::new(ep))
        }
    })
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunResult, RunError> {
    run_with_reasoner(cfg, make_reasoner(cfg)?)
}

/// Run and write outputs; on failure the partial transcript is still
/// written before the error is returned.
pub fn run_to_dir(cfg: &ScenarioConfig, dir: &Path) -> Result<RunResult, RunError> {
    let reasoner = make_reasoner(cfg)?;
    let (partial, outcome) = run_inner(cfg, reasoner);
    match outcome {
        Ok(r) => {
            r.write(dir)?;
            Ok(r)
        }
        Err(e) => {
            std::fs::create_dir_all(dir)?;
            let mut text = partial.join("\n");
            text.push('\n');
            text += &format!("# aborted: {e}\n");
            std::fs::write(dir.join("transcript.jsonl"), text)?;
            Err(e)
        }
    }
}

pub fn run_with_reasoner(cfg: &ScenarioConfig, reasoner: Box<dyn Reasoner>) -> Result<RunResult, RunError> {
    run_inner(cfg, reasoner).1
}

fn run_inner(cfg: &ScenarioConfig, reasoner: Box<dyn Reasoner>) -> (Vec<String>, Result<RunResult, RunError>) {
    let mut agent = match Agent::new(cfg, reasoner) {
        Ok(a) => a,
        Err(e) => return (vec![], Err(e)),
    };
    let outcome = agent.run();
    let transcript = std::mem::take(&mut agent.transcript);
    match outcome {
        Ok(()) => {
            let msgs = std::mem::take(&mut agent.messages);
            let metrics = compute_metrics(&msgs);
            let name = agent.reasoner_name.clone();
            let result = RunResult {
                summary: RunSummary {
                    scenario: cfg.name.clone(),
                    seed: cfg.seed,
                    mode: cfg.estimator.mode.label().to_string(),
                    reasoner: name,
                    metrics,
                },
                transcript: transcript.clone(),
                latency: std::mem::take(&mut agent.latency),
                exchanges: std::mem::take(&mut agent.exchanges),
                csv: std::mem::take(&mut agent.csv),
            };
            (transcript, Ok(result))
        }
        Err(e) => (transcript, Err(e)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Mode {
    Track(CommandSource),
    Hold {
        heading: f64,
        speed: f64,
        source: CommandSource,
    },
}

type WorkerOutput = (Box<dyn Reasoner>, Result<String, ReasonerError>, f64);

struct Pending {
    corr: u64,
    deadline: u64,
    request: ReasonerRequest,
    fault_triggered: bool,
    worker: JoinHandle<WorkerOutput>,
}

struct Agent {
    cfg: ScenarioConfig,
    res: Resolved,
    task: TaskSpec,
    link: Option<Box<dyn Link>>,
    reasoner: Option<Box<dyn Reasoner>>,
    reasoner_name: String,
    // outputs
    transcript: Vec<String>,
    messages: Vec<TypedMessage>,
    latency: Vec<LatencyRecord>,
    exchanges: Vec<Exchange>,
    csv: String,
    // estimation
    last_tel: Option<Telemetry>,
    kf: Option<KfState>,
    kf_params: Option<KfNoiseParams>,
    guidance_est: VehicleState,
    perception_est: VehicleState,
    // guidance
    plan: Option<WaypointPlan>,
    plan_id: u32,
    plan_corr: u64,
    mode: Mode,
    pd: HeadingPd,
    bias: f64,
    desired: f64,
    degraded: bool,
    last_cmd: Option<ControlCommand>,
    // perception
    monitor: FaultMonitor,
    history: Vec<String>,
    last_errors: NavErrors,
    // planning
    memory: MemoryStores,
    corr: u64,
    retry: u32,
    causes: BTreeSet<Cause>,
    pending: Option<Pending>,
    mission_complete: bool,
}

fn raw_estimate(m: &Measurement) -> VehicleState {
    VehicleState {
        x: m.x_m,
        y: m.y_m,
        psi: m.psi_m,
        u: m.u_m.max(0.0),
        d: m.d_m,
        rudder_ok: m.rudder_ok_m,
    }
}

impl Agent {
    fn new(cfg: &ScenarioConfig, reasoner: Box<dyn Reasoner>) -> Result<Self, RunError> {
        let res = cfg.resolve()?;
        let link = connect(
            cfg.transport.kind,
            VehicleServer::new(cfg).map_err(RunError::Protocol)?,
            cfg.transport.port,
        )?;
        let s = &cfg.start;
        let mut start = VehicleState::at(Vec2::new(s.x, s.y), s.heading_deg.to_radians());
        start.u = s.speed.0;
        start.d = s.depth;
        let task = TaskSpec {
            scenario: cfg.kind,
            area: res.area.clone(),
            limits: res.limits,
            goal: cfg.goal.clone(),
        };
        let pd = HeadingPd::new(cfg.guidance.gains, res.limits.delta_max, cfg.timing.dt_fast);
        let header = "t,truth_x,truth_y,truth_psi,truth_u,truth_d,meas_x,meas_y,meas_psi,meas_u,meas_d,\
est_x,est_y,est_psi,nav_x,nav_y,e_p,e_psi,rudder_cmd,rudder_bias,speed_setpoint,source,plan_id,raw_flag,confirmed,steering_locked\n";
        Ok(Self {
            reasoner_name: reasoner.name().to_string(),
            cfg: cfg.clone(),
            task,
            link: Some(link),
            reasoner: Some(reasoner),
            transcript: Vec::new(),
            messages: Vec::new(),
            latency: Vec::new(),
            exchanges: Vec::new(),
            csv: header.to_string(),
            last_tel: None,
            kf: None,
            kf_params: cfg.estimator.kf.map(|k| k.noise),
            guidance_est: start,
            perception_est: start,
            plan: None,
            plan_id: 0,
            plan_corr: 0,
            mode: Mode::Hold {
                heading: start.psi,
                speed: 0.0,
                source: CommandSource::Track,
            },
            pd,
            bias: 0.0,
            desired: start.psi,
            degraded: false,
            last_cmd: None,
            monitor: FaultMonitor::new(cfg.thresholds),
            history: Vec::new(),
            last_errors: NavErrors { e_p: 0.0, e_psi: 0.0 },
            memory: MemoryStores::new(cfg.reasoner.short_term_capacity),
            corr: 0,
            retry: 0,
            causes: BTreeSet::new(),
            pending: None,
            mission_complete: false,
            res,
        })
    }

    fn record(&mut self, msg: TypedMessage) -> Result<(), RunError> {
        let line = encode(&msg).map_err(|e| RunError::Protocol(e.to_string()))?;
        self.transcript.push(line);
        self.messages.push(msg);
        Ok(())
    }

    fn link(&mut self) -> &mut Box<dyn Link> {
        self.link.as_mut().expect("link open for the whole run")
    }

    fn run(&mut self) -> Result<(), RunError> {
        let outcome = self.run_loop();
        // never leave a worker or a server thread behind
        if let Some(p) = self.pending.take() {
            let _ = p.worker.join();
        }
        if let Some(link) = self.link.take() {
            let closed = link.close();
            if outcome.is_ok() {
                closed?;
            }
        }
        outcome
    }

    fn run_loop(&mut self) -> Result<(), RunError> {
        let c = self.res.cadence;
        let dt = self.cfg.timing.dt_fast;
        let last_tick = (self.cfg.duration_cap_s / dt).floor() as u64;
        for k in 0..=last_tick {
            let t = k as f64 * dt;
            if k % c.sensor_every == 0 {
                self.on_telemetry(k / c.sensor_every)?;
            }
            if k == 0 {
                let state = self.guidance_est;
                self.start_planning(PlanningStage::Initial { state }, BTreeSet::new(), None, false, k, t)?;
                self.finish_planning(k, t)?;
            }
            if k > 0 && k % c.report_every == 0 {
                self.slow_tick(k, t)?;
            }
            if self.pending.as_ref().is_some_and(|p| p.deadline == k) {
                self.finish_planning(k, t)?;
            }
            self.fast_tick(t)?;
            if k % c.sensor_every == 0 {
                self.csv_row(t);
            }
            if self.mission_complete {
                break;
            }
        }
        self.final_report()
    }

    // ---- estimation -------------------------------------------------

    fn on_telemetry(&mut self, sample: u64) -> Result<(), RunError> {
        let msg = self.link().recv()?;
        let Some(tel) = msg.telemetry().copied() else {
            return Err(RunError::Protocol(format!(
                "expected telemetry, got {:?}",
                msg.msg_type()
            )));
        };
        if tel.sample != sample {
            return Err(RunError::Protocol(format!(
                "telemetry sample {} arrived at {sample}",
                tel.sample
            )));
        }
        self.record(msg)?;
        self.last_tel = Some(tel);
        let raw = raw_estimate(&tel.measurement);
        if let (Some(kf_cfg), Some(every)) = (self.cfg.estimator.kf, self.res.kf_every) {
            if sample.is_multiple_of(every) {
                self.kf_step(&tel, kf_cfg.period, sample == 0)
                    .map_err(RunError::Estimator)?;
            }
        }
        let fused = match &self.kf {
            Some(kf) => {
                let (x, y) = kf.position();
                VehicleState { x, y, ..raw }
            }
            None => raw,
        };
        self.guidance_est = match self.cfg.estimator.guidance {
            EstimateSource::Raw => raw,
            EstimateSource::Kf => fused,
        };
        self.perception_est = match self.cfg.estimator.perception {
            EstimateSource::Raw => raw,
            EstimateSource::Kf => fused,
        };
        Ok(())
    }

    fn kf_step(&mut self, tel: &Telemetry, period: f64, first: bool) -> Result<(), String> {
        let kf_cfg = self.cfg.estimator.kf.expect("filter configured");
        let params = self.kf_params.expect("filter configured");
        let m = &tel.measurement;
        let mut kf = match self.kf {
            Some(kf) if !first => kf_predict(kf, &params, period).map_err(|e| e.to_string())?,
            _ => {
                let s = &self.cfg.start;
                let h = Vec2::from_heading(s.heading_deg.to_radians()) * s.speed.0;
                KfState::new((s.x, s.y), (h.x, h.y), kf_cfg.init_pos_var, kf_cfg.init_vel_var)
            }
        };
        kf = kf_update_gps(kf, (m.x_m, m.y_m), params.r_gps).map_err(|e| e.to_string())?;
        match kf_cfg.aiding {
            KfAiding::None => {}
            KfAiding::SpeedHeading => {
                let n = &self.res.noise;
                let u = m.u_m.max(0.0);
                let v = Vec2::from_heading(m.psi_m) * u;
                // floor speed and sigmas so the cross-heading variance never
                // collapses and the posterior stays positive definite
                let u_floor = u.max(self.res.limits.u_min);
                let r = speed_heading_covariance(u_floor, m.psi_m, n.sigma_u.max(1e-3), n.sigma_psi.max(1e-4));
                kf = kf_update_velocity(kf, (v.x, v.y), r).map_err(|e| e.to_string())?;
            }
            KfAiding::Dvl => {
                let d = tel.dvl.ok_or("a DVL-aided filter step without a DVL reading")?;
                let (s, c) = m.psi_m.sin_cos();
                let vx = d.vel_along * c - d.vel_lateral * s;
                let vy = d.vel_along * s + d.vel_lateral * c;
                kf = kf_update_dvl(kf, (vx, vy), params.r_dvl).map_err(|e| e.to_string())?;
            }
        }
        self.kf = Some(kf);
        Ok(())
    }

    // ---- perception -------------------------------------------------

    fn slow_tick(&mut self, k: u64, t: f64) -> Result<(), RunError> {
        let est = self.perception_est;
        let e_p = match &self.plan {
            Some(p) => cross_track_error(est.pos(), &p.polyline()).map_err(|e| RunError::Plan(e.to_string()))?,
            None => 0.0,
        };
        let errors = NavErrors {
            e_p,
            e_psi: wrap_angle(self.desired - est.psi),
        };
        self.last_errors = errors;
        let rudder_ok_m = self.last_tel.map(|t| t.measurement.rudder_ok_m).unwrap_or(true);
        let flag = self.monitor.update(errors, rudder_ok_m);
        self.history.push(format!(
            "t={t:.1} s e_p={:.2} m e_psi={:.3} rad raw={} confirmed={}",
            errors.e_p, errors.e_psi, flag.raw as u8, flag.confirmed as u8
        ));
        if self.history.len() > HISTORY_LEN {
            self.history.remove(0);
        }
        self.record(TypedMessage::new(
            t,
            ModuleId::Perception,
            ModuleId::Scheduler,
            0,
            Payload::StateData(StateData::Agent(StateMessage {
                est_state: est,
                e_p: errors.e_p,
                e_psi: errors.e_psi,
                rudder_ok_m,
                t,
                raw_flag: flag.raw,
                confirmed: flag.confirmed,
                mission_complete: self.mission_complete,
            })),
        ))?;
        if flag.rising && self.pending.is_none() {
            self.degraded = true;
            self.retry = 0;
            self.causes = self.monitor.causes().clone();
            let context = ContextPackage {
                est_state: est,
                ref_plan: self.plan.clone().expect("a plan exists once the loop runs"),
                history: self.history.clone(),
                confirmed_flag: true,
                violation_labels: self.causes.clone(),
            };
            self.start_planning(PlanningStage::Recovery { context }, BTreeSet::new(), None, true, k, t)?;
        }
        Ok(())
    }

    fn final_report(&mut self) -> Result<(), RunError> {
        let Some(last) = self.messages.last() else {
            return Ok(());
        };
        let t = last.t_stamp;
        let rudder_ok_m = self.last_tel.map(|t| t.measurement.rudder_ok_m).unwrap_or(true);
        let msg = StateMessage {
            est_state: self.perception_est,
            e_p: self.last_errors.e_p,
            e_psi: self.last_errors.e_psi,
            rudder_ok_m,
            t,
            raw_flag: false,
            confirmed: self.monitor.confirmed(),
            mission_complete: self.mission_complete,
        };
        self.record(TypedMessage::new(
            t,
            ModuleId::Perception,
            ModuleId::Scheduler,
            0,
            Payload::StateData(StateData::Agent(msg)),
        ))
    }

    // ---- planning pipeline -----------------------------------------

    fn solver_rudder_ok(&self) -> bool {
        let measured = self.last_tel.map(|t| t.measurement.rudder_ok_m).unwrap_or(true);
        measured && !self.degraded
    }

    fn start_planning(
        &mut self,
        stage: PlanningStage,
        violations: BTreeSet<Violation>,
        previous: Option<StrategyTheta>,
        fault_triggered: bool,
        k: u64,
        t: f64,
    ) -> Result<(), RunError> {
        let rudder_ok = self.solver_rudder_ok();
        let ctx = self.memory.context(&self.causes, self.cfg.kind);
        let prompt = build_prompt(&stage, &self.task, &ctx, &violations, self.retry, rudder_ok);
        self.corr += 1;
        let corr = self.corr;
        self.record(TypedMessage::new(
            t,
            ModuleId::Scheduler,
            ModuleId::Reasoner,
            corr,
            Payload::PlanningRequest(PlanningRequest {
                initial: matches!(stage, PlanningStage::Initial { .. }),
                retry_index: self.retry,
                violations,
                causes: self.causes.clone(),
                prompt: prompt.text(),
            }),
        ))?;
        let request = ReasonerRequest {
            prompt,
            stage,
            previous,
            rudder_ok,
        };
        let mut reasoner = self.reasoner.take().expect("one call in flight at a time");
        let req = request.clone();
        let worker = std::thread::spawn(move || {
            let start = Instant::now();
            let out = reasoner.generate(&req);
            (reasoner, out, start.elapsed().as_secs_f64())
        });
        let deadline = if fault_triggered {
            k + self.res.cadence.latency_ticks
        } else {
            k
        };
        self.pending = Some(Pending {
            corr,
            deadline,
            request,
            fault_triggered,
            worker,
        });
        Ok(())
    }

    fn finish_planning(&mut self, k: u64, t: f64) -> Result<(), RunError> {
        let p = self.pending.take().expect("finish follows start");
        let (mut reasoner, out, wall) = p
            .worker
            .join()
            .map_err(|_| RunError::Reasoner(ReasonerError::Config("reasoner worker panicked".into())))?;
        self.exchanges.extend(reasoner.take_exchanges());
        self.reasoner = Some(reasoner);
        self.latency.push(LatencyRecord {
            corr: p.corr,
            t_sim: t,
            phase: "reasoner".into(),
            wall_s: wall,
        });
        let limits = ParseLimits {
            u_max: self.res.limits.u_max,
        };
        let (strategy, theta, verdict) = match out {
            Err(e) if !e.is_retryable() => return Err(RunError::Reasoner(e)),
            Err(e) => {
                let why = e.to_string();
                (
                    StrategyMsg {
                        raw: String::new(),
                        theta: None,
                        parse_error: Some(why.clone()),
                        diagnostics: vec![],
                    },
                    None,
                    SolverVerdict::schema_failure(why),
                )
            }
            Ok(raw) => match parse_symbolic(&raw, &limits) {
                Err(e) => {
                    let why = e.to_string();
                    (
                        StrategyMsg {
                            raw,
                            theta: None,
                            parse_error: Some(why.clone()),
                            diagnostics: vec![],
                        },
                        None,
                        SolverVerdict::schema_failure(why),
                    )
                }
                Ok(parsed) => {
                    let start = Instant::now();
                    let verdict = verify(&parsed.theta, &self.res.area, &self.res.limits, p.request.rudder_ok);
                    self.latency.push(LatencyRecord {
                        corr: p.corr,
                        t_sim: t,
                        phase: "solver".into(),
                        wall_s: start.elapsed().as_secs_f64(),
                    });
                    (
                        StrategyMsg {
                            raw,
                            theta: Some(parsed.theta.clone()),
                            parse_error: None,
                            diagnostics: parsed.diagnostics,
                        },
                        Some(parsed.theta),
                        verdict,
                    )
                }
            },
        };
        self.record(TypedMessage::new(
            t,
            ModuleId::Reasoner,
            ModuleId::Solver,
            p.corr,
            Payload::Strategy(strategy),
        ))?;
        let (mut admitted, mut rejected) = (Vec::new(), Vec::new());
        let mut extras = Vec::new();
        if let Some(th) = &theta {
            for a in &th.extra_actions {
                let label = format!("{a:?}");
                if admit_extra_action(a, self.res.limits.delta_max, SCALE_MAX) {
                    admitted.push(label);
                    extras.push(*a);
                } else {
                    rejected.push(label);
                }
            }
        }
        self.record(TypedMessage::new(
            t,
            ModuleId::Solver,
            ModuleId::Scheduler,
            p.corr,
            Payload::VerificationResult(VerificationMsg {
                verdict: verdict.clone(),
                admitted,
                rejected,
                fault_triggered: p.fault_triggered,
            }),
        ))?;
        if let Some(th) = &theta {
            self.memory.record(&p.request.prompt.text(), th);
        }
        let heading = self.guidance_est.psi;
        match decide(&verdict, self.retry, self.cfg.guidance.n_max, heading, &self.res.limits) {
            ControlAction::Dispatch => {
                let th = theta.expect("a passing verdict has a parsed strategy");
                self.dispatch(&th, &extras, &p.request.stage, p.corr, t)?;
            }
            ControlAction::Retry(e) => {
                self.retry += 1;
                self.start_planning(p.request.stage, e, theta, p.fault_triggered, k, t)?;
                if self.pending.as_ref().is_some_and(|q| q.deadline == k) {
                    self.finish_planning(k, t)?;
                }
            }
            ControlAction::HoldFallback { heading, speed } => {
                self.mode = Mode::Hold {
                    heading,
                    speed,
                    source: CommandSource::HoldFallback,
                };
                self.plan_corr = p.corr;
                self.monitor.release();
            }
        }
        Ok(())
    }

    fn dispatch(
        &mut self,
        th: &StrategyTheta,
        extras: &[OutOfSchemaAction],
        stage: &PlanningStage,
        corr: u64,
        t: f64,
    ) -> Result<(), RunError> {
        let g = &self.cfg.guidance;
        let mut plan = WaypointPlan::from_corners(&th.waypoints, th.radius, th.speed, g.r_acc, g.spacing)
            .map_err(|e| RunError::Plan(e.to_string()))?;
        let initial = matches!(stage, PlanningStage::Initial { .. });
        if !initial {
            // resume from just past the point nearest the vehicle
            let pts = plan.polyline();
            if let Some((seg, _)) = nearest_on_polyline(self.guidance_est.pos(), &pts) {
                plan.active_index = (seg + 1).min(pts.len() - 1);
            }
        }
        self.bias = 0.0;
        for a in extras {
            match *a {
                OutOfSchemaAction::RudderBias { bias } => self.bias = bias,
                OutOfSchemaAction::KfCovarianceScale { q_vel, r_gps, r_dvl } => {
                    if let (Some(kf), KfMode::KfMcp) = (self.cfg.estimator.kf, self.cfg.estimator.mode) {
                        self.kf_params = Some(rescale_covariances(kf.noise, (q_vel, r_gps, r_dvl)));
                    }
                }
            }
        }
        self.mode = match (initial, self.cfg.guidance.initial) {
            (true, InitialGuidance::HeadingHold) => {
                let pts = plan.polyline();
                Mode::Hold {
                    heading: (pts[1] - pts[0]).heading(),
                    speed: th.speed,
                    source: CommandSource::Track,
                }
            }
            (true, InitialGuidance::Track) => Mode::Track(CommandSource::Track),
            (false, _) => Mode::Track(CommandSource::Replanned),
        };
        self.plan = Some(plan);
        self.plan_id += 1;
        self.plan_corr = corr;
        if !initial {
            self.monitor.release();
            self.memory.record_recovery(LongTermRecord {
                causes: self.causes.clone(),
                scenario: self.cfg.kind,
                t,
                summary: serialize(th).replace('\n', "; "),
            });
        }
        Ok(())
    }

    // ---- guidance ---------------------------------------------------

    fn fast_tick(&mut self, t: f64) -> Result<(), RunError> {
        let est = self.guidance_est;
        let (source, speed, depth) = match self.mode {
            Mode::Track(source) => {
                let plan = self.plan.as_mut().expect("tracking needs a plan");
                advance_waypoint(plan, est.pos());
                if plan.completed {
                    self.mission_complete = true;
                }
                if let Some(h) = los_heading(est.pos(), plan.active().pos()) {
                    self.desired = h;
                }
                let speed = speed_setpoint(plan.active_speed(), self.degraded, &self.res.limits);
                (source, speed, plan.active().depth)
            }
            Mode::Hold { heading, speed, source } => {
                self.desired = heading;
                (source, speed_setpoint(speed, self.degraded, &self.res.limits), None)
            }
        };
        let pd = self.pd.step(wrap_angle(self.desired - est.psi));
        let cmd = ControlCommand {
            rudder_cmd: apply_bias(pd, self.bias, self.res.limits.delta_max),
            speed_setpoint: speed,
            rudder_bias: self.bias,
            source,
            depth_setpoint: depth,
            plan_id: self.plan_id,
        };
        let msg = TypedMessage::new(
            t,
            ModuleId::Guidance,
            ModuleId::Vehicle,
            self.plan_corr,
            Payload::ControlCommand(cmd),
        );
        self.link().send(&msg)?;
        self.record(msg)?;
        self.last_cmd = Some(cmd);
        Ok(())
    }

    fn csv_row(&mut self, t: f64) {
        let (Some(tel), Some(cmd)) = (self.last_tel, self.last_cmd) else {
            return;
        };
        let (tr, m, e, n) = (tel.truth, tel.measurement, self.perception_est, self.guidance_est);
        let source = match cmd.source {
            CommandSource::Track => "track",
            CommandSource::Replanned => "replanned",
            CommandSource::HoldFallback => "hold_fallback",
        };
        self.csv += &format!(
            "{t:.2},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{source},{},{},{},{}\n",
            tr.x,
            tr.y,
            tr.psi,
            tr.u,
            tr.d,
            m.x_m,
            m.y_m,
            m.psi_m,
            m.u_m,
            m.d_m,
            e.x,
            e.y,
            e.psi,
            n.x,
            n.y,
            self.last_errors.e_p,
            self.last_errors.e_psi,
            cmd.rudder_cmd,
            cmd.rudder_bias,
            cmd.speed_setpoint,
            cmd.plan_id,
            self.history.last().is_some_and(|h| h.contains("raw=1")) as u8,
            self.monitor.confirmed() as u8,
            tel.steering_locked as u8,
        );
    }
}
