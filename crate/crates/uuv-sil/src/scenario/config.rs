//! Scenario configuration, read from TOML and validated on load.

use crate::bus::TransportKind;
use crate::dynamics::{Fault, FaultInjection, HULL_LENGTH};
use crate::estimator::KfNoiseParams;
use crate::geometry::{ConvexPolygon, Vec2};
use crate::guidance::Gains;
use crate::perception::Thresholds;
use crate::reasoner::endpoint::EndpointConfig;
use crate::reasoner::{PlanSpec, RecoverySpec, ScenarioKind};
use crate::sensors::NoiseConfig;
use crate::solver::{NavigableArea, SolverLimits};
use crate::units::Speed;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub kind: ScenarioKind,
    /// Free-text mission goal shown to the reasoner.
    pub goal: String,
    pub seed: u64,
    pub duration_cap_s: f64,
    #[serde(default)]
    pub timing: Timing,
    pub area: AreaConfig,
    #[serde(default)]
    pub limits: LimitsConfig,
    pub thresholds: Thresholds,
    #[serde(default)]
    pub guidance: GuidanceConfig,
    pub start: StartConfig,
    pub plan: PlanSpec,
    #[serde(default)]
    pub recovery: Option<RecoverySpec>,
    pub noise: NoiseSection,
    #[serde(default)]
    pub fault: FaultInjection,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub reasoner: ReasonerConfig,
    #[serde(default)]
    pub transport: TransportConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Timing {
    pub dt_fast: f64,
    pub sensor_period: f64,
    /// Slow-loop state report period.
    pub report_period: f64,
    /// Sim time a reasoner call occupies.
    pub reasoner_latency: f64,
}

impl Default for Timing {
    fn default() -> Self {
        Self {
            dt_fast: 0.05,
            sensor_period: 0.1,
            report_period: 2.0,
            reasoner_latency: 0.5,
        }
    }
}

/// Integer tick counts derived from [`Timing`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cadence {
    pub sensor_every: u64,
    pub report_every: u64,
    pub latency_ticks: u64,
}

fn ratio(num: f64, den: f64, what: &str) -> Result<u64, ConfigError> {
    let r = num / den;
    let n = r.round();
    if n < 1.0 || (r - n).abs() > 1e-6 {
        return Err(invalid(format!("{what} must be a positive multiple of dt_fast")));
    }
    Ok(n as u64)
}

impl Timing {
    pub fn cadence(&self) -> Result<Cadence, ConfigError> {
        if !(self.dt_fast > 0.0 && self.dt_fast.is_finite()) {
            return Err(invalid("timing.dt_fast must be positive"));
        }
        let sensor_every = ratio(self.sensor_period, self.dt_fast, "timing.sensor_period")?;
        let report_every = ratio(self.report_period, self.dt_fast, "timing.report_period")?;
        if report_every % sensor_every != 0 {
            return Err(invalid("timing.report_period must be a multiple of sensor_period"));
        }
        let latency_ticks = if self.reasoner_latency == 0.0 {
            0
        } else {
            ratio(self.reasoner_latency, self.dt_fast, "timing.reasoner_latency")?
        };
        Ok(Cadence {
            sensor_every,
            report_every,
            latency_ticks,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AreaConfig {
    /// Counter-clockwise or clockwise convex vertices, m.
    pub vertices: Vec<[f64; 2]>,
    pub d_safe: f64,
}

impl AreaConfig {
    pub fn build(&self) -> Result<NavigableArea, ConfigError> {
        let pts = self.vertices.iter().map(|[x, y]| Vec2::new(*x, *y)).collect();
        let polygon = ConvexPolygon::new(pts).map_err(|e| invalid(format!("area: {e}")))?;
        if !(self.d_safe >= 0.0 && self.d_safe.is_finite()) {
            return Err(invalid("area.d_safe must be finite and >= 0"));
        }
        Ok(NavigableArea {
            polygon,
            d_safe: self.d_safe,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitsConfig {
    pub u_min: Speed,
    pub u_max: Speed,
    pub a_max: f64,
    pub delta_max_deg: f64,
    /// Minimum turn radius the solver assumes for a degraded rudder, m.
    pub r_min_fault: f64,
    pub dtheta_deg: f64,
}

impl Default for LimitsConfig {
    fn default() -> Self {
        Self {
            u_min: Speed(0.25),
            u_max: Speed::parse("10 kn").expect("literal"),
            a_max: 0.5,
            delta_max_deg: 60.0,
            r_min_fault: 10.0,
            dtheta_deg: 1.0,
        }
    }
}

impl LimitsConfig {
    pub fn build(&self) -> Result<SolverLimits, ConfigError> {
        let mut l = SolverLimits::with_fault_radius(
            self.u_min.0,
            self.u_max.0,
            self.a_max,
            HULL_LENGTH,
            self.delta_max_deg.to_radians(),
            self.r_min_fault,
        );
        l.dtheta = self.dtheta_deg.to_radians();
        l.validate().map_err(invalid)?;
        Ok(l)
    }
}

/// How guidance flies the initial plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialGuidance {
    /// LOS tracking of the plan's waypoints.
    #[default]
    Track,
    /// Hold the heading of the plan's first leg.
    HeadingHold,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuidanceConfig {
    pub gains: Gains,
    pub r_acc: f64,
    /// Spacing of tracking waypoints along a rounded route, m.
    pub spacing: f64,
    pub n_max: u32,
    pub initial: InitialGuidance,
    /// Depth change allowed per report cycle, m.
    pub depth_step_max: f64,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self {
            gains: Gains::default(),
            r_acc: 2.0,
            spacing: 1.0,
            n_max: 3,
            initial: InitialGuidance::Track,
            depth_step_max: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartConfig {
    pub x: f64,
    pub y: f64,
    pub heading_deg: f64,
    #[serde(default = "zero_speed")]
    pub speed: Speed,
    #[serde(default)]
    pub depth: f64,
}

fn zero_speed() -> Speed {
    Speed(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoisePreset {
    Zero,
    Lake,
    Sim,
}

/// A preset plus named overrides of individual [`NoiseConfig`] fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub preset: NoisePreset,
    #[serde(default)]
    pub overrides: BTreeMap<String, f64>,
}

impl NoiseSection {
    pub fn build(&self, seed: u64, walk_period: u32) -> Result<NoiseConfig, ConfigError> {
        let base = match self.preset {
            NoisePreset::Zero => NoiseConfig::zero(seed),
            NoisePreset::Lake => NoiseConfig::lake(seed),
            NoisePreset::Sim => NoiseConfig::sim(seed, walk_period),
        };
        let mut v = serde_json::to_value(base).map_err(|e| invalid(e.to_string()))?;
        let obj = v.as_object_mut().expect("struct serializes to an object");
        for (k, x) in &self.overrides {
            if k == "seed" || !obj.contains_key(k) {
                return Err(invalid(format!("noise.overrides: unknown field {k:?}")));
            }
            obj.insert(k.clone(), serde_json::json!(x));
        }
        let cfg: NoiseConfig = serde_json::from_value(v).map_err(|e| invalid(format!("noise.overrides: {e}")))?;
        cfg.validate().map_err(invalid)?;
        Ok(cfg)
    }
}

/// Which position/heading source a consumer reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateSource {
    #[default]
    Raw,
    Kf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KfMode {
    /// Fixed covariances; a commanded rescale is verified but not applied.
    KfOnly,
    /// Admitted covariance rescales are applied.
    #[default]
    KfMcp,
}

impl KfMode {
    pub fn label(self) -> &'static str {
        match self {
            Self::KfOnly => "kf_only",
            Self::KfMcp => "kf_mcp",
        }
    }
}

/// Measurements the filter fuses besides GPS.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KfAiding {
    #[default]
    None,
    /// Velocity from speed log and compass.
    SpeedHeading,
    Dvl,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KfConfig {
    /// Filter step, s; a multiple of the sensor period.
    pub period: f64,
    pub noise: KfNoiseParams,
    pub aiding: KfAiding,
    pub init_pos_var: f64,
    pub init_vel_var: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    #[serde(default)]
    pub guidance: EstimateSource,
    #[serde(default)]
    pub perception: EstimateSource,
    #[serde(default)]
    pub mode: KfMode,
    #[serde(default)]
    pub kf: Option<KfConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReasonerMode {
    #[default]
    Scripted,
    Endpoint,
}

impl std::str::FromStr for ReasonerMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "scripted" => Ok(Self::Scripted),
            "endpoint" => Ok(Self::Endpoint),
            _ => Err(format!("unknown reasoner {s:?} (scripted, endpoint)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReasonerConfig {
    #[serde(default)]
    pub mode: ReasonerMode,
    #[serde(default)]
    pub endpoint: Option<EndpointConfig>,
    #[serde(default = "default_m_st")]
    pub short_term_capacity: usize,
}

fn default_m_st() -> usize {
    crate::reasoner::memory::DEFAULT_M_ST
}

impl Default for ReasonerConfig {
    fn default() -> Self {
        Self {
            mode: ReasonerMode::Scripted,
            endpoint: None,
            short_term_capacity: default_m_st(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransportConfig {
    #[serde(default)]
    pub kind: TransportKind,
    /// Loopback port for the TCP transport; 0 picks a free one.
    #[serde(default)]
    pub port: u16,
}

/// Everything the runner needs, checked and converted to internal units.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub area: NavigableArea,
    pub limits: SolverLimits,
    pub noise: NoiseConfig,
    pub fault: Fault,
    pub cadence: Cadence,
    /// Sensor samples per filter step, when a filter runs.
    pub kf_every: Option<u64>,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.resolve()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Validate every section and build the runtime types.
    pub fn resolve(&self) -> Result<Resolved, ConfigError> {
        if !(self.duration_cap_s > 0.0 && self.duration_cap_s.is_finite()) {
            return Err(invalid("duration_cap_s must be positive"));
        }
        let cadence = self.timing.cadence()?;
        let area = self.area.build()?;
        let limits = self.limits.build()?;
        self.thresholds.validate().map_err(invalid)?;
        let g = &self.guidance;
        if !(g.r_acc > 0.0 && g.spacing > 0.0 && g.depth_step_max > 0.0) {
            return Err(invalid("guidance.r_acc, spacing and depth_step_max must be positive"));
        }
        if !(g.gains.kp.is_finite() && g.gains.kd.is_finite()) {
            return Err(invalid("guidance.gains must be finite"));
        }
        if self.plan.corners.len() < 2 {
            return Err(invalid("plan.corners needs at least 2 corners"));
        }
        if !(self.plan.radius > 0.0 && self.plan.speed.0 > 0.0) {
            return Err(invalid("plan.radius and plan.speed must be positive"));
        }
        let walk_period = (cadence.report_every / cadence.sensor_every) as u32;
        let noise = self.noise.build(self.seed, walk_period)?;
        let fault = self.fault.resolve().map_err(|e| invalid(e.to_string()))?;
        let uses_kf = self.estimator.guidance == EstimateSource::Kf || self.estimator.perception == EstimateSource::Kf;
        let kf_every = match (&self.estimator.kf, uses_kf) {
            (Some(kf), _) => {
                kf.noise.validate().map_err(|e| invalid(format!("estimator.kf: {e}")))?;
                if !(kf.init_pos_var > 0.0 && kf.init_vel_var > 0.0) {
                    return Err(invalid("estimator.kf initial variances must be positive"));
                }
                let n = ratio(kf.period, self.timing.sensor_period, "estimator.kf.period")?;
                if kf.aiding == KfAiding::Dvl && !(n * cadence.sensor_every).is_multiple_of(cadence.report_every) {
                    return Err(invalid("a DVL-aided filter must step on report ticks"));
                }
                Some(n)
            }
            (None, true) => return Err(invalid("estimator uses kf but [estimator.kf] is missing")),
            (None, false) => None,
        };
        if self.reasoner.mode == ReasonerMode::Endpoint && self.reasoner.endpoint.is_none() {
            return Err(invalid("reasoner.mode = endpoint needs [reasoner.endpoint]"));
        }
        Ok(Resolved {
            area,
            limits,
            noise,
            fault,
            cadence,
            kf_every,
        })
    }
}
