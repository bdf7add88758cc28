//! Sensor noise: white Gaussian per channel, a clipped random-walk lateral
//! drift on position, a non-negative random-walk depth offset, and the DVL
//! with its optional lateral bias fault.
//!
//! Every channel draws from its own ChaCha stream seeded from the run seed,
//! so enabling one channel never shifts another channel's draws.

use crate::dynamics::{Fault, TruthAugmentation, VehicleState};
use crate::geometry::wrap_angle;
use crate::units::KNOT;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub sigma_psi: f64,
    pub sigma_u: f64,
    pub sigma_d: f64,
    pub lat_drift_max: f64,
    pub lat_walk: f64,
    pub lat_white: f64,
    pub depth_bias_max: f64,
    pub depth_walk: f64,
    pub depth_white: f64,
    /// Samples per random-walk step (1 = walk on every sample).
    #[serde(default = "one")]
    pub walk_period: u32,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> u32 {
    1
}

impl NoiseConfig {
    pub fn zero(seed: u64) -> Self {
        Self {
            sigma_x: 0.0,
            sigma_y: 0.0,
            sigma_psi: 0.0,
            sigma_u: 0.0,
            sigma_d: 0.0,
            lat_drift_max: 0.0,
            lat_walk: 0.0,
            lat_white: 0.0,
            depth_bias_max: 0.0,
            depth_walk: 0.0,
            depth_white: 0.0,
            walk_period: 1,
            seed,
        }
    }

    /// Field instruments. GPS ±10 m and speed log ±1 kn are read as 3σ
    /// bounds; compass σ = 1°, depth σ = 0.01 m.
    pub fn lake(seed: u64) -> Self {
        Self {
            sigma_x: 10.0 / 3.0,
            sigma_y: 10.0 / 3.0,
            sigma_psi: 1f64.to_radians(),
            sigma_u: KNOT / 3.0,
            sigma_d: 0.01,
            ..Self::zero(seed)
        }
    }

    /// Simulation drift model. `walk_period` is the number of sensor
    /// samples per report cycle.
    pub fn sim(seed: u64, walk_period: u32) -> Self {
        Self {
            lat_drift_max: 3.0,
            lat_walk: 0.25,
            lat_white: 0.08,
            depth_bias_max: 0.35,
            depth_walk: 0.04,
            depth_white: 0.02,
            walk_period,
            ..Self::zero(seed)
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let fields = [
            ("sigma_x", self.sigma_x),
            ("sigma_y", self.sigma_y),
            ("sigma_psi", self.sigma_psi),
            ("sigma_u", self.sigma_u),
            ("sigma_d", self.sigma_d),
            ("lat_drift_max", self.lat_drift_max),
            ("lat_walk", self.lat_walk),
            ("lat_white", self.lat_white),
            ("depth_bias_max", self.depth_bias_max),
            ("depth_walk", self.depth_walk),
            ("depth_white", self.depth_white),
        ];
        for (name, v) in fields {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(format!("noise.{name} must be finite and >= 0, got {v}"));
            }
        }
        if self.walk_period == 0 {
            return Err("noise.walk_period must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub x_m: f64,
    pub y_m: f64,
    pub psi_m: f64,
    pub u_m: f64,
    pub d_m: f64,
    pub rudder_ok_m: bool,
    pub t_stamp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DvlMeasurement {
    /// Body-frame velocity over ground, positive to port (left), m/s.
    pub vel_lateral: f64,
    pub vel_along: f64,
    pub t_stamp: f64,
}

#[derive(Debug, Clone, Copy)]
enum Channel {
    X,
    Y,
    Psi,
    U,
    D,
    LatWalk,
    LatWhite,
    DepthWalk,
    DepthWhite,
    DvlLateral,
    DvlAlong,
}

const CHANNELS: usize = 11;

/// Per-run noise generator state.
#[derive(Debug, Clone)]
pub struct NoiseState {
    rngs: Vec<ChaCha8Rng>,
    pub lat_drift: f64,
    pub depth_offset: f64,
    samples: u64,
}

impl NoiseState {
    pub fn new(seed: u64) -> Self {
        let rngs = (0..CHANNELS)
            .map(|ch| {
                let mut r = ChaCha8Rng::seed_from_u64(seed);
                r.set_stream(ch as u64 + 1);
                r
            })
            .collect();
        Self {
            rngs,
            lat_drift: 0.0,
            depth_offset: 0.0,
            samples: 0,
        }
    }

    fn normal(&mut self, ch: Channel, sigma: f64) -> f64 {
        if sigma == 0.0 {
            return 0.0;
        }
        let z: f64 = StandardNormal.sample(&mut self.rngs[ch as usize]);
        sigma * z
    }
}

/// Draw one measurement of `truth` at time `t`.
pub fn sample(truth: &VehicleState, cfg: &NoiseConfig, st: &mut NoiseState, t: f64) -> Measurement {
    if st.samples.is_multiple_of(cfg.walk_period.max(1) as u64) {
        let step = st.normal(Channel::LatWalk, cfg.lat_walk);
        st.lat_drift = (st.lat_drift + step).clamp(-cfg.lat_drift_max, cfg.lat_drift_max);
        let step = st.normal(Channel::DepthWalk, cfg.depth_walk);
        st.depth_offset = (st.depth_offset + step).clamp(0.0, cfg.depth_bias_max);
    }
    st.samples += 1;
    let (s, c) = truth.psi.sin_cos();
    let lateral = st.lat_drift + st.normal(Channel::LatWhite, cfg.lat_white);
    let x_m = truth.x - s * lateral + st.normal(Channel::X, cfg.sigma_x);
    let y_m = truth.y + c * lateral + st.normal(Channel::Y, cfg.sigma_y);
    let psi_m = wrap_angle(truth.psi + st.normal(Channel::Psi, cfg.sigma_psi));
    let u_m = truth.u + st.normal(Channel::U, cfg.sigma_u);
    let d_noise = st.normal(Channel::D, cfg.sigma_d) + st.normal(Channel::DepthWhite, cfg.depth_white);
    let d_m = (truth.d + st.depth_offset + d_noise).max(0.0);
    Measurement {
        x_m,
        y_m,
        psi_m,
        u_m,
        d_m,
        rudder_ok_m: truth.rudder_ok,
        t_stamp: t,
    }
}

/// Truth velocity over ground in the body frame: (along, lateral-to-port).
pub fn body_ground_velocity(truth: &VehicleState, aug: &TruthAugmentation) -> (f64, f64) {
    let (cs, cc) = aug.current_dir.sin_cos();
    let (cx, cy) = (aug.current_lateral * cc, aug.current_lateral * cs);
    let (s, c) = truth.psi.sin_cos();
    let along = truth.u + cx * c + cy * s;
    let lateral = aug.v - cx * s + cy * c;
    (along, lateral)
}

/// Draw one DVL reading at report step `step_k`.
///
/// Without a DVL fault the reading is exact.
pub fn sample_dvl(truth_vel: (f64, f64), fault: &Fault, step_k: u64, st: &mut NoiseState, t: f64) -> DvlMeasurement {
    let (along, lateral) = truth_vel;
    let (sigma, bias) = match *fault {
        Fault::DvlBias {
            bias,
            sigma,
            trigger_step,
        } => (sigma, if step_k >= trigger_step { bias } else { 0.0 }),
        _ => (0.0, 0.0),
    };
    DvlMeasurement {
        vel_lateral: lateral + bias + st.normal(Channel::DvlLateral, sigma),
        vel_along: along + st.normal(Channel::DvlAlong, sigma),
        t_stamp: t,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec2;
    use proptest::prelude::*;

    fn truth() -> VehicleState {
        VehicleState {
            u: 2.0,
            d: 0.4,
            ..VehicleState::at(Vec2::new(3.0, 4.0), 0.5)
        }
    }

    #[test]
    fn zero_noise_is_identity() {
        let cfg = NoiseConfig::zero(7);
        let mut st = NoiseState::new(7);
        let m = sample(&truth(), &cfg, &mut st, 1.5);
        let t = truth();
        assert_eq!((m.x_m, m.y_m, m.psi_m, m.u_m, m.d_m), (t.x, t.y, t.psi, t.u, t.d));
        assert!(m.rudder_ok_m);
        assert_eq!(m.t_stamp, 1.5);
    }

    #[test]
    fn same_seed_same_stream() {
        let cfg = NoiseConfig::sim(11, 1);
        let mut a = NoiseState::new(11);
        let mut b = NoiseState::new(11);
        for k in 0..500 {
            let t = k as f64;
            assert_eq!(sample(&truth(), &cfg, &mut a, t), sample(&truth(), &cfg, &mut b, t));
        }
        let mut c = NoiseState::new(12);
        assert_ne!(sample(&truth(), &cfg, &mut a, 0.0), sample(&truth(), &cfg, &mut c, 0.0));
    }

    #[test]
    fn enabling_a_channel_leaves_others_untouched() {
        let base = NoiseConfig::lake(3);
        let extra = NoiseConfig {
            depth_white: 0.5,
            ..base
        };
        let mut a = NoiseState::new(3);
        let mut b = NoiseState::new(3);
        for _ in 0..100 {
            let ma = sample(&truth(), &base, &mut a, 0.0);
            let mb = sample(&truth(), &extra, &mut b, 0.0);
            assert_eq!((ma.x_m, ma.y_m, ma.psi_m, ma.u_m), (mb.x_m, mb.y_m, mb.psi_m, mb.u_m));
        }
    }

    #[test]
    fn depth_offset_mean_is_positive_and_bounded() {
        let cfg = NoiseConfig {
            sigma_d: 0.0,
            ..NoiseConfig::sim(5, 1)
        };
        let mut st = NoiseState::new(5);
        let t = truth();
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let m = sample(&t, &cfg, &mut st, 0.0);
            assert!(st.depth_offset >= 0.0 && st.depth_offset <= 0.35);
            sum += m.d_m - t.d;
        }
        let mean = sum / n as f64;
        assert!(mean > 0.0 && mean <= 0.35, "mean offset {mean}");
    }

    #[test]
    fn walk_advances_once_per_period() {
        let cfg = NoiseConfig {
            lat_white: 0.0,
            depth_white: 0.0,
            ..NoiseConfig::sim(9, 20)
        };
        let mut st = NoiseState::new(9);
        let mut drifts = vec![];
        for _ in 0..60 {
            sample(&truth(), &cfg, &mut st, 0.0);
            drifts.push(st.lat_drift);
        }
        for chunk in drifts.chunks(20) {
            assert!(chunk.iter().all(|d| *d == chunk[0]));
        }
        assert_ne!(drifts[0], drifts[20]);
    }

    #[test]
    fn dvl_bias_switches_on_at_trigger() {
        let fault = Fault::DvlBias {
            bias: 0.8,
            sigma: 0.0,
            trigger_step: 15,
        };
        let mut st = NoiseState::new(1);
        assert_eq!(sample_dvl((2.0, 0.1), &fault, 14, &mut st, 0.0).vel_lateral, 0.1);
        assert_eq!(sample_dvl((2.0, 0.1), &fault, 15, &mut st, 0.0).vel_lateral, 0.1 + 0.8);
    }

    #[test]
    fn dvl_biased_mean_converges() {
        let fault = Fault::DvlBias {
            bias: 0.8,
            sigma: 0.5,
            trigger_step: 15,
        };
        let mut st = NoiseState::new(21);
        let n = 10_000;
        let mean = (0..n)
            .map(|_| sample_dvl((2.0, 0.0), &fault, 20, &mut st, 0.0).vel_lateral)
            .sum::<f64>()
            / n as f64;
        assert!((mean - 0.8).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn body_velocity_includes_current() {
        let aug = TruthAugmentation {
            current_lateral: 0.3,
            current_dir: std::f64::consts::PI,
            ..Default::default()
        };
        let s = VehicleState {
            u: 1.0,
            ..VehicleState::at(Vec2::ZERO, std::f64::consts::FRAC_PI_2)
        };
        let (along, lat) = body_ground_velocity(&s, &aug);
        assert!((along - 1.0).abs() < 1e-12);
        // heading +y, current toward -x: that is to port
        assert!((lat - 0.3).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn drift_and_offset_stay_clipped(seed in 0u64..1000, n in 1usize..400) {
            let cfg = NoiseConfig::sim(seed, 1);
            let mut st = NoiseState::new(seed);
            for _ in 0..n {
                let m = sample(&truth(), &cfg, &mut st, 0.0);
                prop_assert!(st.lat_drift.abs() <= 3.0);
                prop_assert!(st.depth_offset >= 0.0 && st.depth_offset <= 0.35);
                prop_assert!(m.d_m >= 0.0);
            }
        }

        #[test]
        fn rudder_flag_is_exact(seed in 0u64..100, ok in any::<bool>()) {
            let cfg = NoiseConfig::lake(seed);
            let mut st = NoiseState::new(seed);
            let t = VehicleState { rudder_ok: ok, ..truth() };
            prop_assert_eq!(sample(&t, &cfg, &mut st, 0.0).rudder_ok_m, ok);
        }
    }
}
