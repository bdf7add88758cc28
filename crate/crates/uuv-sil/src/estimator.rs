//! Planar constant-velocity Kalman filter over (x, y, vx, vy) fusing GPS
//! position with DVL (or any other) velocity observations.

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Vector2, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KfNoiseParams {
    /// Velocity process noise density, (m/s)²/s.
    pub q_vel: f64,
    /// GPS position variance, m².
    pub r_gps: f64,
    /// DVL velocity variance, (m/s)².
    pub r_dvl: f64,
}

impl KfNoiseParams {
    pub fn validate(&self) -> Result<(), EstimatorError> {
        for (name, v) in [("q_vel", self.q_vel), ("r_gps", self.r_gps), ("r_dvl", self.r_dvl)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(EstimatorError::BadParam(name, v));
            }
        }
        Ok(())
    }
}

/// Element-wise scaling of (q_vel, r_gps, r_dvl).
pub fn rescale_covariances(params: KfNoiseParams, factors: (f64, f64, f64)) -> KfNoiseParams {
    KfNoiseParams {
        q_vel: params.q_vel * factors.0,
        r_gps: params.r_gps * factors.1,
        r_dvl: params.r_dvl * factors.2,
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("covariance lost positive-definiteness after {0}")]
    NotPositiveDefinite(&'static str),
    #[error("noise parameter {0} must be positive and finite, got {1}")]
    BadParam(&'static str, f64),
    #[error("time step must be positive, got {0}")]
    BadStep(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KfState {
    pub mean: Vector4<f64>,
    pub cov: Matrix4<f64>,
}

impl KfState {
    pub fn new(pos: (f64, f64), vel: (f64, f64), pos_var: f64, vel_var: f64) -> Self {
        Self {
            mean: Vector4::new(pos.0, pos.1, vel.0, vel.1),
            cov: Matrix4::from_diagonal(&Vector4::new(pos_var, pos_var, vel_var, vel_var)),
        }
    }

    pub fn position(&self) -> (f64, f64) {
        (self.mean[0], self.mean[1])
    }

    pub fn velocity(&self) -> (f64, f64) {
        (self.mean[2], self.mean[3])
    }

    fn check(self, stage: &'static str) -> Result<Self, EstimatorError> {
        let sym = (self.cov - self.cov.transpose()).abs().max();
        if sym > 1e-9 || self.cov.cholesky().is_none() || !self.mean.iter().all(|v| v.is_finite()) {
            return Err(EstimatorError::NotPositiveDefinite(stage));
        }
        Ok(self)
    }
}

/// Constant-velocity prediction over `dt`.
pub fn kf_predict(state: KfState, params: &KfNoiseParams, dt: f64) -> Result<KfState, EstimatorError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(EstimatorError::BadStep(dt));
    }
    let mut f = Matrix4::identity();
    f[(0, 2)] = dt;
    f[(1, 3)] = dt;
    let q = Matrix4::from_diagonal(&Vector4::new(0.0, 0.0, params.q_vel * dt, params.q_vel * dt));
    let cov = f * state.cov * f.transpose() + q;
    KfState {
        mean: f * state.mean,
        cov: (cov + cov.transpose()) * 0.5,
    }
    .check("predict")
}

/// Joseph-form update on a 2-vector observation.
fn update(
    state: KfState,
    h: Matrix2x4<f64>,
    z: Vector2<f64>,
    r: Matrix2<f64>,
    stage: &'static str,
) -> Result<KfState, EstimatorError> {
    let s = h * state.cov * h.transpose() + r;
    let s_inv = s.try_inverse().ok_or(EstimatorError::NotPositiveDefinite(stage))?;
    let k = state.cov * h.transpose() * s_inv;
    let mean = state.mean + k * (z - h * state.mean);
    let ikh = Matrix4::identity() - k * h;
    let cov = ikh * state.cov * ikh.transpose() + k * r * k.transpose();
    KfState {
        mean,
        cov: (cov + cov.transpose()) * 0.5,
    }
    .check(stage)
}

pub fn kf_update_gps(state: KfState, z: (f64, f64), r_gps: f64) -> Result<KfState, EstimatorError> {
    let h = Matrix2x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0);
    update(
        state,
        h,
        Vector2::new(z.0, z.1),
        Matrix2::identity() * r_gps,
        "gps update",
    )
}

/// World-frame velocity observation with isotropic variance `r_dvl`.
pub fn kf_update_dvl(state: KfState, z: (f64, f64), r_dvl: f64) -> Result<KfState, EstimatorError> {
    kf_update_velocity(state, z, Matrix2::identity() * r_dvl)
}

/// World-frame velocity observation with a full 2×2 covariance.
pub fn kf_update_velocity(state: KfState, z: (f64, f64), r: Matrix2<f64>) -> Result<KfState, EstimatorError> {
    let h = Matrix2x4::new(0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
    update(state, h, Vector2::new(z.0, z.1), r, "velocity update")
}

/// Covariance of a velocity built from speed `u` (σ_u) and heading `psi`
/// (σ_ψ), linearized about the measured values.
pub fn speed_heading_covariance(u: f64, psi: f64, sigma_u: f64, sigma_psi: f64) -> Matrix2<f64> {
    let (s, c) = psi.sin_cos();
    let rot = Matrix2::new(c, -s, s, c);
    let along = sigma_u * sigma_u;
    let cross = (u * sigma_psi).powi(2);
    rot * Matrix2::new(along, 0.0, 0.0, cross) * rot.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn params() -> KfNoiseParams {
        KfNoiseParams {
            q_vel: 0.01,
            r_gps: 1.0,
            r_dvl: 0.25,
        }
    }

    #[test]
    fn predict_constant_velocity() {
        let s = KfState::new((0.0, 0.0), (1.0, 0.0), 1.0, 1.0);
        let p = kf_predict(s, &params(), 2.0).unwrap();
        assert_eq!(p.mean, Vector4::new(2.0, 0.0, 1.0, 0.0));
        assert!(p.cov.trace() >= s.cov.trace());
    }

    #[test]
    fn zero_innovation_keeps_mean_and_shrinks_cov() {
        let s = KfState::new((3.0, 4.0), (1.0, 0.0), 4.0, 1.0);
        let u = kf_update_gps(s, (3.0, 4.0), 1.0).unwrap();
        assert_eq!(u.mean, s.mean);
        assert!(u.cov[(0, 0)] < s.cov[(0, 0)]);
        assert!(u.cov.trace() < s.cov.trace());
    }

    #[test]
    fn huge_dvl_variance_is_a_no_op() {
        let s = KfState::new((3.0, 4.0), (1.0, 0.5), 4.0, 1.0);
        let u = kf_update_dvl(s, (5.0, -2.0), 0.25 * 1e6 * 1e6).unwrap();
        assert!((u.mean - s.mean).abs().max() < 1e-6);
    }

    #[test]
    fn exact_measurements_converge() {
        // moving target, nearly noiseless filter
        let p = KfNoiseParams {
            q_vel: 1e-12,
            r_gps: 1e-9,
            r_dvl: 1e-9,
        };
        let mut s = KfState::new((5.0, -5.0), (0.0, 0.0), 100.0, 10.0);
        let mut prev = f64::INFINITY;
        for k in 1..20 {
            let t = k as f64;
            s = kf_predict(s, &p, 1.0).unwrap();
            s = kf_update_gps(s, (t, 2.0 * t), p.r_gps).unwrap();
            s = kf_update_dvl(s, (1.0, 2.0), p.r_dvl).unwrap();
            let err = ((s.mean[0] - t).powi(2) + (s.mean[1] - 2.0 * t).powi(2)).sqrt();
            assert!(err <= prev + 1e-12);
            prev = err;
        }
        assert!(prev < 1e-6);
    }

    #[test]
    fn rescale_identity_and_multiplicative() {
        let p = params();
        assert_eq!(rescale_covariances(p, (1.0, 1.0, 1.0)), p);
        let twice = rescale_covariances(rescale_covariances(p, (2.0, 1.0, 1.0)), (2.0, 1.0, 1.0));
        assert_eq!(twice, rescale_covariances(p, (4.0, 1.0, 1.0)));
        let m = rescale_covariances(p, (8.0, 0.5, 20.0));
        assert_abs_diff_eq!(m.q_vel, 0.08);
        assert_abs_diff_eq!(m.r_gps, 0.5);
        assert_abs_diff_eq!(m.r_dvl, 5.0);
    }

    #[test]
    fn speed_heading_covariance_is_rotated() {
        let r = speed_heading_covariance(2.0, std::f64::consts::FRAC_PI_2, 0.1, 0.01);
        assert_abs_diff_eq!(r[(1, 1)], 0.01, epsilon = 1e-15);
        assert_abs_diff_eq!(r[(0, 0)], 0.0004, epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn covariance_stays_spd(
            zs in proptest::collection::vec((-50.0f64..50.0, -50.0f64..50.0, -3.0f64..3.0, -3.0f64..3.0), 1..60),
            q in 1e-4f64..1.0, rg in 1e-3f64..100.0, rd in 1e-3f64..100.0, dt in 0.05f64..3.0,
        ) {
            let p = KfNoiseParams { q_vel: q, r_gps: rg, r_dvl: rd };
            let mut s = KfState::new((0.0, 0.0), (0.0, 0.0), 1.0, 0.25);
            for (x, y, vx, vy) in zs {
                s = kf_predict(s, &p, dt).unwrap();
                s = kf_update_gps(s, (x, y), p.r_gps).unwrap();
                s = kf_update_dvl(s, (vx, vy), p.r_dvl).unwrap();
                prop_assert!((s.cov - s.cov.transpose()).abs().max() <= 1e-9);
                prop_assert!(s.cov.symmetric_eigenvalues().iter().all(|e| *e > 0.0));
            }
        }
    }
}
