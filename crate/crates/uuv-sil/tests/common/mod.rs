//! Helpers shared by the integration tests: config loading, transcript
//! queries and independent geometry oracles.
#![allow(dead_code)]

use uuv_sil::bus::{decode, Payload, TypedMessage};
use uuv_sil::geometry::{FilletPath, Vec2};
use uuv_sil::reasoner::StrategyTheta;
use uuv_sil::scenario::{bundled, RunResult, ScenarioConfig};

pub fn config(name: &str, seed: u64) -> ScenarioConfig {
    let mut cfg = bundled::load(name).unwrap_or_else(|e| panic!("{name}: {e}"));
    cfg.seed = seed;
    cfg
}

pub fn messages(r: &RunResult) -> Vec<TypedMessage> {
    r.transcript
        .iter()
        .map(|l| decode(l).unwrap_or_else(|e| panic!("undecodable line {l:?}: {e}")))
        .collect()
}

/// Parsed strategies in transcript order, with their correlation ids.
pub fn strategies(msgs: &[TypedMessage]) -> Vec<(u64, f64, StrategyTheta)> {
    msgs.iter()
        .filter_map(|m| match &m.payload {
            Payload::Strategy(s) => s.theta.clone().map(|t| (m.corr, m.t_stamp, t)),
            _ => None,
        })
        .collect()
}

/// Points along the filleted route of a strategy, at most 0.25 m apart.
pub fn route_points(theta: &StrategyTheta) -> Vec<Vec2> {
    let path = FilletPath::build(&theta.positions(), |_| theta.radius).expect("route builds");
    path.densify(0.25).into_iter().map(|(p, _)| p).collect()
}

pub fn seg_dist(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    let t = if len2 == 0.0 {
        0.0
    } else {
        ((p - a).dot(ab) / len2).clamp(0.0, 1.0)
    };
    (a + ab * t).dist(p)
}

/// Distance from `p` to a densified route, brute force over its chords.
pub fn dist_to_route(p: Vec2, pts: &[Vec2]) -> f64 {
    pts.windows(2)
        .map(|w| seg_dist(p, w[0], w[1]))
        .fold(f64::INFINITY, f64::min)
}
