//! Columnar plot data derived from a transcript, one CSV per panel.

use crate::bus::{Payload, StateData, TypedMessage};
use crate::geometry::Vec2;
use crate::guidance::WaypointPlan;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Tracking-point spacing used to redraw reference routes, m.
const REDRAW_SPACING: f64 = 0.5;

/// File name and contents of every panel.
pub fn plot_tables(msgs: &[TypedMessage]) -> BTreeMap<&'static str, String> {
    let mut track = String::from("t,truth_x,truth_y,truth_d,meas_x,meas_y,locked\n");
    let mut depth = String::from("t,truth_d,meas_d\n");
    let mut estimate = String::from("t,est_x,est_y,e_p,e_psi,raw_flag,confirmed\n");
    let mut reference = String::from("corr,x,y\n");
    let mut latency = String::from("corr,t_request,t_strategy,t_verification,reasoner_s,solver_s,passed\n");
    let mut dvl = String::from("t,err_along,err_lateral,dvl_along,dvl_lateral\n");
    let mut requests: BTreeMap<u64, f64> = BTreeMap::new();
    let mut strategies: BTreeMap<u64, (f64, Option<WaypointPlan>)> = BTreeMap::new();
    let mut last_truth = None;
    let mut last_dvl = None;
    for msg in msgs {
        let t = msg.t_stamp;
        match &msg.payload {
            Payload::StateData(StateData::Telemetry(tel)) => {
                let (tr, m) = (tel.truth, tel.measurement);
                let _ = writeln!(
                    track,
                    "{t},{},{},{},{},{},{}",
                    tr.x, tr.y, tr.d, m.x_m, m.y_m, tel.steering_locked as u8
                );
                let _ = writeln!(depth, "{t},{},{}", tr.d, m.d_m);
                last_truth = Some(tr);
                if tel.dvl.is_some() {
                    last_dvl = tel.dvl;
                }
            }
            Payload::StateData(StateData::Agent(s)) => {
                let e = s.est_state;
                let _ = writeln!(
                    estimate,
                    "{t},{},{},{},{},{},{}",
                    e.x, e.y, s.e_p, s.e_psi, s.raw_flag as u8, s.confirmed as u8
                );
                if let (Some(tr), Some(d)) = (last_truth, last_dvl) {
                    let gap = e.pos() - tr.pos();
                    let h = Vec2::from_heading(tr.psi);
                    let _ = writeln!(
                        dvl,
                        "{t},{},{},{},{}",
                        gap.dot(h),
                        gap.dot(h.perp_left()),
                        d.vel_along,
                        d.vel_lateral
                    );
                }
            }
            Payload::PlanningRequest(_) => {
                requests.insert(msg.corr, t);
            }
            Payload::Strategy(s) => {
                let plan = s.theta.as_ref().and_then(|th| {
                    WaypointPlan::from_corners(&th.waypoints, th.radius, th.speed, 1.0, REDRAW_SPACING).ok()
                });
                strategies.insert(msg.corr, (t, plan));
            }
            Payload::VerificationResult(v) => {
                let t_req = requests.get(&msg.corr).copied().unwrap_or(f64::NAN);
                let (t_str, plan) = strategies.remove(&msg.corr).unwrap_or((f64::NAN, None));
                let _ = writeln!(
                    latency,
                    "{},{t_req},{t_str},{t},{},{},{}",
                    msg.corr,
                    t_str - t_req,
                    t - t_str,
                    v.verdict.passed as u8
                );
                if let (true, Some(plan)) = (v.verdict.passed, plan) {
                    for p in plan.polyline() {
                        let _ = writeln!(reference, "{},{},{}", msg.corr, p.x, p.y);
                    }
                }
            }
            Payload::ControlCommand(_) => {}
        }
    }
    let mut out = BTreeMap::new();
    out.insert("track.csv", track);
    out.insert("depth.csv", depth);
    out.insert("estimate.csv", estimate);
    out.insert("reference.csv", reference);
    out.insert("latency.csv", latency);
    if dvl.lines().count() > 1 {
        out.insert("dvl.csv", dvl);
    }
    out
}

/// Write every panel into `dir`, returning the paths written.
pub fn emit_plot_data(msgs: &[TypedMessage], dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (name, body) in plot_tables(msgs) {
        let p = dir.join(name);
        std::fs::write(&p, body)?;
        written.push(p);
    }
    Ok(written)
}
