//! Side-by-side comparison of two run summaries.

use super::runner::RunSummary;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CompareError {
    #[error("seed mismatch ({0} vs {1}): runs are not comparable")]
    SeedMismatch(u64, u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub metric: &'static str,
    pub a: String,
    pub b: String,
    /// Reduction of b relative to a, percent, for numeric rows.
    pub reduction_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub label_a: String,
    pub label_b: String,
    pub same_trace: bool,
    pub rows: Vec<Row>,
}

/// Percent by which `b` is smaller than `a`.
pub fn reduction(a: f64, b: f64) -> Option<f64> {
    (a != 0.0 && a.is_finite() && b.is_finite()).then(|| 100.0 * (a - b) / a)
}

fn num(metric: &'static str, a: f64, b: f64) -> Row {
    Row {
        metric,
        a: format!("{a:.3}"),
        b: format!("{b:.3}"),
        reduction_pct: reduction(a, b),
    }
}

fn text(metric: &'static str, a: impl std::fmt::Debug, b: impl std::fmt::Debug) -> Row {
    Row {
        metric,
        a: format!("{a:?}"),
        b: format!("{b:?}"),
        reduction_pct: None,
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or("-".into(), |x| format!("{x:.1}"))
}

pub fn compare(a: &RunSummary, b: &RunSummary) -> Result<Comparison, CompareError> {
    if a.seed != b.seed {
        return Err(CompareError::SeedMismatch(a.seed, b.seed));
    }
    let (ma, mb) = (&a.metrics, &b.metrics);
    let rows = vec![
        num("e_p_max_m", ma.e_p_max, mb.e_p_max),
        num("peak_lateral_err_m", ma.peak_lateral_err, mb.peak_lateral_err),
        text("fault_raised", ma.fault_raised, mb.fault_raised),
        Row {
            metric: "detection_time_s",
            a: opt(ma.detection_time),
            b: opt(mb.detection_time),
            reduction_pct: None,
        },
        Row {
            metric: "time_to_trigger_s",
            a: opt(ma.time_to_trigger),
            b: opt(mb.time_to_trigger),
            reduction_pct: None,
        },
        text("solver_invocations", ma.solver_invocations, mb.solver_invocations),
        text("first_attempt_pass", ma.first_attempt_pass, mb.first_attempt_pass),
        text("hold_fallback", ma.hold_fallback, mb.hold_fallback),
        text("mission_completed", ma.mission_completed, mb.mission_completed),
        num("duration_s", ma.duration_s, mb.duration_s),
    ];
    Ok(Comparison {
        label_a: format!("{} [{}]", a.scenario, a.mode),
        label_b: format!("{} [{}]", b.scenario, b.mode),
        same_trace: ma.telemetry_digest == mb.telemetry_digest,
        rows,
    })
}

impl Comparison {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<22} {:>24} {:>24} {:>10}",
            "metric", self.label_a, self.label_b, "reduction"
        );
        for r in &self.rows {
            let red = r.reduction_pct.map_or(String::new(), |p| format!("{p:.1}%"));
            let _ = writeln!(s, "{:<22} {:>24} {:>24} {:>10}", r.metric, r.a, r.b, red);
        }
        let _ = writeln!(
            s,
            "vehicle traces {}",
            if self.same_trace { "identical" } else { "differ" }
        );
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::metrics::compute_metrics;

    fn summary(seed: u64) -> RunSummary {
        RunSummary {
            scenario: "x".into(),
            seed,
            mode: "kf_mcp".into(),
            reasoner: "scripted".into(),
            metrics: compute_metrics(&[]),
        }
    }

    #[test]
    fn refuses_seed_mismatch() {
        assert_eq!(compare(&summary(1), &summary(2)), Err(CompareError::SeedMismatch(1, 2)));
    }

    #[test]
    fn identical_runs_show_no_change() {
        let mut a = summary(4);
        a.metrics.e_p_max = 2.0;
        a.metrics.peak_lateral_err = 3.0;
        let c = compare(&a, &a.clone()).unwrap();
        assert!(c.same_trace);
        for r in &c.rows {
            assert!(r.reduction_pct.is_none_or(|p| p == 0.0), "{r:?}");
        }
    }

    #[test]
    fn reduction_oracle() {
        assert_eq!(reduction(3.3, 0.8).map(|p| (p * 100.0).round() / 100.0), Some(75.76));
        assert_eq!(reduction(0.0, 1.0), None);
    }
}
