//! Symbolic parser for reasoner output.
//!
//! The format is a list of `key: value` fields separated by newlines or by
//! commas outside parentheses:
//!
//! ```text
//! radius: 12 m
//! speed: 1 kn
//! waypoints: (0, 0); (0, 90, 0.5)
//! return_heading: 180 deg
//! extra: rudder_bias(-11.5 deg); kf_scale(8, 0.5, 20)
//! ```
//!
//! `extra` is optional. Fragments without a colon are prose and skipped,
//! except bare `(..)` tuples or `name(..)` items right after `waypoints` or
//! `extra`, which continue that field.

use super::{OutOfSchemaAction, StrategyTheta};
use crate::geometry::wrap_angle;
use crate::guidance::Waypoint;
use crate::units::knots;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("mandatory field {0:?} is missing")]
    MissingField(&'static str),
    #[error("field {0:?} appears more than once")]
    Duplicate(String),
    #[error("field {field:?}: cannot read {value:?} ({reason})")]
    BadValue {
        field: &'static str,
        value: String,
        reason: String,
    },
    #[error("waypoint list is empty")]
    EmptyWaypoints,
    #[error("unbalanced parentheses")]
    Unbalanced,
}

/// Safe ranges the parser clips into.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParseLimits {
    pub u_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parsed {
    pub theta: StrategyTheta,
    /// One line per clip or normalization applied.
    pub diagnostics: Vec<String>,
}

const KEYS: [&str; 5] = ["radius", "speed", "waypoints", "return_heading", "extra"];

/// Split on commas and newlines that sit outside parentheses.
fn split_top_level(raw: &str) -> Result<Vec<&str>, ParseError> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in raw.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth < 0 {
                    return Err(ParseError::Unbalanced);
                }
            }
            ',' | '\n' if depth == 0 => {
                out.push(&raw[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    if depth != 0 {
        return Err(ParseError::Unbalanced);
    }
    out.push(&raw[start..]);
    Ok(out)
}

fn collect_fields(raw: &str) -> Result<BTreeMap<&'static str, String>, ParseError> {
    let mut fields: BTreeMap<&'static str, String> = BTreeMap::new();
    let mut last: Option<&'static str> = None;
    for frag in split_top_level(raw)? {
        let frag = frag.trim().trim_start_matches("- ").trim();
        if frag.is_empty() || frag.starts_with("```") {
            continue;
        }
        let keyed = frag.split_once(':').and_then(|(k, v)| {
            let k = k
                .trim()
                .trim_matches(|c| c == '*' || c == '`' || c == '"')
                .to_ascii_lowercase();
            KEYS.iter().find(|key| **key == k).map(|key| (*key, v.trim()))
        });
        match keyed {
            Some((key, value)) => {
                if fields.insert(key, value.to_string()).is_some() {
                    return Err(ParseError::Duplicate(key.to_string()));
                }
                last = Some(key);
            }
            None if frag.contains(':') => last = None,
            None => match last {
                Some(key @ ("waypoints" | "extra")) if frag.ends_with(')') => {
                    let v = fields.get_mut(key).expect("last key was inserted");
                    v.push(';');
                    v.push_str(frag);
                }
                _ => last = None,
            },
        }
    }
    Ok(fields)
}

/// Split a quantity like `12 m`, `1kn` or `-1.5e-3 rad` into value and unit.
fn quantity(s: &str) -> Option<(f64, &str)> {
    let s = s.trim();
    let end = s
        .char_indices()
        .find(|&(i, c)| !(c.is_ascii_digit() || c == '.' || c == '+' || c == '-' || ((c == 'e' || c == 'E') && i > 0)))
        .map_or(s.len(), |(i, _)| i);
    let v: f64 = s[..end].parse().ok()?;
    v.is_finite().then_some((v, s[end..].trim()))
}

fn bad(field: &'static str, value: &str, reason: impl Into<String>) -> ParseError {
    ParseError::BadValue {
        field,
        value: value.to_string(),
        reason: reason.into(),
    }
}

fn length(field: &'static str, s: &str) -> Result<f64, ParseError> {
    let (v, unit) = quantity(s).ok_or_else(|| bad(field, s, "not a finite number"))?;
    match unit {
        "" | "m" | "meter" | "meters" | "metre" | "metres" => Ok(v),
        u => Err(bad(field, s, format!("unit {u:?} is not a length"))),
    }
}

fn speed(s: &str) -> Result<f64, ParseError> {
    let (v, unit) = quantity(s).ok_or_else(|| bad("speed", s, "not a finite number"))?;
    match unit {
        "" | "m/s" | "mps" => Ok(v),
        "kn" | "kt" | "kts" | "knot" | "knots" => Ok(knots(v)),
        u => Err(bad("speed", s, format!("unit {u:?} is not a speed"))),
    }
}

fn angle(field: &'static str, s: &str) -> Result<f64, ParseError> {
    let (v, unit) = quantity(s).ok_or_else(|| bad(field, s, "not a finite number"))?;
    match unit {
        "" | "rad" | "radian" | "radians" => Ok(v),
        "deg" | "degree" | "degrees" | "°" => Ok(v.to_radians()),
        u => Err(bad(field, s, format!("unit {u:?} is not an angle"))),
    }
}

/// Items separated by `;` outside parentheses.
fn items(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            ';' if depth == 0 => {
                out.push(s[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(s[start..].trim());
    out.retain(|x| !x.is_empty());
    out
}

fn inner<'a>(field: &'static str, item: &'a str) -> Result<&'a str, ParseError> {
    item.strip_suffix(')')
        .and_then(|x| x.split_once('(').map(|(_, rest)| rest))
        .ok_or_else(|| bad(field, item, "expected a parenthesized tuple"))
}

fn waypoints(s: &str) -> Result<Vec<Waypoint>, ParseError> {
    let s = s.trim().trim_start_matches('[').trim_end_matches(']');
    let mut out = Vec::new();
    for item in items(s) {
        let parts: Vec<&str> = inner("waypoints", item)?.split(',').collect();
        let nums = parts
            .iter()
            .map(|p| length("waypoints", p))
            .collect::<Result<Vec<f64>, _>>()?;
        out.push(match nums[..] {
            [x, y] => Waypoint::new(x, y),
            [x, y, d] => Waypoint::with_depth(x, y, d),
            _ => return Err(bad("waypoints", item, "expected (x, y) or (x, y, depth)")),
        });
    }
    if out.is_empty() {
        return Err(ParseError::EmptyWaypoints);
    }
    Ok(out)
}

fn extras(s: &str) -> Result<Vec<OutOfSchemaAction>, ParseError> {
    let s = s.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("none") {
        return Ok(vec![]);
    }
    let mut out = Vec::new();
    for item in items(s) {
        let name = item.split('(').next().unwrap_or("").trim().to_ascii_lowercase();
        let args: Vec<&str> = inner("extra", item)?.split(',').collect();
        out.push(match (name.as_str(), &args[..]) {
            ("rudder_bias", [b]) => OutOfSchemaAction::RudderBias {
                bias: angle("extra", b)?,
            },
            ("kf_scale" | "covariance_scale", [q, g, d]) => {
                let f = |x: &str| {
                    quantity(x)
                        .filter(|(_, u)| u.is_empty())
                        .map(|(v, _)| v)
                        .ok_or_else(|| bad("extra", x, "scale factors are plain numbers"))
                };
                OutOfSchemaAction::KfCovarianceScale {
                    q_vel: f(q)?,
                    r_gps: f(g)?,
                    r_dvl: f(d)?,
                }
            }
            _ => return Err(bad("extra", item, "unknown action")),
        });
    }
    Ok(out)
}

/// Read a strategy from raw reasoner text.
pub fn parse_symbolic(raw: &str, limits: &ParseLimits) -> Result<Parsed, ParseError> {
    let fields = collect_fields(raw)?;
    let get = |k: &'static str| fields.get(k).ok_or(ParseError::MissingField(k));
    let radius = length("radius", get("radius")?)?;
    let mut u = speed(get("speed")?)?;
    let wps = waypoints(get("waypoints")?)?;
    let psi_raw = angle("return_heading", get("return_heading")?)?;
    let extra_actions = match fields.get("extra") {
        Some(s) => extras(s)?,
        None => vec![],
    };

    let mut diagnostics = Vec::new();
    if u > limits.u_max {
        diagnostics.push(format!("speed {u:.4} m/s clipped to {:.4} m/s", limits.u_max));
        u = limits.u_max;
    } else if u < 0.0 {
        diagnostics.push(format!("speed {u:.4} m/s clipped to 0"));
        u = 0.0;
    }
    let return_heading = wrap_angle(psi_raw);
    if return_heading != psi_raw {
        diagnostics.push(format!(
            "return heading {psi_raw:.4} rad wrapped to {return_heading:.4} rad"
        ));
    }
    Ok(Parsed {
        theta: StrategyTheta {
            radius,
            speed: u,
            waypoints: wps,
            return_heading,
            extra_actions,
        },
        diagnostics,
    })
}

/// Canonical text for a strategy. Values print in SI units with shortest
/// round-trip formatting, so parsing the text gives the same strategy back.
pub fn serialize(theta: &StrategyTheta) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "radius: {} m", theta.radius);
    let _ = writeln!(s, "speed: {} m/s", theta.speed);
    let wps: Vec<String> = theta
        .waypoints
        .iter()
        .map(|w| match w.depth {
            Some(d) => format!("({}, {}, {})", w.x, w.y, d),
            None => format!("({}, {})", w.x, w.y),
        })
        .collect();
    let _ = writeln!(s, "waypoints: {}", wps.join("; "));
    let _ = writeln!(s, "return_heading: {} rad", theta.return_heading);
    if !theta.extra_actions.is_empty() {
        let ex: Vec<String> = theta
            .extra_actions
            .iter()
            .map(|a| match a {
                OutOfSchemaAction::RudderBias { bias } => format!("rudder_bias({bias} rad)"),
                OutOfSchemaAction::KfCovarianceScale { q_vel, r_gps, r_dvl } => {
                    format!("kf_scale({q_vel}, {r_gps}, {r_dvl})")
                }
            })
            .collect();
        let _ = writeln!(s, "extra: {}", ex.join("; "));
    }
    s
}
