//! Unit conversions. Everything internal is SI: meters, m/s, radians.

use serde::{Deserialize, Deserializer, Serialize};

/// One knot in m/s.
pub const KNOT: f64 = 0.514444;

pub fn knots(v: f64) -> f64 {
    v * KNOT
}

pub fn deg(v: f64) -> f64 {
    v.to_radians()
}

/// A speed read from config: a bare number is m/s, strings carry a unit
/// suffix (`"2 kn"`, `"1.0 m/s"`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Speed(pub f64);

impl Speed {
    pub fn parse(s: &str) -> Result<Self, String> {
        let s = s.trim();
        let (num, unit) = match s.find(|c: char| c.is_ascii_alphabetic()) {
            Some(i) => (s[..i].trim(), s[i..].trim()),
            None => (s, "m/s"),
        };
        let v: f64 = num.parse().map_err(|_| format!("bad speed value {num:?}"))?;
        let mps = match unit {
            "kn" | "kt" | "knot" | "knots" => knots(v),
            "m/s" | "mps" => v,
            other => return Err(format!("unknown speed unit {other:?}")),
        };
        Ok(Speed(mps))
    }
}

impl<'de> Deserialize<'de> for Speed {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Speed(v)),
            Raw::Text(s) => Speed::parse(&s).map_err(serde::de::Error::custom),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn speed_suffixes() {
        assert_eq!(Speed::parse("2 kn").unwrap().0, 2.0 * KNOT);
        assert_eq!(Speed::parse("1.0 m/s").unwrap().0, 1.0);
        assert_eq!(Speed::parse("3").unwrap().0, 3.0);
        assert!(Speed::parse("3 furlongs").is_err());
        assert!(Speed::parse("fast kn").is_err());
    }
}
