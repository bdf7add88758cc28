//! Scenario configs shipped with the crate.

use super::config::{ConfigError, ScenarioConfig};

pub const BUNDLED: &[(&str, &str)] = &[
    ("exp_n", include_str!("../../scenarios/exp_n.toml")),
    ("exp_f", include_str!("../../scenarios/exp_f.toml")),
    (
        "sim_steering_lock",
        include_str!("../../scenarios/sim_steering_lock.toml"),
    ),
    ("sim_surface", include_str!("../../scenarios/sim_surface.toml")),
    (
        "sim_crosscurrent",
        include_str!("../../scenarios/sim_crosscurrent.toml"),
    ),
    ("sim_dvl", include_str!("../../scenarios/sim_dvl.toml")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(n, _)| *n)
}

pub fn text(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

/// Load a bundled config by name.
pub fn load(name: &str) -> Result<ScenarioConfig, ConfigError> {
    let t = text(name).ok_or_else(|| {
        ConfigError::Invalid(format!(
            "no bundled scenario {name:?} (have: {})",
            names().collect::<Vec<_>>().join(", ")
        ))
    })?;
    ScenarioConfig::from_toml(t)
}
