use serde::{Deserialize, Serialize};

use super::embodiment::EmbodimentConfig;

/// How the target moves during an episode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TargetMotion {
    Stationary,
    /// Straight legs toward waypoints resampled in a disc around the agent.
    #[default]
    Waypoints,
    /// Forward progress with alternating lateral offsets.
    SCurve,
}

/// Per-episode scene parameters other than the embodiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    /// Target speed (m/s); ignored for stationary targets.
    pub target_speed: f64,
    pub motion: TargetMotion,
    pub obstacle_count: usize,
    pub seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            target_speed: 1.0,
            motion: TargetMotion::Waypoints,
            obstacle_count: 2,
            seed: 0,
        }
    }
}

impl Scenario {
    pub fn stationary(seed: u64) -> Self {
        Self {
            target_speed: 0.0,
            motion: TargetMotion::Stationary,
            obstacle_count: 0,
            seed,
        }
    }
}

/// Scenario file: an embodiment plus scene parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub embodiment: EmbodimentConfig,
    pub scenario: Scenario,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config serializes")
    }
}
