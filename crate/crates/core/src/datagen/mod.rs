//! Offline dataset generation with a scripted PID expert over a grid of
//! embodiments, the binary dataset container and in-episode sequence sampling.

mod expert;
pub mod format;
mod generate;
mod sampler;

use serde::{Deserialize, Serialize};

pub use expert::{PidExpert, PidGains};
pub use format::{DATASET_MAGIC, DATASET_VERSION};
pub use generate::{generate_dataset, run_expert_episode, EmbodimentGrid, GenConfig};
pub use sampler::{SequenceSampler, SequenceSlice};

use crate::codec::Truncated;
use crate::tracksim::{reward, ActionCommand, EmbodimentConfig, Mask};

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("not a dataset file (bad magic)")]
    BadMagic,
    #[error("dataset format version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("dataset truncated: {0}")]
    Truncated(#[from] Truncated),
    #[error("dataset checksum mismatch")]
    Checksum,
    #[error("dataset is malformed: {0}")]
    Malformed(String),
    #[error("dataset i/o on {0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error("invalid generation request: {0}")]
    Invalid(String),
}

/// One step: the observation before acting, the action taken and what
/// followed. `rho`/`theta` are the relative pose after the step, from which
/// `reward` is computed.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionRecord {
    pub mask: Mask,
    pub action: ActionCommand,
    pub reward: f64,
    pub done: bool,
    pub lost: bool,
    pub rho: f64,
    pub theta: f64,
}

/// A full episode with its embodiment label. `final_mask` is the observation
/// after the last action.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeRecord {
    pub embodiment: EmbodimentConfig,
    pub target_speed: f64,
    pub seed: u64,
    pub records: Vec<TransitionRecord>,
    pub final_mask: Mask,
}

impl EpisodeRecord {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Observation at step `t` (`t == len()` gives the final mask).
    pub fn mask(&self, t: usize) -> &Mask {
        if t == self.records.len() {
            &self.final_mask
        } else {
            &self.records[t].mask
        }
    }

    pub fn total_reward(&self) -> f64 {
        self.records.iter().map(|r| r.reward).sum()
    }

    /// Structural checks: non-empty, exactly one `done` at the end, actions in
    /// range.
    pub fn check(&self) -> Result<(), DatasetError> {
        let bad = |m: String| Err(DatasetError::Malformed(m));
        if self.records.is_empty() {
            return bad(format!("episode {} has no records", self.seed));
        }
        let dones = self.records.iter().filter(|r| r.done).count();
        if dones != 1 || !self.records.last().is_some_and(|r| r.done) {
            return bad(format!("episode {} must have exactly one done flag, on its last record", self.seed));
        }
        if let Some(r) = self
            .records
            .iter()
            .find(|r| !(r.action.v_norm.abs() <= 1.0 && r.action.omega_norm.abs() <= 1.0))
        {
            return bad(format!("action {:?} outside [-1, 1]", r.action));
        }
        Ok(())
    }

    /// Largest difference between a stored reward and the reward recomputed
    /// from the logged pose.
    pub fn max_reward_error(&self) -> f64 {
        self.records
            .iter()
            .map(|r| (r.reward - reward(r.rho, r.theta)).abs())
            .fold(0.0, f64::max)
    }
}

/// Summary written next to a dataset file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub episode_count: usize,
    pub total_steps: usize,
    pub generation_seed: u64,
    pub episodes_per_cell: usize,
    pub noise: f64,
    pub grid: EmbodimentGrid,
    pub gains: PidGains,
    pub success_episodes: usize,
    pub mean_step_reward: f64,
    pub sha256: String,
}

impl DatasetManifest {
    pub fn describe(config: &GenConfig, episodes: &[EpisodeRecord], bytes: &[u8]) -> Self {
        let total_steps: usize = episodes.iter().map(EpisodeRecord::len).sum();
        let reward_sum: f64 = episodes.iter().map(EpisodeRecord::total_reward).sum();
        Self {
            format_version: DATASET_VERSION,
            episode_count: episodes.len(),
            total_steps,
            generation_seed: config.seed,
            episodes_per_cell: config.episodes_per_cell,
            noise: config.noise,
            grid: config.grid.clone(),
            gains: config.gains,
            success_episodes: episodes.iter().filter(|e| e.len() as u32 == crate::tracksim::MAX_STEPS).count(),
            mean_step_reward: if total_steps == 0 { 0.0 } else { reward_sum / total_steps as f64 },
            sha256: crate::codec::sha256_hex(bytes),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }
}

/// Path of the manifest that accompanies a dataset file.
pub fn manifest_path(dataset: &std::path::Path) -> std::path::PathBuf {
    let mut name = dataset.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.toml");
    dataset.with_file_name(name)
}

/// Writes the dataset and its manifest; returns the manifest.
pub fn save_dataset(
    path: impl AsRef<std::path::Path>,
    config: &GenConfig,
    episodes: &[EpisodeRecord],
) -> Result<DatasetManifest, DatasetError> {
    let path = path.as_ref();
    let bytes = format::save(path, episodes)?;
    let manifest = DatasetManifest::describe(config, episodes, &bytes);
    let mpath = manifest_path(path);
    std::fs::write(&mpath, manifest.to_toml()).map_err(|e| DatasetError::Io(mpath.display().to_string(), e))?;
    Ok(manifest)
}

pub fn load_dataset(path: impl AsRef<std::path::Path>) -> Result<Vec<EpisodeRecord>, DatasetError> {
    format::load(path)
}

#[cfg(test)]
mod tests;
