use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DatasetError, EpisodeRecord, PidExpert, PidGains, TransitionRecord};
use crate::rng;
use crate::tracksim::{self, ActionCommand, EmbodimentConfig, Scenario, TargetMotion};

/// Cartesian grid of camera heights and speed limits over a base embodiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbodimentGrid {
    pub heights: Vec<f64>,
    pub v_max: Vec<f64>,
    pub base: EmbodimentConfig,
}

impl Default for EmbodimentGrid {
    fn default() -> Self {
        Self {
            heights: vec![0.5, 1.0, 1.7],
            v_max: vec![0.8, 1.15, 1.5],
            base: EmbodimentConfig::default(),
        }
    }
}

impl EmbodimentGrid {
    /// Cells in height-major order.
    pub fn cells(&self) -> Vec<EmbodimentConfig> {
        self.heights
            .iter()
            .flat_map(|&h| self.v_max.iter().map(move |&v| (h, v)))
            .map(|(h, v)| self.base.clone().with_height(h).with_v_max(v))
            .collect()
    }
}

/// Parameters of a generation run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenConfig {
    pub grid: EmbodimentGrid,
    pub episodes_per_cell: usize,
    /// Standard deviation of the Gaussian added to normalized expert actions.
    pub noise: f64,
    pub seed: u64,
    pub gains: PidGains,
    pub motion: TargetMotion,
    pub obstacle_count: usize,
    /// Target speed is drawn per episode as this fraction range of `v_max`.
    pub speed_fraction: [f64; 2],
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            grid: EmbodimentGrid::default(),
            episodes_per_cell: 12,
            noise: 0.2,
            seed: 0,
            gains: PidGains::default(),
            motion: TargetMotion::Waypoints,
            obstacle_count: 2,
            speed_fraction: [0.3, 0.8],
        }
    }
}

impl GenConfig {
    fn validate(&self) -> Result<(), DatasetError> {
        let invalid = |m: &str| Err(DatasetError::Invalid(m.to_string()));
        if self.grid.heights.is_empty() || self.grid.v_max.is_empty() {
            return invalid("embodiment grid is empty");
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return invalid("noise must be a finite non-negative number");
        }
        let [lo, hi] = self.speed_fraction;
        if !(lo >= 0.0 && lo <= hi && hi.is_finite()) {
            return invalid("speed_fraction must satisfy 0 <= lo <= hi");
        }
        for e in self.grid.cells() {
            e.validate().map_err(|e| DatasetError::Invalid(e.to_string()))?;
        }
        Ok(())
    }
}

/// Runs one expert episode with clipped Gaussian action noise.
pub fn run_expert_episode(
    embodiment: &EmbodimentConfig,
    scenario: &Scenario,
    gains: PidGains,
    noise: f64,
) -> Result<EpisodeRecord, tracksim::SimError> {
    let (mut state, mut mask) = tracksim::reset(embodiment, scenario)?;
    let mut expert = PidExpert::new(gains);
    let mut noise_rng = rng::child(scenario.seed, "action-noise", 0);
    let normal = Normal::new(0.0, noise.max(f64::MIN_POSITIVE)).expect("valid std");
    let mut records = Vec::new();
    loop {
        let p = tracksim::privileged_state(&state);
        let a = expert.act(p.rho, p.theta);
        let action = if noise > 0.0 {
            ActionCommand::new(a.v_norm + normal.sample(&mut noise_rng), a.omega_norm + normal.sample(&mut noise_rng))
                .clamped()
        } else {
            a
        };
        let out = tracksim::step(&mut state, action, embodiment)?;
        records.push(TransitionRecord {
            mask: std::mem::replace(&mut mask, out.mask),
            action,
            reward: out.reward,
            done: out.terminated,
            lost: out.info.lost,
            rho: out.info.rho,
            theta: out.info.theta,
        });
        if out.terminated {
            break;
        }
    }
    Ok(EpisodeRecord {
        embodiment: embodiment.clone(),
        target_speed: scenario.target_speed,
        seed: scenario.seed,
        records,
        final_mask: mask,
    })
}

/// Generates `episodes_per_cell` expert episodes for every grid cell. Cells
/// run in parallel; the output order (cell-major, then episode) and contents
/// depend only on the configuration.
pub fn generate_dataset(config: &GenConfig) -> Result<Vec<EpisodeRecord>, DatasetError> {
    config.validate()?;
    let cells = config.grid.cells();
    let per_cell: Vec<Vec<EpisodeRecord>> = cells
        .par_iter()
        .enumerate()
        .map(|(ci, e)| {
            (0..config.episodes_per_cell)
                .map(|k| {
                    let index = (ci * config.episodes_per_cell + k) as u64;
                    let seed = rng::derive_seed(config.seed, "episode", index);
                    let [lo, hi] = config.speed_fraction;
                    let frac = if hi > lo { rng::child(seed, "speed", 0).random_range(lo..hi) } else { lo };
                    let scenario = Scenario {
                        target_speed: frac * e.v_max,
                        motion: config.motion,
                        obstacle_count: config.obstacle_count,
                        seed,
                    };
                    run_expert_episode(e, &scenario, config.gains, config.noise)
                        .map_err(|err| DatasetError::Invalid(err.to_string()))
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;
    Ok(per_cell.into_iter().flatten().collect())
}
