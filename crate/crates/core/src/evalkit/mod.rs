//! Evaluation: seeded rollouts over an embodiment grid, tracking metrics,
//! the mask-based PID baseline and ablation comparison tables.

mod ablation;
mod baseline;
mod grid;
mod metrics;

pub use ablation::{ablation_report, AblationRow, AblationTable};
pub use baseline::PidTracker;
pub use grid::{
    context_csv, context_rollout, run_episode, run_grid, run_grid_detailed, CellReport, EpisodeResult, GridReport, GridSpec,
    Summary,
};
pub use metrics::{accumulated_reward, mr_from_boxes, mr_metric, r_dev, rejudge_success, BoundingBox};

use crate::policy::{Agent, PolicyError};
use crate::tracksim::{ActionCommand, EmbodimentConfig, Mask, SimError};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("the first mask of the trace shows no target")]
    EmptyInitialMask,
    #[error("empty trace")]
    EmptyTrace,
    #[error("invalid grid: {0}")]
    Grid(String),
}

/// Anything that maps masks to commands inside an episode.
pub trait Controller {
    /// Called before every episode with the episode seed and the (hidden)
    /// embodiment; learned controllers must ignore the latter.
    fn reset(&mut self, seed: u64, embodiment: &EmbodimentConfig);
    fn act(&mut self, mask: &Mask) -> Result<ActionCommand, EvalError>;
}

/// The trained agent acting deterministically.
impl Controller for Agent {
    fn reset(&mut self, seed: u64, _: &EmbodimentConfig) {
        Agent::reset(self, seed);
    }

    fn act(&mut self, mask: &Mask) -> Result<ActionCommand, EvalError> {
        Ok(Agent::act(self, mask, true)?)
    }
}

/// Emits the same command every step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConstantController(pub ActionCommand);

impl Controller for ConstantController {
    fn reset(&mut self, _: u64, _: &EmbodimentConfig) {}

    fn act(&mut self, _: &Mask) -> Result<ActionCommand, EvalError> {
        Ok(self.0)
    }
}
