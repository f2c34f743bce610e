//! Context-conditioned recurrent actor-critic trained offline with a
//! conservative soft actor-critic objective.

mod agent;
mod losses;
mod net;
mod train;

use serde::{Deserialize, Serialize};

pub use agent::{load_network, Agent, PolicyState};
pub use losses::{actor_loss, conservative_term, critic_loss, squashed_sample, ActorTerms, CriticBatch, CriticNoise, CriticTerms, LOG_STD_MAX, LOG_STD_MIN};
pub use net::{ActorOutput, PolicyNet, TrunkOutput, ACTION_DIM};
pub use train::{train, LogRow, SequenceBatch, TrainLog, TrainOutcome, Trainer};

use crate::context::{ContextConfig, LossWeights};

/// Which modules and losses a run disables.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Ablation {
    /// Drop the reward and height prediction losses.
    pub no_context_id: bool,
    /// Drop the temporal consistency loss.
    pub no_consistency: bool,
    /// Replace the context with zeros and drop every representation loss.
    pub no_context: bool,
    /// Replace the policy recurrence with an identity pass-through.
    pub no_lstm: bool,
}

/// The five configurations compared in the ablation table, in table order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    NoContextId,
    NoConsistency,
    NoContext,
    NoLstm,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Full,
        Variant::NoContextId,
        Variant::NoConsistency,
        Variant::NoContext,
        Variant::NoLstm,
    ];

    pub fn ablation(self) -> Ablation {
        let mut a = Ablation::default();
        match self {
            Variant::Full => {}
            Variant::NoContextId => a.no_context_id = true,
            Variant::NoConsistency => a.no_consistency = true,
            Variant::NoContext => a.no_context = true,
            Variant::NoLstm => a.no_lstm = true,
        }
        a
    }

    /// Row label in the ablation table.
    pub fn label(self) -> &'static str {
        match self {
            Variant::Full => "Full",
            Variant::NoContextId => "w/o Context Identification",
            Variant::NoConsistency => "w/o Temporal Consistency",
            Variant::NoContext => "w/o Embodiment Context Encoding",
            Variant::NoLstm => "w/o LSTM",
        }
    }

    /// Command-line flag name.
    pub fn flag(self) -> &'static str {
        match self {
            Variant::Full => "none",
            Variant::NoContextId => "no_context_id",
            Variant::NoConsistency => "no_consistency",
            Variant::NoContext => "no_context",
            Variant::NoLstm => "no_lstm",
        }
    }

    pub fn from_flag(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.flag() == s)
    }
}

/// Which action values the conservative term pushes up.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PushUp {
    /// Q of the dataset actions (standard conservative Q-learning).
    #[default]
    Data,
    /// Mean Q of the current-policy proposals.
    Policy,
}

/// Training hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub seed: u64,
    pub steps: usize,
    pub gamma: f64,
    /// Entropy coefficient (initial value when `auto_alpha` is set).
    pub alpha: f64,
    pub auto_alpha: bool,
    pub lr_alpha: f64,
    /// Uniform and policy proposals per state in the log-sum-exp estimate.
    pub cql_samples: usize,
    pub cql_weight: f64,
    /// Subtract proposal log-densities inside the log-sum-exp.
    pub cql_importance: bool,
    pub cql_push_up: PushUp,
    pub seq_len: usize,
    pub burn_in: usize,
    pub batch_size: usize,
    pub lr_critic: f64,
    pub lr_actor: f64,
    pub lr_encoder: f64,
    pub tau_target: f64,
    /// Hidden width of the actor and critic heads.
    pub head_hidden: usize,
    /// Episodes per step entering the consistency loss.
    pub cons_episodes: usize,
    /// Evenly spaced steps used to estimate an episode's mean context.
    pub cons_samples: usize,
    pub context: ContextConfig,
    pub loss_weights: LossWeights,
    pub ablation: Ablation,
    /// Write a checkpoint every this many steps (0: only at the end).
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            steps: 1200,
            gamma: 0.99,
            alpha: 0.2,
            auto_alpha: false,
            lr_alpha: 3e-4,
            cql_samples: 10,
            cql_weight: 1.0,
            cql_importance: true,
            cql_push_up: PushUp::Data,
            seq_len: 24,
            burn_in: 8,
            batch_size: 4,
            lr_critic: 3e-4,
            lr_actor: 3e-4,
            lr_encoder: 3e-4,
            tau_target: 0.005,
            head_hidden: 64,
            cons_episodes: 2,
            cons_samples: 8,
            context: ContextConfig::default(),
            loss_weights: LossWeights::default(),
            ablation: Ablation::default(),
            checkpoint_every: 0,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PolicyError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("dataset: {0}")]
    Data(String),
    #[error("non-finite {what} at step {step} (batch {batch})")]
    NonFinite { what: String, step: usize, batch: usize },
    #[error("checkpoint does not match the configuration: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Numgrad(#[from] crate::numgrad::NumgradError),
    #[error(transparent)]
    Checkpoint(#[from] crate::numgrad::CheckpointError),
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), PolicyError> {
        let bad = |m: &str| Err(PolicyError::Config(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be non-negative");
        }
        if self.auto_alpha && self.alpha <= 0.0 {
            return bad("auto_alpha needs a positive initial alpha");
        }
        if self.seq_len <= self.burn_in {
            return bad("seq_len must exceed burn_in");
        }
        if self.batch_size == 0 || self.cql_samples == 0 || self.head_hidden == 0 {
            return bad("batch_size, cql_samples and head_hidden must be positive");
        }
        if self.context.k == 0 || self.context.d_z == 0 || self.context.hidden == 0 {
            return bad("context dimensions must be positive");
        }
        if !(0.0..=1.0).contains(&self.tau_target) {
            return bad("tau_target must lie in [0, 1]");
        }
        Ok(())
    }

    /// Representation loss weights after applying the ablation flags.
    pub fn effective_weights(&self) -> LossWeights {
        let mut w = self.loss_weights;
        if self.ablation.no_context || self.ablation.no_context_id {
            w.reward = 0.0;
            w.height = 0.0;
        }
        if self.ablation.no_context || self.ablation.no_consistency {
            w.cons = 0.0;
        }
        w
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("train config serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }
}

#[cfg(test)]
mod tests;
