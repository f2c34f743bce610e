use super::{PolicyError, TrainConfig};
use crate::context::{AuxHead, ContextEncoder};
use crate::numgrad::nn::{Lstm, MaskCnn, Mlp, CNN_FEATURES};
use crate::numgrad::{ParamId, ParamStore, Result, Tape, Var};
use crate::rng;

pub const ACTION_DIM: usize = 2;

/// Actor head output before sampling.
#[derive(Clone, Copy, Debug)]
pub struct ActorOutput {
    pub mean: Var,
    /// Clamped to `[LOG_STD_MIN, LOG_STD_MAX]`.
    pub log_std: Var,
}

/// Per-step shared features `x` and the context `z` that produced them.
#[derive(Clone, Copy, Debug)]
pub struct TrunkOutput {
    pub x: Var,
    pub z: Var,
}

/// All modules of the agent: policy CNN and recurrence, actor, twin critics
/// with slow target copies, and (unless disabled) the context encoder and its
/// auxiliary head.
#[derive(Clone, Debug)]
pub struct PolicyNet {
    pub cnn: MaskCnn,
    pub lstm: Option<Lstm>,
    pub actor: Mlp,
    pub critics: [Mlp; 2],
    pub targets: [Mlp; 2],
    pub encoder: Option<ContextEncoder>,
    pub aux: Option<AuxHead>,
    pub d_z: usize,
    /// Width of the fused input and of the recurrent features.
    pub x_dim: usize,
    pub mask_h: usize,
    pub mask_w: usize,
}

impl PolicyNet {
    /// Builds the network and its freshly initialized parameters. Each module
    /// draws from its own seed stream, so modules shared between ablation
    /// variants start from identical weights.
    pub fn new(cfg: &TrainConfig, mask_h: usize, mask_w: usize) -> std::result::Result<(Self, ParamStore), PolicyError> {
        cfg.validate()?;
        let mut store = ParamStore::new();
        let init = |name: &str| rng::child(cfg.seed, &format!("init.{name}"), 0);
        let d_z = cfg.context.d_z;
        let x_dim = CNN_FEATURES + d_z;
        let hh = cfg.head_hidden;
        let cnn = MaskCnn::new(&mut store, "pol.cnn", mask_h, mask_w, &mut init("pol.cnn"))?;
        let lstm = if cfg.ablation.no_lstm {
            None
        } else {
            Some(Lstm::new(&mut store, "pol.lstm", x_dim, x_dim, &mut init("pol.lstm"))?)
        };
        let actor = Mlp::new(&mut store, "actor", &[x_dim, hh, hh, 2 * ACTION_DIM], &mut init("actor"))?;
        let critic_sizes = [x_dim + ACTION_DIM, hh, hh, 1];
        let critics = [
            Mlp::new(&mut store, "critic1", &critic_sizes, &mut init("critic1"))?,
            Mlp::new(&mut store, "critic2", &critic_sizes, &mut init("critic2"))?,
        ];
        let targets = [
            Mlp::new(&mut store, "target1", &critic_sizes, &mut init("critic1"))?,
            Mlp::new(&mut store, "target2", &critic_sizes, &mut init("critic2"))?,
        ];
        let (encoder, aux) = if cfg.ablation.no_context {
            (None, None)
        } else {
            (
                Some(ContextEncoder::new(&mut store, "enc", &cfg.context, mask_h, mask_w, &mut init("enc"))?),
                Some(AuxHead::new(&mut store, "aux", &cfg.context, &mut init("aux"))?),
            )
        };
        let net = Self {
            cnn,
            lstm,
            actor,
            critics,
            targets,
            encoder,
            aux,
            d_z,
            x_dim,
            mask_h,
            mask_w,
        };
        store.copy_values(&net.critic_head_ids(), &net.target_ids());
        Ok((net, store))
    }

    /// Policy CNN and recurrence: trained by the critic loss only.
    pub fn trunk_ids(&self) -> Vec<ParamId> {
        let mut ids = self.cnn.ids();
        if let Some(l) = &self.lstm {
            ids.extend(l.ids());
        }
        ids
    }

    pub fn critic_head_ids(&self) -> Vec<ParamId> {
        self.critics.iter().flat_map(Mlp::ids).collect()
    }

    pub fn target_ids(&self) -> Vec<ParamId> {
        self.targets.iter().flat_map(Mlp::ids).collect()
    }

    /// Critic optimizer group: trunk and both critic heads.
    pub fn critic_group(&self) -> Vec<ParamId> {
        let mut ids = self.trunk_ids();
        ids.extend(self.critic_head_ids());
        ids
    }

    pub fn actor_group(&self) -> Vec<ParamId> {
        self.actor.ids()
    }

    /// Encoder and auxiliary head (empty without context).
    pub fn encoder_group(&self) -> Vec<ParamId> {
        let mut ids = Vec::new();
        if let Some(e) = &self.encoder {
            ids.extend(e.ids());
        }
        if let Some(a) = &self.aux {
            ids.extend(a.ids());
        }
        ids
    }

    pub fn actor_forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<ActorOutput> {
        let out = self.actor.forward(tape, store, x)?;
        let mean = tape.slice_cols(out, 0, ACTION_DIM)?;
        let log_std = tape.slice_cols(out, ACTION_DIM, ACTION_DIM)?;
        let log_std = tape.clamp(log_std, super::LOG_STD_MIN, super::LOG_STD_MAX);
        Ok(ActorOutput { mean, log_std })
    }

    /// `Q(x, a)` → `[n, 1]` from critic `which` (0 or 1), or its slow copy.
    pub fn q(&self, tape: &mut Tape, store: &ParamStore, which: usize, target: bool, x: Var, a: Var) -> Result<Var> {
        let input = tape.concat(&[x, a], 1)?;
        let net = if target { &self.targets[which] } else { &self.critics[which] };
        net.forward(tape, store, input)
    }

    /// Checks that `store` holds exactly this network's parameters.
    pub fn check_store(&self, store: &ParamStore, cfg: &TrainConfig) -> std::result::Result<(), PolicyError> {
        let (_, fresh) = Self::new(cfg, self.mask_h, self.mask_w)?;
        if fresh.len() != store.len() {
            return Err(PolicyError::Mismatch(format!(
                "expected {} parameters, checkpoint has {}",
                fresh.len(),
                store.len()
            )));
        }
        // layers address parameters by id, so names must also line up by position
        for (id, p) in fresh.iter() {
            if store.name(id) != p.name {
                return Err(PolicyError::Mismatch(format!(
                    "parameter {} is `{}`, expected `{}`",
                    id.index(),
                    store.name(id),
                    p.name
                )));
            }
            if store.value(id).shape() != p.value.shape() {
                return Err(PolicyError::Mismatch(format!(
                    "parameter `{}` has shape {:?}, expected {:?}",
                    p.name,
                    store.value(id).shape(),
                    p.value.shape()
                )));
            }
        }
        Ok(())
    }
}
