use std::collections::VecDeque;

use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use super::net::{PolicyNet, ACTION_DIM};
use super::train::CheckpointMeta;
use super::{PolicyError, TrainConfig};
use crate::context::{masks_tensor, Window};
use crate::numgrad::{Checkpoint, ParamStore, Tape, Tensor};
use crate::rng::Rng;
use crate::tracksim::{ActionCommand, Mask};

/// Configuration, network layout and parameters stored in a checkpoint
/// (without optimizer state or the entropy temperature).
pub fn load_network(ckpt: &Checkpoint) -> Result<(TrainConfig, PolicyNet, ParamStore), PolicyError> {
    let meta: CheckpointMeta =
        toml::from_str(&ckpt.meta).map_err(|e| PolicyError::Mismatch(format!("unreadable checkpoint metadata: {e}")))?;
    let (net, _) = PolicyNet::new(&meta.config, meta.mask_h, meta.mask_w)?;
    let mut store = ckpt.store.clone();
    // the temperature is appended last and is not part of the network
    if let Some(id) = store.id("log_alpha") {
        if id.index() + 1 == store.len() {
            let mut pruned = ParamStore::new();
            for (_, p) in store.iter().filter(|(pid, _)| *pid != id) {
                pruned.insert(p.name.clone(), p.value.clone())?;
            }
            store = pruned;
        }
    }
    net.check_store(&store, &meta.config)?;
    Ok((meta.config, net, store))
}

/// Recurrent state carried between steps.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyState {
    pub h: Tensor,
    pub c: Tensor,
}

/// Online controller: keeps the last `K` (mask, action) pairs as encoder
/// features plus the policy recurrence, and maps each new mask to an action.
#[derive(Clone)]
pub struct Agent {
    pub cfg: TrainConfig,
    net: PolicyNet,
    store: ParamStore,
    history: VecDeque<(Vec<f64>, [f64; 2])>,
    pad: Vec<f64>,
    state: Option<PolicyState>,
    context: Vec<f64>,
    rng: Rng,
}

impl Agent {
    pub fn new(cfg: TrainConfig, net: PolicyNet, store: ParamStore) -> Result<Self, PolicyError> {
        net.check_store(&store, &cfg)?;
        let pad = match &net.encoder {
            Some(enc) => {
                let blank = Mask::blank(net.mask_w, net.mask_h);
                let mut tape = Tape::new();
                let m = tape.constant(masks_tensor(&[&blank]));
                let f = enc.features(&mut tape, &store, m)?;
                tape.value(f).data().to_vec()
            }
            None => Vec::new(),
        };
        let mut agent = Self {
            context: vec![0.0; net.d_z],
            cfg,
            net,
            store,
            history: VecDeque::new(),
            pad,
            state: None,
            rng: Rng::seed_from_u64(0),
        };
        agent.reset(0);
        Ok(agent)
    }

    /// Rebuilds the agent from a training checkpoint, rejecting parameter
    /// sets that do not match the stored configuration.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, PolicyError> {
        let (cfg, net, store) = load_network(ckpt)?;
        Self::new(cfg, net, store)
    }

    pub fn mask_size(&self) -> (usize, usize) {
        (self.net.mask_w, self.net.mask_h)
    }

    /// Clears history and recurrent state and reseeds action sampling.
    pub fn reset(&mut self, seed: u64) {
        self.history.clear();
        self.state = None;
        self.context = vec![0.0; self.net.d_z];
        self.rng = crate::rng::child(seed, "agent", 0);
    }

    /// Context vector used for the most recent action (zeros before the
    /// first step or without an encoder).
    pub fn context(&self) -> &[f64] {
        &self.context
    }

    pub fn state(&self) -> Option<&PolicyState> {
        self.state.as_ref()
    }

    /// Chooses an action for `mask`: `tanh(mean)` when `deterministic`, else a
    /// tanh-Gaussian sample.
    pub fn act(&mut self, mask: &Mask, deterministic: bool) -> Result<ActionCommand, PolicyError> {
        if (mask.width, mask.height) != (self.net.mask_w, self.net.mask_h) {
            return Err(PolicyError::Mismatch(format!(
                "mask is {}x{}, policy expects {}x{}",
                mask.width, mask.height, self.net.mask_w, self.net.mask_h
            )));
        }
        let mut tape = Tape::new();
        let m = tape.constant(masks_tensor(&[mask]));
        let feats = self.net.cnn.forward(&mut tape, &self.store, m)?;

        let mut own_feat = None;
        let z = match &self.net.encoder {
            Some(enc) => {
                let k = enc.k;
                let width = self.pad.len();
                let mut rows: Vec<f64> = Vec::with_capacity((self.history.len() + 1) * width);
                for (f, _) in &self.history {
                    rows.extend_from_slice(f);
                }
                rows.extend_from_slice(&self.pad);
                let pad_row = self.history.len();
                let table = tape.constant(Tensor::new(vec![pad_row + 1, width], rows)?);
                let missing = k - self.history.len();
                let window = Window {
                    slots: (0..k)
                        .map(|j| (j >= missing).then(|| (j - missing, self.history[j - missing].1)))
                        .collect(),
                };
                let z = enc.encode_features(&mut tape, &self.store, table, pad_row, &[window])?;
                let f = enc.features(&mut tape, &self.store, m)?;
                own_feat = Some(tape.value(f).data().to_vec());
                z
            }
            None => tape.constant(Tensor::zeros(&[1, self.net.d_z])),
        };
        self.context = tape.value(z).data().to_vec();
        let u = tape.concat(&[feats, z], 1)?;
        let x = match &self.net.lstm {
            Some(lstm) => {
                let (h, c) = match &self.state {
                    Some(s) => (tape.constant(s.h.clone()), tape.constant(s.c.clone())),
                    None => lstm.zero_state(&mut tape, 1),
                };
                let (h, c) = lstm.step(&mut tape, &self.store, u, h, c)?;
                self.state = Some(PolicyState {
                    h: tape.value(h).clone(),
                    c: tape.value(c).clone(),
                });
                h
            }
            None => u,
        };
        let out = self.net.actor_forward(&mut tape, &self.store, x)?;
        let mean = tape.value(out.mean).data();
        let log_std = tape.value(out.log_std).data();
        let mut a = [0.0; ACTION_DIM];
        for i in 0..ACTION_DIM {
            let pre = if deterministic {
                mean[i]
            } else {
                let e: f64 = StandardNormal.sample(&mut self.rng);
                mean[i] + log_std[i].exp() * e
            };
            a[i] = pre.tanh();
        }
        let action = ActionCommand::new(a[0], a[1]);
        if let Some(f) = own_feat {
            self.history.push_back((f, a));
            if self.history.len() > self.cfg.context.k {
                self.history.pop_front();
            }
        }
        Ok(action)
    }
}
