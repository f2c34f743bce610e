use std::collections::HashMap;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::losses::{actor_loss, critic_loss, CriticBatch, CriticNoise};
use super::net::{PolicyNet, ACTION_DIM};
use super::{PolicyError, TrainConfig};
use crate::context::{consistency_loss, group_means, masks_tensor, AuxLosses, Window, HEIGHT_SCALE};
use crate::datagen::{EpisodeRecord, SequenceSampler, SequenceSlice};
use crate::numgrad::{Adam, Checkpoint, NumgradError, ParamId, ParamStore, Tape, Tensor, Var};
use crate::rng::{self, Rng};
use crate::tracksim::{Mask, MAX_STEPS};

/// Losses of one training step. Representation terms are `None` when the
/// configuration disables them.
#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub step: usize,
    pub critic: f64,
    pub actor: f64,
    pub reward: Option<f64>,
    pub height: Option<f64>,
    pub cons: Option<f64>,
    pub alpha: f64,
}

impl LogRow {
    pub fn all_finite(&self) -> bool {
        [Some(self.critic), Some(self.actor), self.reward, self.height, self.cons, Some(self.alpha)]
            .into_iter()
            .flatten()
            .all(f64::is_finite)
    }
}

/// Loss history; columns for disabled terms are left out entirely.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub rows: Vec<LogRow>,
    pub has_reward: bool,
    pub has_height: bool,
    pub has_cons: bool,
}

impl TrainLog {
    pub fn header(&self) -> String {
        let mut cols = vec!["step", "L_D", "L_actor"];
        if self.has_reward {
            cols.push("L_reward");
        }
        if self.has_height {
            cols.push("L_height");
        }
        if self.has_cons {
            cols.push("L_cons");
        }
        cols.push("alpha");
        cols.join(",")
    }

    pub fn csv_row(&self, r: &LogRow) -> String {
        let mut s = format!("{},{},{}", r.step, r.critic, r.actor);
        for (on, v) in [(self.has_reward, r.reward), (self.has_height, r.height), (self.has_cons, r.cons)] {
            if on {
                s.push_str(&format!(",{}", v.unwrap_or(f64::NAN)));
            }
        }
        s.push_str(&format!(",{}\n", r.alpha));
        s
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header();
        out.push('\n');
        for r in &self.rows {
            out.push_str(&self.csv_row(r));
        }
        out
    }
}

/// The sampled in-episode windows of one step.
#[derive(Clone, Debug)]
pub struct SequenceBatch {
    pub slices: Vec<SequenceSlice>,
}

/// Contents of a checkpoint's metadata string.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub(crate) struct CheckpointMeta {
    pub mask_h: usize,
    pub mask_w: usize,
    pub step: usize,
    pub config: TrainConfig,
}

pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: TrainLog,
}

/// Optimizer state and networks of a training run.
pub struct Trainer {
    pub cfg: TrainConfig,
    pub net: PolicyNet,
    pub store: ParamStore,
    opt_critic: Adam,
    opt_actor: Adam,
    opt_encoder: Option<Adam>,
    log_alpha: Option<(ParamId, Adam)>,
    rng: Rng,
    sampler: SequenceSampler,
    step: usize,
}

fn normal(rng: &mut Rng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    Tensor::new(vec![rows, cols], data).expect("positive shape")
}

fn uniform(rng: &mut Rng, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::new(vec![rows, cols], data).expect("positive shape")
}

/// Interns masks so each distinct `(episode, step)` is encoded once.
struct MaskTable<'a> {
    masks: Vec<&'a Mask>,
    index: HashMap<(usize, usize), usize>,
}

impl<'a> MaskTable<'a> {
    fn new() -> Self {
        Self {
            masks: Vec::new(),
            index: HashMap::new(),
        }
    }

    fn row(&mut self, episodes: &'a [EpisodeRecord], e: usize, t: usize) -> usize {
        *self.index.entry((e, t)).or_insert_with(|| {
            self.masks.push(episodes[e].mask(t));
            self.masks.len() - 1
        })
    }

    /// Window of `z_t` for episode `e`.
    fn window(&mut self, episodes: &'a [EpisodeRecord], e: usize, t: usize, k: usize) -> Window {
        Window {
            slots: (0..k)
                .map(|j| {
                    let tau = t as isize - k as isize + j as isize;
                    (tau >= 0).then(|| {
                        let tau = tau as usize;
                        (self.row(episodes, e, tau), episodes[e].records[tau].action.to_array())
                    })
                })
                .collect(),
        }
    }
}

impl Trainer {
    pub fn new(cfg: TrainConfig, episodes: &[EpisodeRecord]) -> Result<Self, PolicyError> {
        cfg.validate()?;
        let first = episodes
            .first()
            .ok_or_else(|| PolicyError::Data("dataset has no episodes".into()))?;
        let (mh, mw) = (first.embodiment.mask_h, first.embodiment.mask_w);
        if episodes.iter().any(|e| (e.embodiment.mask_h, e.embodiment.mask_w) != (mh, mw)) {
            return Err(PolicyError::Data("episodes have differing mask sizes".into()));
        }
        let sampler = SequenceSampler::new(episodes, cfg.seq_len).map_err(|e| PolicyError::Data(e.to_string()))?;
        let (net, mut store) = PolicyNet::new(&cfg, mh, mw)?;
        let opt_critic = Adam::new(&store, net.critic_group(), cfg.lr_critic);
        let opt_actor = Adam::new(&store, net.actor_group(), cfg.lr_actor);
        let enc = net.encoder_group();
        let opt_encoder = (!enc.is_empty()).then(|| Adam::new(&store, enc, cfg.lr_encoder));
        let log_alpha = if cfg.auto_alpha {
            let id = store.insert("log_alpha", Tensor::scalar(cfg.alpha.ln()))?;
            Some((id, Adam::new(&store, vec![id], cfg.lr_alpha)))
        } else {
            None
        };
        Ok(Self {
            rng: rng::child(cfg.seed, "train", 0),
            cfg,
            net,
            store,
            opt_critic,
            opt_actor,
            opt_encoder,
            log_alpha,
            sampler,
            step: 0,
        })
    }

    pub fn alpha(&self) -> f64 {
        match &self.log_alpha {
            Some((id, _)) => self.store.value(*id).item().exp(),
            None => self.cfg.alpha,
        }
    }

    pub fn steps_done(&self) -> usize {
        self.step
    }

    pub fn log_template(&self) -> TrainLog {
        let w = self.cfg.effective_weights();
        TrainLog {
            rows: Vec::new(),
            has_reward: w.reward != 0.0,
            has_height: w.height != 0.0,
            has_cons: w.cons != 0.0,
        }
    }

    /// Shared features for every step of the batch: `x` and `z` with rows in
    /// time-major order (`j * B + b` for step offset `j ∈ 0..=L`).
    fn trunk(&self, tape: &mut Tape, episodes: &[EpisodeRecord], batch: &SequenceBatch) -> crate::numgrad::Result<(Var, Var)> {
        let b = batch.slices.len();
        let steps = self.cfg.seq_len + 1;
        let mut pol_masks = Vec::with_capacity(b * steps);
        for j in 0..steps {
            for s in &batch.slices {
                pol_masks.push(episodes[s.episode].mask(s.start + j));
            }
        }
        let m = tape.constant(masks_tensor(&pol_masks));
        let feats = self.net.cnn.forward(tape, &self.store, m)?;
        let z = match &self.net.encoder {
            Some(enc) => {
                let mut table = MaskTable::new();
                let mut windows = Vec::with_capacity(b * steps);
                for j in 0..steps {
                    for s in &batch.slices {
                        windows.push(table.window(episodes, s.episode, s.start + j, enc.k));
                    }
                }
                enc.encode_windows(tape, &self.store, &table.masks, &windows)?
            }
            None => tape.constant(Tensor::zeros(&[b * steps, self.net.d_z])),
        };
        let u = tape.concat(&[feats, z], 1)?;
        let x = match &self.net.lstm {
            Some(lstm) => {
                let (mut h, mut c) = lstm.zero_state(tape, b);
                let mut hs = Vec::with_capacity(steps);
                for j in 0..steps {
                    let rows: Vec<usize> = (j * b..(j + 1) * b).collect();
                    let uj = tape.select_rows(u, &rows)?;
                    (h, c) = lstm.step(tape, &self.store, uj, h, c)?;
                    hs.push(h);
                }
                tape.concat(&hs, 0)?
            }
            None => u,
        };
        Ok((x, z))
    }

    /// Reward/height losses on the loss steps and the consistency loss on
    /// freshly sampled episodes.
    fn representation(
        &mut self,
        tape: &mut Tape,
        episodes: &[EpisodeRecord],
        batch: &SequenceBatch,
        z: Var,
    ) -> crate::numgrad::Result<AuxLosses> {
        let w = self.cfg.effective_weights();
        let (Some(enc), Some(aux)) = (&self.net.encoder, &self.net.aux) else {
            return AuxLosses::combine(tape, &w, None, None, None);
        };
        let b = batch.slices.len();
        let (mut reward, mut height) = (None, None);
        if w.reward != 0.0 || w.height != 0.0 {
            let mut rows = Vec::new();
            let mut r_t = Vec::new();
            let mut h_t = Vec::new();
            for j in self.cfg.burn_in..self.cfg.seq_len {
                for (bi, s) in batch.slices.iter().enumerate() {
                    let t = s.start + j;
                    if t == 0 {
                        continue;
                    }
                    let ep = &episodes[s.episode];
                    rows.push(j * b + bi);
                    r_t.push(ep.records[t - 1].reward);
                    h_t.push(ep.embodiment.camera_height / HEIGHT_SCALE);
                }
            }
            if !rows.is_empty() {
                let n = rows.len();
                let zs = tape.select_rows(z, &rows)?;
                let pred = aux.forward(tape, &self.store, zs)?;
                if w.reward != 0.0 {
                    let p = tape.slice_cols(pred, 0, 1)?;
                    let t = tape.constant(Tensor::new(vec![n, 1], r_t)?);
                    reward = Some(tape.mse(p, t)?);
                }
                if w.height != 0.0 {
                    let p = tape.slice_cols(pred, 1, 1)?;
                    let t = tape.constant(Tensor::new(vec![n, 1], h_t)?);
                    height = Some(tape.mse(p, t)?);
                }
            }
        }
        let mut cons = None;
        if w.cons != 0.0 && self.cfg.cons_episodes > 0 {
            let k = enc.k;
            let mut table = MaskTable::new();
            let mut first = Vec::new();
            let mut owner = Vec::new();
            let mut sampled = Vec::new();
            let mut groups = Vec::new();
            for gi in 0..self.cfg.cons_episodes {
                let e = self.rng.random_range(0..episodes.len());
                let te = episodes[e].len();
                for t in 1..=k.min(te) {
                    first.push(table.window(episodes, e, t, k));
                    owner.push(gi);
                }
                let s = self.cfg.cons_samples.max(1).min(te);
                let start = sampled.len();
                for j in 0..s {
                    sampled.push(table.window(episodes, e, 1 + j * te / s, k));
                }
                groups.push((start..sampled.len()).collect::<Vec<_>>());
            }
            let n_first = first.len();
            let mut windows = first;
            windows.extend(sampled);
            let zz = enc.encode_windows(tape, &self.store, &table.masks, &windows)?;
            let groups: Vec<Vec<usize>> = groups
                .into_iter()
                .map(|g| g.into_iter().map(|i| i + n_first).collect())
                .collect();
            let centers = group_means(tape, zz, &groups)?;
            let rows: Vec<usize> = (0..n_first).collect();
            let zf = tape.select_rows(zz, &rows)?;
            cons = Some(consistency_loss(tape, zf, centers, &owner)?);
        }
        AuxLosses::combine(tape, &w, reward, height, cons)
    }

    fn non_finite(&self, what: impl Into<String>) -> PolicyError {
        PolicyError::NonFinite {
            what: what.into(),
            step: self.step,
            batch: self.step,
        }
    }

    fn step_opt(&self, e: NumgradError) -> PolicyError {
        match e {
            NumgradError::NonFiniteGrad(name) => self.non_finite(format!("gradient of `{name}`")),
            other => other.into(),
        }
    }

    /// One optimization step on a freshly sampled batch.
    pub fn train_step(&mut self, episodes: &[EpisodeRecord]) -> Result<LogRow, PolicyError> {
        let slices = self.sampler.batch(&mut self.rng, self.cfg.batch_size);
        let batch = SequenceBatch { slices };
        let b = batch.slices.len();
        let (bi, l) = (self.cfg.burn_in, self.cfg.seq_len);
        let alpha = self.alpha();

        let mut tape = Tape::new();
        let (x_all, z_all) = self.trunk(&mut tape, episodes, &batch)?;
        let aux = self.representation(&mut tape, episodes, &batch, z_all)?;

        let mut cur = Vec::new();
        let mut next = Vec::new();
        let mut actions = Vec::new();
        let mut rewards = Vec::new();
        let mut not_done = Vec::new();
        for j in bi..l {
            for (k, s) in batch.slices.iter().enumerate() {
                let ep = &episodes[s.episode];
                let rec = &ep.records[s.start + j];
                cur.push(j * b + k);
                next.push((j + 1) * b + k);
                actions.extend(rec.action.to_array());
                rewards.push(rec.reward);
                let terminal = rec.done && ep.len() < MAX_STEPS as usize;
                not_done.push(if terminal { 0.0 } else { 1.0 });
            }
        }
        let n = cur.len();
        let x = tape.select_rows(x_all, &cur)?;
        let x_next = tape.select_rows(x_all, &next)?;
        let big_n = self.cfg.cql_samples;
        let noise = CriticNoise {
            next: normal(&mut self.rng, n, ACTION_DIM),
            uniform: uniform(&mut self.rng, n * big_n, ACTION_DIM),
            policy: normal(&mut self.rng, n * big_n, ACTION_DIM),
        };
        let critic_batch = CriticBatch {
            x,
            x_next,
            actions: Tensor::new(vec![n, ACTION_DIM], actions)?,
            rewards,
            not_done,
        };
        let ct = critic_loss(&mut tape, &self.store, &self.net, &self.cfg, alpha, &critic_batch, &noise)?;
        let phase1 = tape.add(ct.loss, aux.total)?;
        let value = |t: &Tape, v: Option<Var>| v.map(|v| t.value(v).item());
        let critic_value = tape.value(ct.loss).item();
        if !tape.value(phase1).item().is_finite() {
            return Err(self.non_finite("critic or representation loss"));
        }
        tape.backward(phase1)?;
        self.store.absorb_grads(&mut tape);
        self.opt_critic.step(&mut self.store).map_err(|e| self.step_opt(e))?;
        if let Some(opt) = &mut self.opt_encoder {
            let r = opt.step(&mut self.store);
            r.map_err(|e| self.step_opt(e))?;
        }

        tape.zero_grads();
        let xd = tape.detach(x);
        let actor_noise = normal(&mut self.rng, n, ACTION_DIM);
        let at = actor_loss(&mut tape, &self.store, &self.net, alpha, xd, &actor_noise)?;
        let actor_value = tape.value(at.loss).item();
        if !actor_value.is_finite() {
            return Err(self.non_finite("actor loss"));
        }
        tape.backward(at.loss)?;
        self.store.absorb_grads(&mut tape);
        self.opt_actor.step(&mut self.store).map_err(|e| self.step_opt(e))?;
        self.store.zero_grads();

        if let Some((id, opt)) = &mut self.log_alpha {
            // d/d(log α) of −log α · (log π + target entropy), averaged
            let lp = tape.value(at.logp).data();
            let g = -(lp.iter().sum::<f64>() / lp.len() as f64 - ACTION_DIM as f64);
            let mut at_tape = Tape::new();
            let la = at_tape.param(&self.store, *id);
            let loss = at_tape.scale(la, g);
            let loss = at_tape.sum(loss);
            at_tape.backward(loss)?;
            self.store.absorb_grads(&mut at_tape);
            let r = opt.step(&mut self.store);
            self.store.zero_grads();
            r.map_err(|e| PolicyError::NonFinite {
                what: format!("alpha update: {e}"),
                step: self.step,
                batch: self.step,
            })?;
        }

        let (c_ids, t_ids) = (self.net.critic_head_ids(), self.net.target_ids());
        self.store.soft_update(&c_ids, &t_ids, self.cfg.tau_target);
        self.step += 1;
        Ok(LogRow {
            step: self.step,
            critic: critic_value,
            actor: actor_value,
            reward: value(&tape, aux.reward),
            height: value(&tape, aux.height),
            cons: value(&tape, aux.cons),
            alpha: self.alpha(),
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let meta = CheckpointMeta {
            mask_h: self.net.mask_h,
            mask_w: self.net.mask_w,
            step: self.step,
            config: self.cfg.clone(),
        };
        let mut optimizers = vec![
            ("critic".to_string(), self.opt_critic.clone()),
            ("actor".to_string(), self.opt_actor.clone()),
        ];
        if let Some(o) = &self.opt_encoder {
            optimizers.push(("encoder".to_string(), o.clone()));
        }
        if let Some((_, o)) = &self.log_alpha {
            optimizers.push(("alpha".to_string(), o.clone()));
        }
        Checkpoint {
            meta: toml::to_string(&meta).expect("meta serializes"),
            store: self.store.clone(),
            optimizers,
        }
    }
}

/// Trains for `cfg.steps` steps. `on_checkpoint` receives intermediate
/// checkpoints every `cfg.checkpoint_every` steps (if non-zero).
pub fn train(
    episodes: &[EpisodeRecord],
    cfg: &TrainConfig,
    mut on_checkpoint: impl FnMut(usize, &Checkpoint),
) -> Result<TrainOutcome, PolicyError> {
    let mut trainer = Trainer::new(cfg.clone(), episodes)?;
    let mut log = trainer.log_template();
    for _ in 0..cfg.steps {
        let row = trainer.train_step(episodes)?;
        log.rows.push(row);
        if cfg.checkpoint_every > 0 && trainer.steps_done() % cfg.checkpoint_every == 0 && trainer.steps_done() < cfg.steps {
            on_checkpoint(trainer.steps_done(), &trainer.checkpoint());
        }
    }
    Ok(TrainOutcome {
        checkpoint: trainer.checkpoint(),
        log,
    })
}
