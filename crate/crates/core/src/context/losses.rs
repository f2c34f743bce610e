use serde::{Deserialize, Serialize};

use super::{AuxHead, ContextEncoder, Window};
use crate::datagen::EpisodeRecord;
use crate::numgrad::{ParamStore, Result, Tape, Tensor, Var};

/// Heights are divided by this inside the height loss.
pub const HEIGHT_SCALE: f64 = 3.0;
/// Norm guard of the cosine similarity in the consistency loss.
pub const COSINE_EPS: f64 = 1e-8;

/// Multipliers of the three representation losses. A zero weight removes the
/// term entirely.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub reward: f64,
    pub height: f64,
    pub cons: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            reward: 1.0,
            height: 1.0,
            cons: 1.0,
        }
    }
}

/// Representation losses recorded on a tape. Disabled terms are `None`.
#[derive(Clone, Copy, Debug)]
pub struct AuxLosses {
    pub reward: Option<Var>,
    pub height: Option<Var>,
    pub cons: Option<Var>,
    /// Weighted sum of the enabled terms (a zero constant if none).
    pub total: Var,
}

impl AuxLosses {
    pub fn combine(tape: &mut Tape, weights: &LossWeights, reward: Option<Var>, height: Option<Var>, cons: Option<Var>) -> Result<Self> {
        let mut total: Option<Var> = None;
        for (term, w) in [(reward, weights.reward), (height, weights.height), (cons, weights.cons)] {
            if let Some(t) = term {
                let t = if w == 1.0 { t } else { tape.scale(t, w) };
                total = Some(match total {
                    Some(acc) => tape.add(acc, t)?,
                    None => t,
                });
            }
        }
        let total = match total {
            Some(t) => t,
            None => tape.constant(Tensor::scalar(0.0)),
        };
        Ok(Self {
            reward,
            height,
            cons,
            total,
        })
    }
}

/// `1 − Σ_e (1/E)(1/n_e) Σ_{i∈e} cos(z_i, center_{owner(i)})`, i.e. the mean
/// over episodes of one minus the average similarity of that episode's rows
/// to its center. `z: [n, d]`, `centers: [E, d]`, `owner[i] < E`.
pub fn consistency_loss(tape: &mut Tape, z: Var, centers: Var, owner: &[usize]) -> Result<Var> {
    let episodes = tape.shape(centers)[0];
    let mut counts = vec![0usize; episodes];
    owner.iter().for_each(|&e| counts[e] += 1);
    let present = counts.iter().filter(|&&n| n > 0).count();
    let weights: Vec<f64> = owner.iter().map(|&e| 1.0 / (present * counts[e]) as f64).collect();
    let c = tape.select_rows(centers, owner)?;
    let cos = tape.cosine_similarity(z, c, COSINE_EPS)?;
    let w = tape.constant(Tensor::vector(weights));
    let weighted = tape.mul(cos, w)?;
    let s = tape.sum(weighted);
    let s = tape.neg(s);
    Ok(tape.add_scalar(s, 1.0))
}

/// Row-wise mean of the rows of `z` listed in each group → `[groups, d]`.
pub fn group_means(tape: &mut Tape, z: Var, groups: &[Vec<usize>]) -> Result<Var> {
    let d = tape.shape(z)[1];
    let parts = groups
        .iter()
        .map(|rows| {
            let sel = tape.select_rows(z, rows)?;
            tape.mean_axis(sel, 0)
        })
        .collect::<Result<Vec<_>>>()?;
    let flat = tape.concat(&parts, 0)?;
    tape.reshape(flat, &[groups.len(), d])
}

/// Windows `z_1 … z_T` of a whole episode, indexing its masks `0 … T−1`
/// (offset by `base`).
pub(crate) fn episode_windows(ep: &EpisodeRecord, k: usize, base: usize, steps: impl Iterator<Item = usize>) -> Vec<Window> {
    steps
        .map(|t| Window {
            slots: (0..k)
                .map(|j| {
                    let tau = t as isize - k as isize + j as isize;
                    (tau >= 0).then(|| (base + tau as usize, ep.records[tau as usize].action.to_array()))
                })
                .collect(),
        })
        .collect()
}

/// The representation losses over whole episodes.
///
/// Context `z_t` (for `t = 1 … T_e`) summarizes steps `t−K … t−1`; its reward
/// target is the reward of step `t−1`, its height target the episode's camera
/// height over [`HEIGHT_SCALE`]. The consistency term compares
/// `z_1 … z_min(K, T_e)` with the episode mean of all `z_t`.
pub fn aux_losses(
    tape: &mut Tape,
    store: &ParamStore,
    encoder: &ContextEncoder,
    head: &AuxHead,
    episodes: &[&EpisodeRecord],
    weights: &LossWeights,
) -> Result<AuxLosses> {
    let k = encoder.k;
    let mut masks = Vec::new();
    let mut windows = Vec::new();
    let mut rewards = Vec::new();
    let mut heights = Vec::new();
    let mut groups = Vec::new();
    let mut first_rows = Vec::new();
    let mut owner = Vec::new();
    for (e, ep) in episodes.iter().enumerate() {
        let base = masks.len();
        masks.extend(ep.records.iter().map(|r| &r.mask));
        let row0 = windows.len();
        windows.extend(episode_windows(ep, k, base, 1..=ep.len()));
        rewards.extend(ep.records.iter().map(|r| r.reward));
        heights.extend(std::iter::repeat_n(ep.embodiment.camera_height / HEIGHT_SCALE, ep.len()));
        groups.push((row0..row0 + ep.len()).collect::<Vec<_>>());
        let first = k.min(ep.len());
        first_rows.extend(row0..row0 + first);
        owner.extend(std::iter::repeat_n(e, first));
    }
    let z = encoder.encode_windows(tape, store, &masks, &windows)?;
    let pred = head.forward(tape, store, z)?;
    let reward = if weights.reward != 0.0 {
        let p = tape.slice_cols(pred, 0, 1)?;
        let t = tape.constant(Tensor::new(vec![rewards.len(), 1], rewards)?);
        Some(tape.mse(p, t)?)
    } else {
        None
    };
    let height = if weights.height != 0.0 {
        let p = tape.slice_cols(pred, 1, 1)?;
        let t = tape.constant(Tensor::new(vec![heights.len(), 1], heights)?);
        Some(tape.mse(p, t)?)
    } else {
        None
    };
    let cons = if weights.cons != 0.0 {
        let centers = group_means(tape, z, &groups)?;
        let zf = tape.select_rows(z, &first_rows)?;
        Some(consistency_loss(tape, zf, centers, &owner)?)
    } else {
        None
    };
    AuxLosses::combine(tape, weights, reward, height, cons)
}
