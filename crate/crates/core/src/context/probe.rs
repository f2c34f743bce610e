use std::collections::BTreeMap;

use super::losses::episode_windows;
use super::{AuxHead, ContextEncoder, HEIGHT_SCALE};
use crate::datagen::EpisodeRecord;
use crate::numgrad::{ParamStore, Result, Tape};

/// Height-probe diagnostics of a trained encoder on held-out episodes.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeReport {
    /// Mean absolute error (m) of the predicted camera height.
    pub mae: f64,
    /// Mean absolute error of predicting the mean evaluated height everywhere.
    pub baseline_mae: f64,
    /// Steps evaluated.
    pub samples: usize,
    /// Mean context per camera height, ascending by height.
    pub centroids: Vec<(f64, Vec<f64>)>,
    /// Mean distance between height centroids over the mean distance of
    /// contexts to their own centroid. `None` when fewer than two heights are
    /// present (the metric is undefined).
    pub separation: Option<f64>,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Evaluates the height prediction on steps `t > K` (every `stride`-th) of
/// each episode.
pub fn context_probe(
    store: &ParamStore,
    encoder: &ContextEncoder,
    head: &AuxHead,
    episodes: &[EpisodeRecord],
    stride: usize,
) -> Result<ProbeReport> {
    let stride = stride.max(1);
    let mut preds = Vec::new();
    let mut by_height: BTreeMap<u64, Vec<Vec<f64>>> = BTreeMap::new();
    for ep in episodes {
        if ep.len() <= encoder.k {
            continue;
        }
        let mut tape = Tape::new();
        let masks: Vec<_> = ep.records.iter().map(|r| &r.mask).collect();
        let windows = episode_windows(ep, encoder.k, 0, (encoder.k + 1..=ep.len()).step_by(stride));
        let z = encoder.encode_windows(&mut tape, store, &masks, &windows)?;
        let out = head.forward(&mut tape, store, z)?;
        let h = ep.embodiment.camera_height;
        let zs = tape.value(z);
        let entry = by_height.entry(h.to_bits()).or_default();
        for i in 0..windows.len() {
            preds.push((tape.value(out).row(i)[1] * HEIGHT_SCALE, h));
            entry.push(zs.row(i).to_vec());
        }
    }
    let n = preds.len();
    let mean_h = preds.iter().map(|p| p.1).sum::<f64>() / n.max(1) as f64;
    let mae = preds.iter().map(|(p, h)| (p - h).abs()).sum::<f64>() / n.max(1) as f64;
    let baseline_mae = preds.iter().map(|(_, h)| (mean_h - h).abs()).sum::<f64>() / n.max(1) as f64;

    let centroids: Vec<(f64, Vec<f64>)> = by_height
        .iter()
        .map(|(&bits, zs)| {
            let d = zs[0].len();
            let mut c = vec![0.0; d];
            zs.iter().for_each(|z| c.iter_mut().zip(z).for_each(|(a, b)| *a += b));
            c.iter_mut().for_each(|a| *a /= zs.len() as f64);
            (f64::from_bits(bits), c)
        })
        .collect();
    let separation = (centroids.len() >= 2).then(|| {
        let mut between = (0.0, 0usize);
        for i in 0..centroids.len() {
            for j in i + 1..centroids.len() {
                between.0 += dist(&centroids[i].1, &centroids[j].1);
                between.1 += 1;
            }
        }
        let mut within = (0.0, 0usize);
        for (c, zs) in centroids.iter().zip(by_height.values()) {
            for z in zs {
                within.0 += dist(&c.1, z);
                within.1 += 1;
            }
        }
        let w = within.0 / within.1 as f64;
        (between.0 / between.1 as f64) / w.max(1e-12)
    });
    Ok(ProbeReport {
        mae,
        baseline_mae,
        samples: n,
        centroids,
        separation,
    })
}
