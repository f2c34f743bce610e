use rand::Rng as _;

use super::*;
use crate::datagen::{EpisodeRecord, TransitionRecord};
use crate::numgrad::gradcheck::check_params;
use crate::numgrad::{ParamStore, Tape, Tensor};
use crate::rng;
use crate::tracksim::{ActionCommand, EmbodimentConfig, Mask, LABEL_TARGET};

fn toy_episode(len: usize, h: f64, seed: u64) -> EpisodeRecord {
    let mut r = rng::seeded(seed);
    let e = EmbodimentConfig {
        mask_w: 8,
        mask_h: 8,
        ..EmbodimentConfig::default().with_height(h)
    };
    let mut mask = || {
        let mut m = Mask::blank(8, 8);
        let c = r.random_range(0..6);
        for row in 2..6 {
            m.data[row * 8 + c..row * 8 + c + 2].fill(LABEL_TARGET);
        }
        m
    };
    let records = (0..len)
        .map(|t| TransitionRecord {
            mask: mask(),
            action: ActionCommand::new(0.1 * t as f64 - 0.2, 0.3 - 0.05 * t as f64),
            reward: 0.5 - 0.1 * t as f64,
            done: t + 1 == len,
            lost: false,
            rho: 2.5,
            theta: 0.0,
        })
        .collect();
    EpisodeRecord {
        embodiment: e,
        target_speed: 0.5,
        seed,
        records,
        final_mask: mask(),
    }
}

fn build(k: usize, size: usize) -> (ParamStore, ContextEncoder, AuxHead) {
    let mut store = ParamStore::new();
    let cfg = ContextConfig {
        k,
        d_z: 4,
        hidden: 5,
        aux_hidden: 6,
    };
    let mut r = rng::seeded(42);
    let enc = ContextEncoder::new(&mut store, "enc", &cfg, size, size, &mut r).unwrap();
    let aux = AuxHead::new(&mut store, "aux", &cfg, &mut r).unwrap();
    // zero-initialized biases put ReLUs exactly on their kink over blank
    // mask regions, where finite differences are meaningless
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        if store.name(id).ends_with(".b") {
            store.value_mut(id).data_mut().iter_mut().for_each(|v| *v = r.random_range(-0.3..0.3));
        }
    }
    (store, enc, aux)
}

#[test]
fn empty_history_gives_the_same_context_everywhere() {
    let (store, enc, _) = build(3, 8);
    let h = ContextHistory::empty(3);
    let mut tape = Tape::new();
    let z = enc.encode(&mut tape, &store, &[&h, &h]).unwrap();
    let v = tape.value(z);
    assert_eq!(v.row(0), v.row(1));
    assert!(v.all_finite());
}

#[test]
fn last_action_changes_the_context() {
    let (store, enc, _) = build(3, 8);
    let ep = toy_episode(4, 1.0, 1);
    let mut a = ContextHistory::empty(3);
    for rec in &ep.records[..3] {
        a.push(rec.mask.clone(), rec.action);
    }
    let mut b = a.clone();
    b.slots[2].as_mut().unwrap().1.omega_norm += 0.5;
    let mut tape = Tape::new();
    let z = enc.encode(&mut tape, &store, &[&a, &b]).unwrap();
    let v = tape.value(z);
    let diff: f64 = v.row(0).iter().zip(v.row(1)).map(|(x, y)| (x - y).abs()).sum();
    assert!(diff > 1e-12);
}

#[test]
fn consistency_of_identical_contexts_is_zero() {
    let mut tape = Tape::new();
    let z = tape.constant(Tensor::new(vec![3, 2], vec![1.0, 2.0, 1.0, 2.0, 1.0, 2.0]).unwrap());
    let c = tape.constant(Tensor::new(vec![1, 2], vec![1.0, 2.0]).unwrap());
    let l = consistency_loss(&mut tape, z, c, &[0, 0, 0]).unwrap();
    assert!(tape.value(l).item().abs() < 1e-12);
}

#[test]
fn orthogonal_single_step_costs_one() {
    let mut tape = Tape::new();
    let z = tape.constant(Tensor::new(vec![1, 2], vec![0.0, 3.0]).unwrap());
    let c = tape.constant(Tensor::new(vec![1, 2], vec![2.0, 0.0]).unwrap());
    let l = consistency_loss(&mut tape, z, c, &[0]).unwrap();
    assert!((tape.value(l).item() - 1.0).abs() < 1e-12);
}

#[test]
fn episodes_weigh_equally_in_consistency() {
    // episode 0: one aligned row; episode 1: one opposite and one aligned row
    let mut tape = Tape::new();
    let z = tape.constant(Tensor::new(vec![3, 1], vec![1.0, -1.0, 1.0]).unwrap());
    let c = tape.constant(Tensor::new(vec![2, 1], vec![1.0, 1.0]).unwrap());
    let l = consistency_loss(&mut tape, z, c, &[0, 1, 1]).unwrap();
    assert!((tape.value(l).item() - 0.5).abs() < 1e-12);
}

#[test]
fn aux_losses_match_a_direct_computation() {
    let (store, enc, aux) = build(2, 8);
    let eps = [toy_episode(3, 0.5, 3), toy_episode(2, 1.7, 4)];
    let refs: Vec<_> = eps.iter().collect();
    let mut tape = Tape::new();
    let l = aux_losses(&mut tape, &store, &enc, &aux, &refs, &LossWeights::default()).unwrap();

    // recompute each z_t through the history API
    let mut sq_r = 0.0;
    let mut sq_h = 0.0;
    let mut n = 0.0;
    let mut cons = 0.0;
    for ep in &eps {
        let mut hist = ContextHistory::empty(2);
        let mut zs = Vec::new();
        for t in 1..=ep.len() {
            let rec = &ep.records[t - 1];
            hist.push(rec.mask.clone(), rec.action);
            let mut tp = Tape::new();
            let z = enc.encode(&mut tp, &store, &[&hist]).unwrap();
            let p = aux.forward(&mut tp, &store, z).unwrap();
            let p = tp.value(p).data().to_vec();
            sq_r += (p[0] - rec.reward).powi(2);
            sq_h += (p[1] - ep.embodiment.camera_height / HEIGHT_SCALE).powi(2);
            n += 1.0;
            zs.push(tp.value(z).data().to_vec());
        }
        let d = zs[0].len();
        let mean: Vec<f64> = (0..d).map(|i| zs.iter().map(|z| z[i]).sum::<f64>() / zs.len() as f64).collect();
        let cos = |a: &[f64], b: &[f64]| {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            dot / (na * nb)
        };
        let first = 2.min(ep.len());
        cons += 1.0 - zs[..first].iter().map(|z| cos(z, &mean)).sum::<f64>() / first as f64;
    }
    let got = |v: Option<crate::numgrad::Var>| tape.value(v.unwrap()).item();
    assert!((got(l.reward) - sq_r / n).abs() < 1e-12);
    assert!((got(l.height) - sq_h / n).abs() < 1e-12);
    assert!((got(l.cons) - cons / 2.0).abs() < 1e-12);
    let total = tape.value(l.total).item();
    assert!((total - (sq_r / n + sq_h / n + cons / 2.0)).abs() < 1e-12);
}

#[test]
fn disabled_terms_are_absent() {
    let (store, enc, aux) = build(2, 8);
    let ep = toy_episode(3, 0.5, 3);
    let mut tape = Tape::new();
    let w = LossWeights {
        reward: 0.0,
        height: 0.0,
        cons: 1.0,
    };
    let l = aux_losses(&mut tape, &store, &enc, &aux, &[&ep], &w).unwrap();
    assert!(l.reward.is_none() && l.height.is_none() && l.cons.is_some());
}

#[test]
fn context_gradients_match_finite_differences() {
    let (store, enc, aux) = build(2, 8);
    let eps = [toy_episode(3, 0.5, 5), toy_episode(3, 1.7, 6)];
    let refs: Vec<_> = eps.iter().collect();
    let mut ids = enc.ids();
    ids.extend(aux.ids());
    let gc = check_params(&store, &ids, 1e-6, |tape, s| {
        Ok(aux_losses(tape, s, &enc, &aux, &refs, &LossWeights::default())?.total)
    })
    .unwrap();
    assert!(gc.max_rel_error() < 1e-4, "{:?}", gc.rel_errors);
}

#[test]
fn probe_reports_degenerate_separation_for_one_height() {
    let (store, enc, aux) = build(2, 8);
    let eps = [toy_episode(6, 1.0, 7), toy_episode(6, 1.0, 8)];
    let rep = context_probe(&store, &enc, &aux, &eps, 1).unwrap();
    assert!(rep.separation.is_none());
    assert_eq!(rep.baseline_mae, 0.0);
    assert_eq!(rep.samples, 8);
    let eps = [toy_episode(6, 0.5, 7), toy_episode(6, 1.7, 8)];
    let rep = context_probe(&store, &enc, &aux, &eps, 1).unwrap();
    assert!(rep.separation.unwrap() > 0.0);
    assert!((rep.baseline_mae - 0.6).abs() < 1e-12);
}
