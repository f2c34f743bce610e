use std::f64::consts::LN_2;

use super::net::{PolicyNet, ACTION_DIM};
use super::{PushUp, TrainConfig};
use crate::numgrad::{ParamStore, Result, Tape, Tensor, Var};

pub const LOG_STD_MIN: f64 = -10.0;
pub const LOG_STD_MAX: f64 = 2.0;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// Reparameterized tanh-Gaussian sample. `noise: [n, ACTION_DIM]` standard
/// normal draws. Returns the squashed action `[n, ACTION_DIM]` and its
/// log-density `[n]`, including the change-of-variables term
/// `log(1 − tanh²(u)) = 2(ln 2 − u − softplus(−2u))`.
pub fn squashed_sample(tape: &mut Tape, mean: Var, log_std: Var, noise: &Tensor) -> Result<(Var, Var)> {
    let eps = tape.constant(noise.clone());
    let std = tape.exp(log_std);
    let spread = tape.mul(std, eps)?;
    let pre = tape.add(mean, spread)?;
    let action = tape.tanh(pre);

    let gauss_const: Vec<f64> = noise.data().iter().map(|e| -0.5 * e * e - HALF_LN_2PI).collect();
    let gauss_const = tape.constant(Tensor::new(noise.shape().to_vec(), gauss_const)?);
    let neg_log_std = tape.neg(log_std);
    let gauss = tape.add(neg_log_std, gauss_const)?;

    let m2 = tape.scale(pre, -2.0);
    let sp = tape.softplus(m2);
    let t = tape.add(pre, sp)?;
    let t = tape.neg(t);
    let t = tape.add_scalar(t, LN_2);
    let log_det = tape.scale(t, 2.0);
    let per_dim = tape.sub(gauss, log_det)?;
    let logp = tape.sum_axis(per_dim, 1)?;
    Ok((action, logp))
}

/// Conservative penalty `mean_rows[logsumexp_j(q_ij − log_density_ij) − push_i]`.
/// `q: [n, m]`, `log_density: [n, m]` (omit for plain log-sum-exp),
/// `push: [n]`.
pub fn conservative_term(tape: &mut Tape, q: Var, log_density: Option<&Tensor>, push: Var) -> Result<Var> {
    let q = match log_density {
        Some(ld) => {
            let ld = tape.constant(ld.clone());
            tape.sub(q, ld)?
        }
        None => q,
    };
    let lse = tape.logsumexp(q, 1)?;
    let gap = tape.sub(lse, push)?;
    Ok(tape.mean(gap))
}

/// Noise for one critic-loss evaluation, drawn by the caller so the loss is
/// a deterministic function of its inputs.
#[derive(Clone, Debug)]
pub struct CriticNoise {
    /// `[n, ACTION_DIM]` normal draws for the next-state action.
    pub next: Tensor,
    /// `[n * N, ACTION_DIM]` uniform proposals in `[-1, 1]`.
    pub uniform: Tensor,
    /// `[n * N, ACTION_DIM]` normal draws for current-policy proposals.
    pub policy: Tensor,
}

/// Transition batch for the critic, one row per step.
#[derive(Clone, Debug)]
pub struct CriticBatch {
    /// Features of the current step, `[n, x_dim]` (carry gradients).
    pub x: Var,
    /// Features of the next step, `[n, x_dim]` (no gradient needed).
    pub x_next: Var,
    pub actions: Tensor,
    pub rewards: Vec<f64>,
    /// 0 for terminal transitions, else 1.
    pub not_done: Vec<f64>,
}

#[derive(Clone, Copy, Debug)]
pub struct CriticTerms {
    pub loss: Var,
    pub bellman: [Var; 2],
    pub conservative: [Var; 2],
}

/// Twin-critic loss: for each critic, `cql_weight · conservative + ½ · Bellman
/// MSE`, summed. The bootstrap target `r + γ·not_done·(min_i Q̄_i(s′, a′) −
/// α log π(a′|s′))` uses the slow critic copies and a fresh policy sample,
/// and carries no gradient.
pub fn critic_loss(
    tape: &mut Tape,
    store: &ParamStore,
    net: &PolicyNet,
    cfg: &TrainConfig,
    alpha: f64,
    batch: &CriticBatch,
    noise: &CriticNoise,
) -> Result<CriticTerms> {
    let n = batch.rewards.len();
    let big_n = noise.uniform.rows() / n.max(1);

    // bootstrap target (values only)
    let xn = tape.detach(batch.x_next);
    let pn = net.actor_forward(tape, store, xn)?;
    let (an, logp_n) = squashed_sample(tape, pn.mean, pn.log_std, &noise.next)?;
    let q1n = net.q(tape, store, 0, true, xn, an)?;
    let q2n = net.q(tape, store, 1, true, xn, an)?;
    let qn = tape.minimum(q1n, q2n)?;
    let (qn, logp_n) = (tape.value(qn).data().to_vec(), tape.value(logp_n).data().to_vec());
    let y: Vec<f64> = (0..n)
        .map(|i| batch.rewards[i] + cfg.gamma * batch.not_done[i] * (qn[i] - alpha * logp_n[i]))
        .collect();
    let y = tape.constant(Tensor::new(vec![n, 1], y)?);

    // proposals: N uniform then N current-policy actions per row
    let xd = tape.detach(batch.x);
    let rep: Vec<usize> = (0..n).flat_map(|i| std::iter::repeat_n(i, big_n)).collect();
    let xd_rep = tape.select_rows(xd, &rep)?;
    let pp = net.actor_forward(tape, store, xd_rep)?;
    let (ap, logp_p) = squashed_sample(tape, pp.mean, pp.log_std, &noise.policy)?;
    let (ap, logp_p) = (tape.value(ap).clone(), tape.value(logp_p).data().to_vec());
    let mut acts = Vec::with_capacity(n * 2 * big_n * ACTION_DIM);
    let mut log_density = Vec::with_capacity(n * 2 * big_n);
    let uniform_ld = -(2.0f64.powi(ACTION_DIM as i32)).ln();
    for i in 0..n {
        for j in 0..big_n {
            acts.extend_from_slice(noise.uniform.row(i * big_n + j));
            log_density.push(uniform_ld);
        }
        for j in 0..big_n {
            acts.extend_from_slice(ap.row(i * big_n + j));
            log_density.push(logp_p[i * big_n + j]);
        }
    }
    let acts = tape.constant(Tensor::new(vec![n * 2 * big_n, ACTION_DIM], acts)?);
    let log_density = Tensor::new(vec![n, 2 * big_n], log_density)?;
    let rep2: Vec<usize> = (0..n).flat_map(|i| std::iter::repeat_n(i, 2 * big_n)).collect();
    let x_rep = tape.select_rows(batch.x, &rep2)?;
    let a_data = tape.constant(batch.actions.clone());

    let mut bellman = Vec::with_capacity(2);
    let mut conservative = Vec::with_capacity(2);
    let mut total: Option<Var> = None;
    for which in 0..2 {
        let q = net.q(tape, store, which, false, batch.x, a_data)?;
        let b = tape.mse(q, y)?;
        let qp = net.q(tape, store, which, false, x_rep, acts)?;
        let qp = tape.reshape(qp, &[n, 2 * big_n])?;
        let push = match cfg.cql_push_up {
            PushUp::Data => tape.reshape(q, &[n])?,
            PushUp::Policy => {
                let pol = tape.slice_cols(qp, big_n, big_n)?;
                tape.mean_axis(pol, 1)?
            }
        };
        let c = conservative_term(tape, qp, cfg.cql_importance.then_some(&log_density), push)?;
        let half_b = tape.scale(b, 0.5);
        let wc = tape.scale(c, cfg.cql_weight);
        let term = tape.add(half_b, wc)?;
        total = Some(match total {
            Some(t) => tape.add(t, term)?,
            None => term,
        });
        bellman.push(b);
        conservative.push(c);
    }
    Ok(CriticTerms {
        loss: total.expect("two critics"),
        bellman: [bellman[0], bellman[1]],
        conservative: [conservative[0], conservative[1]],
    })
}

#[derive(Clone, Copy, Debug)]
pub struct ActorTerms {
    pub loss: Var,
    /// Per-row log-probability of the sampled actions, `[n]`.
    pub logp: Var,
}

/// `mean(α log π(a|s) − min_i Q_i(s, a))` with `a` sampled by
/// reparameterization from the actor on `x` (which should carry no gradient
/// into the trunk).
pub fn actor_loss(tape: &mut Tape, store: &ParamStore, net: &PolicyNet, alpha: f64, x: Var, noise: &Tensor) -> Result<ActorTerms> {
    let n = tape.shape(x)[0];
    let p = net.actor_forward(tape, store, x)?;
    let (a, logp) = squashed_sample(tape, p.mean, p.log_std, noise)?;
    let q1 = net.q(tape, store, 0, false, x, a)?;
    let q2 = net.q(tape, store, 1, false, x, a)?;
    let q = tape.minimum(q1, q2)?;
    let q = tape.reshape(q, &[n])?;
    let ent = tape.scale(logp, alpha);
    let diff = tape.sub(ent, q)?;
    let loss = tape.mean(diff);
    Ok(ActorTerms { loss, logp })
}
