//! Central finite-difference gradient checking.
//!
//! The numerical side only evaluates forward values on fresh tapes, so it is
//! independent of every backward rule it checks.

use super::{ParamId, ParamStore, Result, Tape, Tensor, Var};

#[derive(Clone, Debug)]
pub struct GradCheck {
    /// Norm-wise relative error `|analytic - numeric| / max(|analytic|, |numeric|)`
    /// for each input.
    pub rel_errors: Vec<f64>,
}

impl GradCheck {
    pub fn max_rel_error(&self) -> f64 {
        self.rel_errors.iter().copied().fold(0.0, f64::max)
    }
}

/// Compares backward-pass gradients of `f` against central differences with
/// step `eps` for every element of every input.
pub fn check<F>(inputs: &[Tensor], eps: f64, f: F) -> Result<GradCheck>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.variable(t.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| tape.grad(v).map_or_else(|| vec![0.0; t.numel()], |g| g.data().to_vec()))
        .collect();

    let eval = |xs: &[Tensor]| -> Result<f64> {
        let mut t = Tape::new();
        let vs: Vec<Var> = xs.iter().map(|x| t.constant(x.clone())).collect();
        let out = f(&mut t, &vs)?;
        Ok(t.value(out).item())
    };

    let mut rel_errors = Vec::with_capacity(inputs.len());
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (k, a) in analytic.iter().enumerate() {
        let mut diff2 = 0.0;
        let mut an2 = 0.0;
        let mut nu2 = 0.0;
        for i in 0..inputs[k].numel() {
            let orig = inputs[k].data()[i];
            work[k].data_mut()[i] = orig + eps;
            let up = eval(&work)?;
            work[k].data_mut()[i] = orig - eps;
            let down = eval(&work)?;
            work[k].data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            diff2 += (a[i] - numeric).powi(2);
            an2 += a[i] * a[i];
            nu2 += numeric * numeric;
        }
        let denom = an2.sqrt().max(nu2.sqrt());
        rel_errors.push(if denom < 1e-12 { diff2.sqrt() } else { diff2.sqrt() / denom });
    }
    Ok(GradCheck { rel_errors })
}

/// Like [`check`], but over parameters of a store bound with
/// [`Tape::param`]. Each listed parameter yields one relative error.
pub fn check_params<F>(store: &ParamStore, ids: &[ParamId], eps: f64, f: F) -> Result<GradCheck>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    let mut work = store.clone();
    work.zero_grads();
    let mut tape = Tape::new();
    let loss = f(&mut tape, &work)?;
    tape.backward(loss)?;
    work.absorb_grads(&mut tape);
    let analytic: Vec<Vec<f64>> = ids.iter().map(|&id| work.grad(id).data().to_vec()).collect();

    let eval = |s: &ParamStore| -> Result<f64> {
        let mut t = Tape::new();
        let out = f(&mut t, s)?;
        Ok(t.value(out).item())
    };
    let mut rel_errors = Vec::with_capacity(ids.len());
    for (&id, a) in ids.iter().zip(&analytic) {
        let (mut diff2, mut an2, mut nu2) = (0.0, 0.0, 0.0);
        for i in 0..a.len() {
            let orig = work.value(id).data()[i];
            work.value_mut(id).data_mut()[i] = orig + eps;
            let up = eval(&work)?;
            work.value_mut(id).data_mut()[i] = orig - eps;
            let down = eval(&work)?;
            work.value_mut(id).data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            diff2 += (a[i] - numeric).powi(2);
            an2 += a[i] * a[i];
            nu2 += numeric * numeric;
        }
        let denom = an2.sqrt().max(nu2.sqrt());
        rel_errors.push(if denom < 1e-12 { diff2.sqrt() } else { diff2.sqrt() / denom });
    }
    Ok(GradCheck { rel_errors })
}

type Case = (&'static str, Vec<Vec<usize>>, fn(&mut Tape, &[Var]) -> Result<Var>);

/// Weighted sum `Σ y ∘ c` with a fixed, non-uniform `c`, so every output
/// element receives a distinct upstream gradient.
fn project(tape: &mut Tape, y: Var) -> Result<Var> {
    let shape = tape.shape(y).to_vec();
    let n: usize = shape.iter().product();
    let c = (0..n).map(|i| 0.3 + ((i * 7 + 3) % 11) as f64 * 0.17).collect();
    let c = tape.constant(Tensor::new(shape, c)?);
    let p = tape.mul(y, c)?;
    Ok(tape.sum(p))
}

fn cases() -> Vec<Case> {
    vec![
        ("matmul", vec![vec![3, 4], vec![4, 2]], |t, v| {
            let y = t.matmul(v[0], v[1])?;
            project(t, y)
        }),
        ("add", vec![vec![2, 3], vec![2, 3]], |t, v| {
            let y = t.add(v[0], v[1])?;
            project(t, y)
        }),
        ("sub", vec![vec![2, 3], vec![2, 3]], |t, v| {
            let y = t.sub(v[0], v[1])?;
            project(t, y)
        }),
        ("mul", vec![vec![2, 3], vec![2, 3]], |t, v| {
            let y = t.mul(v[0], v[1])?;
            project(t, y)
        }),
        ("minimum", vec![vec![2, 3], vec![2, 3]], |t, v| {
            let y = t.minimum(v[0], v[1])?;
            project(t, y)
        }),
        ("add_bias", vec![vec![3, 4], vec![4]], |t, v| {
            let y = t.add_bias(v[0], v[1])?;
            project(t, y)
        }),
        ("scale", vec![vec![2, 3]], |t, v| {
            let y = t.scale(v[0], -1.7);
            project(t, y)
        }),
        ("add_scalar", vec![vec![2, 3]], |t, v| {
            let y = t.add_scalar(v[0], 0.4);
            let y = t.mul(y, y)?;
            project(t, y)
        }),
        ("tanh", vec![vec![2, 3]], |t, v| {
            let y = t.tanh(v[0]);
            project(t, y)
        }),
        ("sigmoid", vec![vec![2, 3]], |t, v| {
            let y = t.sigmoid(v[0]);
            project(t, y)
        }),
        ("relu", vec![vec![2, 3]], |t, v| {
            let y = t.relu(v[0]);
            project(t, y)
        }),
        ("exp", vec![vec![2, 3]], |t, v| {
            let y = t.exp(v[0]);
            project(t, y)
        }),
        ("log", vec![vec![2, 3]], |t, v| {
            let y = t.mul(v[0], v[0])?;
            let y = t.add_scalar(y, 0.5);
            let y = t.log(y);
            project(t, y)
        }),
        ("softplus", vec![vec![2, 3]], |t, v| {
            let y = t.softplus(v[0]);
            project(t, y)
        }),
        ("clamp", vec![vec![2, 3]], |t, v| {
            let y = t.clamp(v[0], -0.5, 0.5);
            project(t, y)
        }),
        ("sum", vec![vec![2, 3]], |t, v| {
            let y = t.tanh(v[0]);
            Ok(t.sum(y))
        }),
        ("mean", vec![vec![2, 3]], |t, v| {
            let y = t.tanh(v[0]);
            Ok(t.mean(y))
        }),
        ("sum_axis", vec![vec![2, 3, 2]], |t, v| {
            let y = t.sum_axis(v[0], 1)?;
            let y = t.tanh(y);
            project(t, y)
        }),
        ("mean_axis", vec![vec![3, 4]], |t, v| {
            let y = t.mean_axis(v[0], 0)?;
            let y = t.tanh(y);
            project(t, y)
        }),
        ("logsumexp", vec![vec![3, 4]], |t, v| {
            let y = t.logsumexp(v[0], 1)?;
            project(t, y)
        }),
        ("concat", vec![vec![2, 3], vec![2, 1], vec![2, 2]], |t, v| {
            let y = t.concat(&[v[0], v[1], v[2]], 1)?;
            let z = t.concat(&[y, y], 0)?;
            project(t, z)
        }),
        ("l2_norm", vec![vec![3, 4]], |t, v| {
            let y = t.l2_norm(v[0]);
            project(t, y)
        }),
        ("cosine_similarity", vec![vec![3, 4], vec![3, 4]], |t, v| {
            let y = t.cosine_similarity(v[0], v[1], 1e-8)?;
            project(t, y)
        }),
        ("mse", vec![vec![2, 3], vec![2, 3]], |t, v| t.mse(v[0], v[1])),
        ("conv2d", vec![vec![2, 2, 7, 6], vec![3, 2, 3, 3], vec![3]], |t, v| {
            let y = t.conv2d(v[0], v[1], v[2], 2)?;
            project(t, y)
        }),
        ("reshape", vec![vec![2, 6]], |t, v| {
            let y = t.reshape(v[0], &[3, 4])?;
            let y = t.logsumexp(y, 1)?;
            project(t, y)
        }),
        ("select_rows", vec![vec![3, 2]], |t, v| {
            let y = t.select_rows(v[0], &[2, 0, 2, 1])?;
            let y = t.tanh(y);
            project(t, y)
        }),
        ("slice_cols", vec![vec![2, 5]], |t, v| {
            let y = t.slice_cols(v[0], 1, 3)?;
            project(t, y)
        }),
        ("lstm_cell", vec![vec![2, 3], vec![2, 4], vec![2, 4], vec![3, 16], vec![4, 16], vec![16]], |t, v| {
            let (h, c) = super::nn::lstm_cell(t, v[0], v[1], v[2], v[3], v[4], v[5])?;
            let s = t.concat(&[h, c], 1)?;
            project(t, s)
        }),
    ]
}

/// Random input whose entries avoid the kinks of relu, clamp and minimum.
fn sample_input(rng: &mut crate::rng::Rng, shape: &[usize], salt: usize) -> Tensor {
    use rand::Rng as _;
    let n = shape.iter().product();
    let data = (0..n)
        .map(|i| {
            let mag: f64 = rng.random_range(0.05..0.45) + if (i + salt).is_multiple_of(3) { 0.55 } else { 0.0 };
            if rng.random_bool(0.5) {
                mag
            } else {
                -mag
            }
        })
        .collect();
    Tensor::from_parts(shape.to_vec(), data)
}

/// Runs every primitive's finite-difference check at `points` random input
/// points and returns the worst relative error per primitive.
pub fn primitive_suite(points: usize, seed: u64, eps: f64) -> Result<Vec<(&'static str, f64)>> {
    let mut out = Vec::new();
    for (k, (name, shapes, f)) in cases().into_iter().enumerate() {
        let mut worst: f64 = 0.0;
        for p in 0..points {
            let mut rng = crate::rng::child(seed, name, p as u64);
            let mut inputs: Vec<Tensor> = shapes.iter().enumerate().map(|(s, sh)| sample_input(&mut rng, sh, s + k)).collect();
            if name == "minimum" {
                // keep the pair at least 0.1 apart so no element sits on the tie
                let a = inputs[0].data().to_vec();
                for (b, av) in inputs[1].data_mut().iter_mut().zip(a) {
                    if (*b - av).abs() < 0.1 {
                        *b = av + 0.3;
                    }
                }
            }
            if name == "clamp" {
                for x in inputs[0].data_mut() {
                    if (x.abs() - 0.5).abs() < 0.05 {
                        *x *= 0.5;
                    }
                }
            }
            let gc = check(&inputs, eps, f)?;
            worst = worst.max(gc.max_rel_error());
        }
        out.push((name, worst));
    }
    Ok(out)
}
