//! Layers built from tape primitives. Each layer owns only [`ParamId`]s; the
//! values live in a [`ParamStore`] and are bound onto a tape per forward pass.

use rand::Rng as _;

use super::params::{ParamId, ParamStore};
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use super::{NumgradError, Result};
use crate::rng::Rng;

fn uniform(rng: &mut Rng, shape: &[usize], bound: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::from_parts(shape.to_vec(), data)
}

/// Affine map `x W + b` with `W: [in, out]`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, output: usize, rng: &mut Rng) -> Result<Self> {
        let bound = (6.0 / (input + output) as f64).sqrt();
        let w = store.insert(format!("{name}.w"), uniform(rng, &[input, output], bound))?;
        let b = store.insert(format!("{name}.b"), Tensor::zeros(&[output]))?;
        Ok(Self { w, b, input, output })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w = tape.param(store, self.w);
        let b = tape.param(store, self.b);
        let y = tape.matmul(x, w)?;
        tape.add_bias(y, b)
    }

    pub fn ids(&self) -> Vec<ParamId> {
        vec![self.w, self.b]
    }
}

/// Stack of linear layers with ReLU between them (none after the last).
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    pub fn new(store: &mut ParamStore, name: &str, sizes: &[usize], rng: &mut Rng) -> Result<Self> {
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(store, &format!("{name}.{i}"), w[0], w[1], rng))
            .collect::<Result<_>>()?;
        Ok(Self { layers })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, mut x: Var) -> Result<Var> {
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            x = layer.forward(tape, store, x)?;
            if i != last {
                x = tape.relu(x);
            }
        }
        Ok(x)
    }

    pub fn ids(&self) -> Vec<ParamId> {
        self.layers.iter().flat_map(Linear::ids).collect()
    }
}

#[derive(Clone, Debug)]
pub struct Conv2d {
    pub w: ParamId,
    pub b: ParamId,
    pub stride: usize,
}

impl Conv2d {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        let fan_in = in_ch * kernel * kernel;
        let bound = (6.0 / fan_in as f64).sqrt();
        let w = store.insert(format!("{name}.w"), uniform(rng, &[out_ch, in_ch, kernel, kernel], bound))?;
        let b = store.insert(format!("{name}.b"), Tensor::zeros(&[out_ch]))?;
        Ok(Self { w, b, stride })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w = tape.param(store, self.w);
        let b = tape.param(store, self.b);
        tape.conv2d(x, w, b, self.stride)
    }
}

/// One LSTM step with gate order (input, forget, candidate, output):
///
/// `g = x W_ih + h W_hh + b`, `c' = σ(f)∘c + σ(i)∘tanh(g̃)`, `h' = σ(o)∘tanh(c')`.
pub fn lstm_cell(tape: &mut Tape, x: Var, h_prev: Var, c_prev: Var, w_ih: Var, w_hh: Var, bias: Var) -> Result<(Var, Var)> {
    let hs = tape.shape(h_prev).to_vec();
    let cs = tape.shape(c_prev).to_vec();
    if hs != cs || hs.len() != 2 {
        return Err(NumgradError::Shape {
            op: "lstm_cell state",
            left: hs,
            right: cs,
        });
    }
    let hidden = hs[1];
    let whh = tape.shape(w_hh).to_vec();
    if whh != [hidden, 4 * hidden] {
        return Err(NumgradError::Shape {
            op: "lstm_cell w_hh",
            left: hs,
            right: whh,
        });
    }
    let wih = tape.shape(w_ih).to_vec();
    if wih.len() != 2 || wih[1] != 4 * hidden {
        return Err(NumgradError::Shape {
            op: "lstm_cell w_ih",
            left: hs,
            right: wih,
        });
    }
    let gx = tape.matmul(x, w_ih)?;
    let gh = tape.matmul(h_prev, w_hh)?;
    let gates = tape.add(gx, gh)?;
    let gates = tape.add_bias(gates, bias)?;
    let i = tape.slice_cols(gates, 0, hidden)?;
    let f = tape.slice_cols(gates, hidden, hidden)?;
    let g = tape.slice_cols(gates, 2 * hidden, hidden)?;
    let o = tape.slice_cols(gates, 3 * hidden, hidden)?;
    let i = tape.sigmoid(i);
    let f = tape.sigmoid(f);
    let g = tape.tanh(g);
    let o = tape.sigmoid(o);
    let keep = tape.mul(f, c_prev)?;
    let write = tape.mul(i, g)?;
    let c = tape.add(keep, write)?;
    let tc = tape.tanh(c);
    let h = tape.mul(o, tc)?;
    Ok((h, c))
}

#[derive(Clone, Debug)]
pub struct Lstm {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl Lstm {
    /// Forget-gate bias starts at 1 so early training retains state.
    pub fn new(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut Rng) -> Result<Self> {
        let bound = (1.0 / hidden as f64).sqrt();
        let w_ih = store.insert(format!("{name}.w_ih"), uniform(rng, &[input, 4 * hidden], bound))?;
        let w_hh = store.insert(format!("{name}.w_hh"), uniform(rng, &[hidden, 4 * hidden], bound))?;
        let mut b = vec![0.0; 4 * hidden];
        b[hidden..2 * hidden].iter_mut().for_each(|v| *v = 1.0);
        let b = store.insert(format!("{name}.b"), Tensor::vector(b))?;
        Ok(Self {
            w_ih,
            w_hh,
            b,
            input,
            hidden,
        })
    }

    pub fn step(&self, tape: &mut Tape, store: &ParamStore, x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
        let w_ih = tape.param(store, self.w_ih);
        let w_hh = tape.param(store, self.w_hh);
        let b = tape.param(store, self.b);
        lstm_cell(tape, x, h, c, w_ih, w_hh, b)
    }

    pub fn zero_state(&self, tape: &mut Tape, batch: usize) -> (Var, Var) {
        let h = tape.constant(Tensor::zeros(&[batch, self.hidden]));
        let c = tape.constant(Tensor::zeros(&[batch, self.hidden]));
        (h, c)
    }

    pub fn ids(&self) -> Vec<ParamId> {
        vec![self.w_ih, self.w_hh, self.b]
    }
}

/// Mask feature extractor: two 3×3 stride-2 ReLU convolutions (8 then 16
/// channels), flattened and projected linearly.
#[derive(Clone, Debug)]
pub struct MaskCnn {
    pub conv1: Conv2d,
    pub conv2: Conv2d,
    pub fc: Linear,
    pub height: usize,
    pub width: usize,
}

pub const CNN_FEATURES: usize = 32;

impl MaskCnn {
    pub fn new(store: &mut ParamStore, name: &str, height: usize, width: usize, rng: &mut Rng) -> Result<Self> {
        if height < 7 || width < 7 {
            return Err(NumgradError::InvalidTensor(format!(
                "mask of {height}x{width} is too small for the convolutional backbone"
            )));
        }
        let conv1 = Conv2d::new(store, &format!("{name}.conv1"), 1, 8, 3, 2, rng)?;
        let conv2 = Conv2d::new(store, &format!("{name}.conv2"), 8, 16, 3, 2, rng)?;
        let (h2, w2) = (((height - 3) / 2 + 1 - 3) / 2 + 1, ((width - 3) / 2 + 1 - 3) / 2 + 1);
        let fc = Linear::new(store, &format!("{name}.fc"), 16 * h2 * w2, CNN_FEATURES, rng)?;
        Ok(Self {
            conv1,
            conv2,
            fc,
            height,
            width,
        })
    }

    /// `masks: [N, 1, H, W]` with values in `[0, 1]` → `[N, 32]`.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, masks: Var) -> Result<Var> {
        let x = self.conv1.forward(tape, store, masks)?;
        let x = tape.relu(x);
        let x = self.conv2.forward(tape, store, x)?;
        let x = tape.relu(x);
        let s = tape.shape(x).to_vec();
        let x = tape.reshape(x, &[s[0], s[1] * s[2] * s[3]])?;
        self.fc.forward(tape, store, x)
    }

    pub fn ids(&self) -> Vec<ParamId> {
        vec![self.conv1.w, self.conv1.b, self.conv2.w, self.conv2.b, self.fc.w, self.fc.b]
    }
}
