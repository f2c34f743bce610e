use super::ContextConfig;
use crate::numgrad::nn::{Linear, Lstm, MaskCnn, Mlp, CNN_FEATURES};
use crate::numgrad::{ParamId, ParamStore, Result, Tape, Tensor, Var};
use crate::rng::Rng;
use crate::tracksim::{ActionCommand, Mask};

/// The `K` most recent (mask, action) pairs, oldest first. `None` marks a
/// pre-episode slot, encoded as an all-zero mask and action.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextHistory {
    pub slots: Vec<Option<(Mask, ActionCommand)>>,
}

impl ContextHistory {
    /// History at the start of an episode: every slot padded.
    pub fn empty(k: usize) -> Self {
        Self { slots: vec![None; k] }
    }

    pub fn k(&self) -> usize {
        self.slots.len()
    }

    /// Appends the newest pair, dropping the oldest.
    pub fn push(&mut self, mask: Mask, action: ActionCommand) {
        self.slots.remove(0);
        self.slots.push(Some((mask, action)));
    }

    pub fn is_padded(&self, slot: usize) -> bool {
        self.slots[slot].is_none()
    }
}

/// One history expressed as indices into a shared mask batch: `Some((row,
/// action))` per filled slot.
#[derive(Clone, Debug, PartialEq)]
pub struct Window {
    pub slots: Vec<Option<(usize, [f64; 2])>>,
}

/// Stacks masks into `[N, 1, H, W]` with labels scaled to `[0, 1]`.
pub fn masks_tensor(masks: &[&Mask]) -> Tensor {
    let (h, w) = (masks[0].height, masks[0].width);
    let mut data = Vec::with_capacity(masks.len() * h * w);
    for m in masks {
        assert_eq!((m.height, m.width), (h, w), "masks in a batch must share a size");
        data.extend(m.normalized());
    }
    Tensor::new(vec![masks.len(), 1, h, w], data).expect("non-empty mask batch")
}

/// Mask CNN, LSTM over the `K` slots and a linear projection to `d_z`.
#[derive(Clone, Debug)]
pub struct ContextEncoder {
    pub cnn: MaskCnn,
    pub lstm: Lstm,
    pub proj: Linear,
    pub k: usize,
    pub d_z: usize,
}

impl ContextEncoder {
    pub fn new(store: &mut ParamStore, prefix: &str, cfg: &ContextConfig, mask_h: usize, mask_w: usize, rng: &mut Rng) -> Result<Self> {
        let cnn = MaskCnn::new(store, &format!("{prefix}.cnn"), mask_h, mask_w, rng)?;
        let lstm = Lstm::new(store, &format!("{prefix}.lstm"), CNN_FEATURES + 2, cfg.hidden, rng)?;
        let proj = Linear::new(store, &format!("{prefix}.proj"), cfg.hidden, cfg.d_z, rng)?;
        Ok(Self {
            cnn,
            lstm,
            proj,
            k: cfg.k,
            d_z: cfg.d_z,
        })
    }

    pub fn ids(&self) -> Vec<ParamId> {
        let mut ids = self.cnn.ids();
        ids.extend(self.lstm.ids());
        ids.extend(self.proj.ids());
        ids
    }

    /// CNN features `[N, 32]` of a mask batch `[N, 1, H, W]`.
    pub fn features(&self, tape: &mut Tape, store: &ParamStore, masks: Var) -> Result<Var> {
        self.cnn.forward(tape, store, masks)
    }

    /// Encodes windows whose slots index rows of `feats`; `pad_row` holds the
    /// features of an all-zero mask. Returns `[windows, d_z]`.
    pub fn encode_features(&self, tape: &mut Tape, store: &ParamStore, feats: Var, pad_row: usize, windows: &[Window]) -> Result<Var> {
        let n = windows.len();
        let (mut h, mut c) = self.lstm.zero_state(tape, n);
        for j in 0..self.k {
            let mut rows = Vec::with_capacity(n);
            let mut acts = Vec::with_capacity(n * 2);
            for w in windows {
                match w.slots[j] {
                    Some((row, a)) => {
                        rows.push(row);
                        acts.extend(a);
                    }
                    None => {
                        rows.push(pad_row);
                        acts.extend([0.0, 0.0]);
                    }
                }
            }
            let x = tape.select_rows(feats, &rows)?;
            let a = tape.constant(Tensor::new(vec![n, 2], acts)?);
            let u = tape.concat(&[x, a], 1)?;
            (h, c) = self.lstm.step(tape, store, u, h, c)?;
        }
        self.proj.forward(tape, store, h)
    }

    /// Encodes windows over `masks`; an all-zero padding mask is appended
    /// internally.
    pub fn encode_windows(&self, tape: &mut Tape, store: &ParamStore, masks: &[&Mask], windows: &[Window]) -> Result<Var> {
        let (h, w) = (self.cnn.height, self.cnn.width);
        let pad = Mask::blank(w, h);
        let mut all: Vec<&Mask> = masks.to_vec();
        all.push(&pad);
        let x = tape.constant(masks_tensor(&all));
        let feats = self.features(tape, store, x)?;
        self.encode_features(tape, store, feats, masks.len(), windows)
    }

    /// `z` for each history. Returns `[histories, d_z]`.
    pub fn encode(&self, tape: &mut Tape, store: &ParamStore, histories: &[&ContextHistory]) -> Result<Var> {
        let mut masks = Vec::new();
        let windows = histories
            .iter()
            .map(|hist| {
                assert_eq!(hist.k(), self.k, "history length must equal K");
                Window {
                    slots: hist
                        .slots
                        .iter()
                        .map(|s| {
                            s.as_ref().map(|(m, a)| {
                                masks.push(m);
                                (masks.len() - 1, a.to_array())
                            })
                        })
                        .collect(),
                }
            })
            .collect::<Vec<_>>();
        self.encode_windows(tape, store, &masks, &windows)
    }
}

/// MLP from `z` to (predicted reward, predicted normalized height).
#[derive(Clone, Debug)]
pub struct AuxHead {
    pub mlp: Mlp,
}

impl AuxHead {
    pub fn new(store: &mut ParamStore, prefix: &str, cfg: &ContextConfig, rng: &mut Rng) -> Result<Self> {
        Ok(Self {
            mlp: Mlp::new(store, prefix, &[cfg.d_z, cfg.aux_hidden, 2], rng)?,
        })
    }

    pub fn ids(&self) -> Vec<ParamId> {
        self.mlp.ids()
    }

    /// `[N, d_z]` → `[N, 2]` with columns (r̂, ĥ / HEIGHT_SCALE).
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, z: Var) -> Result<Var> {
        self.mlp.forward(tape, store, z)
    }
}
