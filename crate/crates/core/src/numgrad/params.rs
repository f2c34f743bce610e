use std::collections::HashMap;

use super::tape::Tape;
use super::tensor::Tensor;
use super::{NumgradError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    /// Insertion position in the owning store.
    pub fn index(self) -> usize {
        self.0
    }
}

/// A trainable tensor with its gradient accumulator.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

/// Flat, insertion-ordered collection of named trainable tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
    by_name: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(NumgradError::DuplicateParam(name));
        }
        let id = ParamId(self.params.len());
        let grad = Tensor::zeros(value.shape());
        self.by_name.insert(name.clone(), id);
        self.params.push(Param { name, value, grad });
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn require(&self, name: &str) -> Result<ParamId> {
        self.id(name).ok_or_else(|| NumgradError::UnknownParam(name.to_string()))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    /// Ids of parameters whose names start with `prefix`, in insertion order.
    pub fn ids_with_prefix(&self, prefix: &str) -> Vec<ParamId> {
        self.ids().filter(|&id| self.name(id).starts_with(prefix)).collect()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].grad
    }

    pub fn param(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub(crate) fn param_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    /// Moves the gradients accumulated on `tape` for bound parameters into the
    /// store's accumulators (additively).
    pub fn absorb_grads(&mut self, tape: &mut Tape) {
        let bound: Vec<_> = tape.bound_params().collect();
        for (id, var) in bound {
            if let Some(g) = tape.take_grad(var) {
                let acc = self.params[id.0].grad.data_mut();
                acc.iter_mut().zip(g.data()).for_each(|(a, b)| *a += b);
            }
        }
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub fn total_numel(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    /// `dst <- tau * src + (1 - tau) * dst`, pairwise over the two id lists.
    pub fn soft_update(&mut self, src: &[ParamId], dst: &[ParamId], tau: f64) {
        assert_eq!(src.len(), dst.len());
        for (&s, &d) in src.iter().zip(dst) {
            let from = self.params[s.0].value.data().to_vec();
            let to = self.params[d.0].value.data_mut();
            for (t, f) in to.iter_mut().zip(&from) {
                *t = tau * f + (1.0 - tau) * *t;
            }
        }
    }

    pub fn copy_values(&mut self, src: &[ParamId], dst: &[ParamId]) {
        assert_eq!(src.len(), dst.len());
        for (&s, &d) in src.iter().zip(dst) {
            let from = self.params[s.0].value.clone();
            self.params[d.0].value = from;
        }
    }
}

/// Adam optimizer over a fixed subset of a [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub(crate) params: Vec<ParamId>,
    pub(crate) m: Vec<Vec<f64>>,
    pub(crate) v: Vec<Vec<f64>>,
    pub(crate) steps: u64,
}

impl Adam {
    pub fn new(store: &ParamStore, params: Vec<ParamId>, lr: f64) -> Self {
        Self::with_hyper(store, params, lr, 0.9, 0.999, 1e-8)
    }

    pub fn with_hyper(store: &ParamStore, params: Vec<ParamId>, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        let m = params.iter().map(|&id| vec![0.0; store.value(id).numel()]).collect::<Vec<_>>();
        let v = m.clone();
        Self {
            lr,
            beta1,
            beta2,
            eps,
            params,
            m,
            v,
            steps: 0,
        }
    }

    pub fn params(&self) -> &[ParamId] {
        &self.params
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Applies one bias-corrected update to every managed parameter, then zeros
    /// their gradients. Nothing is modified if any gradient is non-finite.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        for &id in &self.params {
            if !store.grad(id).all_finite() {
                return Err(NumgradError::NonFiniteGrad(store.name(id).to_string()));
            }
        }
        self.steps += 1;
        let t = self.steps as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (k, &id) in self.params.iter().enumerate() {
            let p = store.param_mut(id);
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            let grads = p.grad.data_mut();
            let values = p.value.data_mut();
            for i in 0..values.len() {
                let g = grads[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                values[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
                grads[i] = 0.0;
            }
        }
        Ok(())
    }
}
