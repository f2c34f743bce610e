//! Parameter checkpoint archive.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic "CTXCKPT\0" | version u32 | payload_len u64 | payload | sha256(everything before)
//! payload := meta str
//!            n_params u32 { name str, ndim u32, dims u64*ndim, values f64* }
//!            n_optim u32 { name str, lr, beta1, beta2, eps f64, steps u64,
//!                          n u32 { param name str, m f64*, v f64* } }
//! ```

use std::path::Path;

use super::params::{Adam, ParamStore};
use super::tensor::Tensor;
use crate::codec::{self, ByteReader, ByteWriter, Truncated};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"CTXCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("checkpoint truncated: {0}")]
    Truncated(#[from] Truncated),
    #[error("checkpoint checksum mismatch")]
    Checksum,
    #[error("checkpoint is malformed: {0}")]
    Malformed(String),
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Parameters, optimizer state and free-form metadata (the training config).
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: String,
    pub store: ParamStore,
    pub optimizers: Vec<(String, Adam)>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut body = ByteWriter::new();
        body.str(&self.meta);
        body.u32(self.store.len() as u32);
        for (_, p) in self.store.iter() {
            body.str(&p.name);
            body.u32(p.value.shape().len() as u32);
            for &d in p.value.shape() {
                body.u64(d as u64);
            }
            body.f64s(p.value.data());
        }
        body.u32(self.optimizers.len() as u32);
        for (name, opt) in &self.optimizers {
            body.str(name);
            body.f64(opt.lr);
            body.f64(opt.beta1);
            body.f64(opt.beta2);
            body.f64(opt.eps);
            body.u64(opt.steps);
            body.u32(opt.params.len() as u32);
            for (k, &id) in opt.params.iter().enumerate() {
                body.str(self.store.name(id));
                body.f64s(&opt.m[k]);
                body.f64s(&opt.v[k]);
            }
        }
        let payload = body.finish_unhashed();
        let mut out = ByteWriter::new();
        out.bytes(CHECKPOINT_MAGIC);
        out.u32(CHECKPOINT_VERSION);
        out.u64(payload.len() as u64);
        out.bytes(&payload);
        out.finish_with_digest()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut head = ByteReader::new(bytes);
        if head.take(8).map_err(|_| CheckpointError::BadMagic)? != CHECKPOINT_MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = head.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let payload_len = head.u64()? as usize;
        head.take(payload_len.saturating_add(32))?;
        match codec::verify_digest(bytes) {
            Some(Ok(_)) => {}
            _ => return Err(CheckpointError::Checksum),
        }
        let mut r = ByteReader::new(&bytes[20..20 + payload_len]);
        let meta = r.str()?;
        let mut store = ParamStore::new();
        for _ in 0..r.u32()? {
            let name = r.str()?;
            let ndim = r.u32()? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(r.u64()? as usize);
            }
            let numel = shape.iter().product();
            let value = Tensor::new(shape, r.f64s(numel)?).map_err(|e| CheckpointError::Malformed(e.to_string()))?;
            store.insert(name, value).map_err(|e| CheckpointError::Malformed(e.to_string()))?;
        }
        let mut optimizers = Vec::new();
        for _ in 0..r.u32()? {
            let name = r.str()?;
            let (lr, beta1, beta2, eps) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?);
            let steps = r.u64()?;
            let n = r.u32()? as usize;
            let mut params = Vec::with_capacity(n);
            let mut m = Vec::with_capacity(n);
            let mut v = Vec::with_capacity(n);
            for _ in 0..n {
                let pname = r.str()?;
                let id = store
                    .id(&pname)
                    .ok_or_else(|| CheckpointError::Malformed(format!("optimizer `{name}` names unknown parameter `{pname}`")))?;
                let numel = store.value(id).numel();
                params.push(id);
                m.push(r.f64s(numel)?);
                v.push(r.f64s(numel)?);
            }
            optimizers.push((
                name,
                Adam {
                    lr,
                    beta1,
                    beta2,
                    eps,
                    params,
                    m,
                    v,
                    steps,
                },
            ));
        }
        if r.remaining() != 0 {
            return Err(CheckpointError::Malformed(format!("{} trailing payload bytes", r.remaining())));
        }
        Ok(Self { meta, store, optimizers })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn optimizer(&self, name: &str) -> Option<&Adam> {
        self.optimizers.iter().find(|(n, _)| n == name).map(|(_, o)| o)
    }
}
