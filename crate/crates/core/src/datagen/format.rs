//! Binary dataset container.
//!
//! ```text
//! magic "CTXDATA\0" | version u32 | body_len u64 | body | sha256(everything before)
//! body    := n_episodes u32 episode*
//! episode := camera_height v_max omega_max inertia_tau fov_h f64, mask_w mask_h u32,
//!            target_speed f64, seed u64, length u32, record*, final_mask
//! record  := mask, v_norm omega_norm reward rho theta f64, done u8, lost u8
//! mask    := n_runs u32 (label u8, run u16)*
//! ```
//! All integers and floats are little-endian.

use std::path::Path;

use super::{DatasetError, EpisodeRecord, TransitionRecord};
use crate::codec::{self, ByteReader, ByteWriter};
use crate::tracksim::{ActionCommand, EmbodimentConfig, Mask, LABEL_BACKGROUND, LABEL_OBSTACLE, LABEL_TARGET};

pub const DATASET_MAGIC: &[u8; 8] = b"CTXDATA\0";
pub const DATASET_VERSION: u32 = 1;
const HEADER_LEN: usize = 20;

fn write_mask(w: &mut ByteWriter, m: &Mask) {
    let mut runs: Vec<(u8, u16)> = Vec::new();
    for &v in &m.data {
        match runs.last_mut() {
            Some((label, n)) if *label == v && *n < u16::MAX => *n += 1,
            _ => runs.push((v, 1)),
        }
    }
    w.u32(runs.len() as u32);
    for (label, n) in runs {
        w.u8(label);
        w.bytes(&n.to_le_bytes());
    }
}

fn read_mask(r: &mut ByteReader, width: usize, height: usize) -> Result<Mask, DatasetError> {
    let n_runs = r.u32()? as usize;
    let mut data = Vec::with_capacity(width * height);
    for _ in 0..n_runs {
        let label = r.u8()?;
        let b = r.take(2)?;
        let n = u16::from_le_bytes([b[0], b[1]]) as usize;
        if ![LABEL_BACKGROUND, LABEL_OBSTACLE, LABEL_TARGET].contains(&label) {
            return Err(DatasetError::Malformed(format!("invalid mask label {label}")));
        }
        if data.len() + n > width * height {
            return Err(DatasetError::Malformed("mask runs overflow the grid".into()));
        }
        data.resize(data.len() + n, label);
    }
    if data.len() != width * height {
        return Err(DatasetError::Malformed(format!(
            "mask has {} pixels, expected {}",
            data.len(),
            width * height
        )));
    }
    Ok(Mask { width, height, data })
}

pub fn encode(episodes: &[EpisodeRecord]) -> Vec<u8> {
    let mut body = ByteWriter::new();
    body.u32(episodes.len() as u32);
    for ep in episodes {
        let e = &ep.embodiment;
        for v in [e.camera_height, e.v_max, e.omega_max, e.inertia_tau, e.fov_h] {
            body.f64(v);
        }
        body.u32(e.mask_w as u32);
        body.u32(e.mask_h as u32);
        body.f64(ep.target_speed);
        body.u64(ep.seed);
        body.u32(ep.records.len() as u32);
        for rec in &ep.records {
            write_mask(&mut body, &rec.mask);
            for v in [rec.action.v_norm, rec.action.omega_norm, rec.reward, rec.rho, rec.theta] {
                body.f64(v);
            }
            body.u8(rec.done as u8);
            body.u8(rec.lost as u8);
        }
        write_mask(&mut body, &ep.final_mask);
    }
    let body = body.finish_unhashed();
    let mut out = ByteWriter::new();
    out.bytes(DATASET_MAGIC);
    out.u32(DATASET_VERSION);
    out.u64(body.len() as u64);
    out.bytes(&body);
    out.finish_with_digest()
}

fn flag(r: &mut ByteReader) -> Result<bool, DatasetError> {
    match r.u8()? {
        0 => Ok(false),
        1 => Ok(true),
        v => Err(DatasetError::Malformed(format!("invalid flag byte {v}"))),
    }
}

pub fn decode(bytes: &[u8]) -> Result<Vec<EpisodeRecord>, DatasetError> {
    let mut head = ByteReader::new(bytes);
    if head.take(8).map_err(|_| DatasetError::BadMagic)? != DATASET_MAGIC {
        return Err(DatasetError::BadMagic);
    }
    let version = head.u32()?;
    if version != DATASET_VERSION {
        return Err(DatasetError::Version {
            found: version,
            expected: DATASET_VERSION,
        });
    }
    let body_len = head.u64()? as usize;
    head.take(body_len.saturating_add(32))?;
    if !matches!(codec::verify_digest(&bytes[..HEADER_LEN + body_len + 32]), Some(Ok(_))) {
        return Err(DatasetError::Checksum);
    }
    if bytes.len() != HEADER_LEN + body_len + 32 {
        return Err(DatasetError::Malformed("trailing bytes after checksum".into()));
    }
    let mut r = ByteReader::new(&bytes[HEADER_LEN..HEADER_LEN + body_len]);
    let n = r.u32()? as usize;
    let mut episodes = Vec::with_capacity(n.min(1 << 16));
    for _ in 0..n {
        let (camera_height, v_max, omega_max, inertia_tau, fov_h) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?, r.f64()?);
        let (mask_w, mask_h) = (r.u32()? as usize, r.u32()? as usize);
        let embodiment = EmbodimentConfig {
            camera_height,
            v_max,
            omega_max,
            inertia_tau,
            fov_h,
            mask_w,
            mask_h,
        };
        embodiment.validate().map_err(|e| DatasetError::Malformed(e.to_string()))?;
        let target_speed = r.f64()?;
        let seed = r.u64()?;
        let len = r.u32()? as usize;
        let mut records = Vec::with_capacity(len.min(1 << 16));
        for _ in 0..len {
            let mask = read_mask(&mut r, mask_w, mask_h)?;
            let (v, w, reward, rho, theta) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?, r.f64()?);
            let done = flag(&mut r)?;
            let lost = flag(&mut r)?;
            records.push(TransitionRecord {
                mask,
                action: ActionCommand::new(v, w),
                reward,
                done,
                lost,
                rho,
                theta,
            });
        }
        let final_mask = read_mask(&mut r, mask_w, mask_h)?;
        let ep = EpisodeRecord {
            embodiment,
            target_speed,
            seed,
            records,
            final_mask,
        };
        ep.check()?;
        episodes.push(ep);
    }
    if r.remaining() != 0 {
        return Err(DatasetError::Malformed(format!("{} unread body bytes", r.remaining())));
    }
    Ok(episodes)
}

pub fn save(path: impl AsRef<Path>, episodes: &[EpisodeRecord]) -> Result<Vec<u8>, DatasetError> {
    let path = path.as_ref();
    for ep in episodes {
        ep.embodiment.validate().map_err(|e| DatasetError::Invalid(e.to_string()))?;
        let (w, h) = (ep.embodiment.mask_w, ep.embodiment.mask_h);
        if ep.records.iter().map(|r| &r.mask).chain([&ep.final_mask]).any(|m| (m.width, m.height) != (w, h)) {
            return Err(DatasetError::Invalid(format!("episode {} has masks that are not {w}x{h}", ep.seed)));
        }
        ep.check()?;
    }
    let bytes = encode(episodes);
    std::fs::write(path, &bytes).map_err(|e| DatasetError::Io(path.display().to_string(), e))?;
    Ok(bytes)
}

pub fn load(path: impl AsRef<Path>) -> Result<Vec<EpisodeRecord>, DatasetError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| DatasetError::Io(path.display().to_string(), e))?;
    decode(&bytes)
}
