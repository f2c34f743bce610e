use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

/// One step of an exported episode trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: u32,
    pub rho: f64,
    pub theta: f64,
    pub v_norm: f64,
    pub omega_norm: f64,
    pub reward: f64,
    pub lost: bool,
}

/// Writes one JSON object per line.
pub fn write_trace<W: Write>(mut out: W, records: &[TraceRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_trace<R: BufRead>(input: R) -> std::io::Result<Vec<TraceRecord>> {
    input
        .lines()
        .filter(|l| l.as_ref().map_or(true, |s| !s.trim().is_empty()))
        .map(|l| serde_json::from_str(&l?).map_err(std::io::Error::other))
        .collect()
}
