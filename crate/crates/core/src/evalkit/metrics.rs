use super::EvalError;
use crate::tracksim::{Mask, TraceRecord, LABEL_TARGET, MAX_STEPS};

/// Tight box around the target pixels, normalized by the image size.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundingBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    /// `None` when the mask shows no target.
    pub fn from_mask(mask: &Mask) -> Option<Self> {
        let (c0, r0, c1, r1) = mask.bounds(LABEL_TARGET)?;
        let (w, h) = (mask.width as f64, mask.height as f64);
        Some(Self {
            cx: (c0 + c1 + 1) as f64 / 2.0 / w,
            cy: (r0 + r1 + 1) as f64 / 2.0 / h,
            w: (c1 - c0 + 1) as f64 / w,
            h: (r1 - r0 + 1) as f64 / h,
        })
    }
}

/// `1 / (1 + Δc + Δs)` with Euclidean center and size deviations.
pub fn r_dev(b: &BoundingBox, init: &BoundingBox) -> f64 {
    let dc = (b.cx - init.cx).hypot(b.cy - init.cy);
    let ds = (b.w - init.w).hypot(b.h - init.h);
    1.0 / (1.0 + dc + ds)
}

/// Mean `r_dev` over all boxes against the first; missing boxes score 0.
pub fn mr_from_boxes(boxes: &[Option<BoundingBox>]) -> Result<f64, EvalError> {
    let first = boxes.first().ok_or(EvalError::EmptyTrace)?;
    let init = first.ok_or(EvalError::EmptyInitialMask)?;
    let total: f64 = boxes.iter().map(|b| b.as_ref().map_or(0.0, |b| r_dev(b, &init))).sum();
    Ok(total / boxes.len() as f64)
}

/// Box-stability score of a mask sequence; the first mask defines the
/// reference box.
pub fn mr_metric(masks: &[Mask]) -> Result<f64, EvalError> {
    let boxes: Vec<Option<BoundingBox>> = masks.iter().map(BoundingBox::from_mask).collect();
    mr_from_boxes(&boxes)
}

pub fn accumulated_reward(trace: &[TraceRecord]) -> f64 {
    trace.iter().map(|r| r.reward).sum()
}

/// Whether a recorded trace counts as a success when a failure needs
/// `lost_limit` consecutive lost steps. Traces cut short by an earlier
/// termination never count.
pub fn rejudge_success(trace: &[TraceRecord], lost_limit: u32) -> bool {
    if trace.len() < MAX_STEPS as usize {
        return false;
    }
    let mut run = 0;
    for r in trace {
        run = if r.lost { run + 1 } else { 0 };
        if run >= lost_limit {
            return false;
        }
    }
    true
}
