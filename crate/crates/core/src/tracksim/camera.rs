use std::f64::consts::{FRAC_PI_2, PI};

use super::embodiment::EmbodimentConfig;
use super::{RHO_STAR, TARGET_HEIGHT};

/// Minimum depth (m) in front of the camera; nearer points are clamped.
pub const NEAR_PLANE: f64 = 0.05;

/// Pinhole camera mounted on the agent, yawed with it and pitched so that the
/// target's mid-height point at the desired distance lands on the image
/// center.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Camera {
    pub height: f64,
    /// Downward tilt (rad); negative values tilt upward.
    pub pitch: f64,
    /// Focal length in pixels.
    pub focal: f64,
    pub width: usize,
    pub rows: usize,
}

/// Image-plane rectangle in continuous pixel coordinates (column `u`, row `v`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectedRect {
    pub u0: f64,
    pub u1: f64,
    pub v0: f64,
    pub v1: f64,
}

impl ProjectedRect {
    /// Inclusive pixel index range whose centers fall inside `[lo, hi]`,
    /// clipped to `0..n`.
    fn pixel_span(lo: f64, hi: f64, n: usize) -> Option<(usize, usize)> {
        let first = (lo - 0.5).ceil().max(0.0);
        let last = (hi - 0.5).floor().min(n as f64 - 1.0);
        (first <= last).then_some((first as usize, last as usize))
    }

    pub fn columns(&self, width: usize) -> Option<(usize, usize)> {
        Self::pixel_span(self.u0, self.u1, width)
    }

    pub fn rows(&self, height: usize) -> Option<(usize, usize)> {
        Self::pixel_span(self.v0, self.v1, height)
    }

    /// Number of pixels the rectangle fills on a `width × height` grid.
    pub fn area(&self, width: usize, height: usize) -> usize {
        match (self.columns(width), self.rows(height)) {
            (Some((c0, c1)), Some((r0, r1))) => (c1 - c0 + 1) * (r1 - r0 + 1),
            _ => 0,
        }
    }
}

impl Camera {
    pub fn new(e: &EmbodimentConfig) -> Self {
        Self {
            height: e.camera_height,
            pitch: (e.camera_height - TARGET_HEIGHT / 2.0).atan2(RHO_STAR),
            focal: (e.mask_w as f64 / 2.0) / (e.fov_h / 2.0).tan(),
            width: e.mask_w,
            rows: e.mask_h,
        }
    }

    /// Projects a point given in the agent frame (`x` forward, `y` left, `z`
    /// up from the ground) to `(u, v)`; depth is clamped to the near plane.
    pub fn project(&self, x: f64, y: f64, z: f64) -> (f64, f64) {
        let (s, c) = self.pitch.sin_cos();
        let dz = z - self.height;
        let depth = (x * c - dz * s).max(NEAR_PLANE);
        let up = x * s + dz * c;
        (
            self.width as f64 / 2.0 - self.focal * y / depth,
            self.rows as f64 / 2.0 - self.focal * up / depth,
        )
    }

    /// Bounding rectangle of a vertical cylinder standing at `(x, y)` in the
    /// agent frame: the image extent of its base and top rims. `None` when
    /// the cylinder's axis lies outside the horizontal field of view or
    /// behind the near plane.
    pub fn cylinder_rect(&self, x: f64, y: f64, radius: f64, height: f64, fov_h: f64) -> Option<ProjectedRect> {
        if x <= NEAR_PLANE || y.atan2(x).abs() > fov_h / 2.0 {
            return None;
        }
        let (sp, cp) = self.pitch.sin_cos();
        let mut rect = ProjectedRect {
            u0: f64::INFINITY,
            u1: f64::NEG_INFINITY,
            v0: f64::INFINITY,
            v1: f64::NEG_INFINITY,
        };
        for z in [0.0, height] {
            let dz = z - self.height;
            // rim point at angle a: lateral y + r sin a, depth d0 + r cp cos a,
            // elevation e0 + r sp cos a
            let depth = [x * cp - dz * sp, radius * cp, 0.0];
            let lateral = [y, 0.0, radius];
            let elevation = [x * sp + dz * cp, radius * sp, 0.0];
            let mut angles = vec![0.0, PI, FRAC_PI_2, -FRAC_PI_2];
            angles.extend(ratio_extrema(lateral, depth));
            angles.extend(ratio_extrema(elevation, depth));
            for a in angles {
                let (u, v) = self.project(x + radius * a.cos(), y + radius * a.sin(), z);
                rect.u0 = rect.u0.min(u);
                rect.u1 = rect.u1.max(u);
                rect.v0 = rect.v0.min(v);
                rect.v1 = rect.v1.max(v);
            }
        }
        Some(rect)
    }
}

/// Angles where `(n0 + n1 cos a + n2 sin a) / (d0 + d1 cos a + d2 sin a)` is
/// stationary. Setting the derivative to zero leaves
/// `P sin a + Q cos a + R = 0`.
fn ratio_extrema(n: [f64; 3], d: [f64; 3]) -> Vec<f64> {
    let p = n[0] * d[1] - n[1] * d[0];
    let q = n[2] * d[0] - n[0] * d[2];
    let r = n[2] * d[1] - n[1] * d[2];
    let amp = p.hypot(q);
    if amp < 1e-15 || r.abs() > amp {
        return Vec::new();
    }
    let phase = p.atan2(q);
    let spread = (-r / amp).acos();
    vec![phase + spread, phase - spread]
}
