//! Independent reference computations shared by the integration tests. They
//! restate the model from first principles and share no code with the crate.
#![allow(dead_code)]

use std::f64::consts::PI;

/// Closed-form step reward.
pub fn reward_oracle(rho: f64, theta: f64) -> f64 {
    1.0 - (rho - 2.5).abs() / 7.5 - theta.abs() / (PI / 4.0)
}

/// Pixel area of the 1.7 m x 0.25 m target cylinder standing `rho` metres
/// straight ahead of a camera at height `h`, from a dense sampling of its
/// top and bottom rims through a pinhole aimed at the target's mid-height
/// point 2.5 m away. Pixels count when their centers fall inside the
/// projected rectangle.
pub fn area_oracle(h: f64, rho: f64, w: usize, rows: usize, fov: f64) -> usize {
    let pitch = (h - 1.7 / 2.0).atan2(2.5);
    let f = (w as f64 / 2.0) / (fov / 2.0).tan();
    let (mut u0, mut u1, mut v0, mut v1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for k in 0..3600 {
        let a = k as f64 * 2.0 * PI / 3600.0;
        for z in [0.0, 1.7] {
            let (x, y) = (rho + 0.25 * a.cos(), 0.25 * a.sin());
            let dz = z - h;
            let depth = (x * pitch.cos() - dz * pitch.sin()).max(0.05);
            let up = x * pitch.sin() + dz * pitch.cos();
            let u = w as f64 / 2.0 - f * y / depth;
            let v = rows as f64 / 2.0 - f * up / depth;
            u0 = u0.min(u);
            u1 = u1.max(u);
            v0 = v0.min(v);
            v1 = v1.max(v);
        }
    }
    let span = |lo: f64, hi: f64, n: usize| {
        let first = (lo - 0.5).ceil().max(0.0);
        let last = (hi - 0.5).floor().min(n as f64 - 1.0);
        if first <= last {
            (last - first) as usize + 1
        } else {
            0
        }
    };
    span(u0, u1, w) * span(v0, v1, rows)
}

/// Inclusive pixel box `(c0, r0, c1, r1)` on a square grid of side `n`.
pub type PixBox = (usize, usize, usize, usize);

/// Box score `1 / (1 + Δc + Δs)` of `b` against `init`, both given as pixel
/// boxes on an `n x n` grid.
pub fn r_dev_oracle(n: usize, init: PixBox, b: PixBox) -> f64 {
    let norm = |(c0, r0, c1, r1): PixBox| {
        let f = |v: usize| v as f64 / n as f64;
        ((f(c0) + f(c1 + 1)) / 2.0, (f(r0) + f(r1 + 1)) / 2.0, f(c1 + 1 - c0), f(r1 + 1 - r0))
    };
    let (x0, y0, w0, h0) = norm(init);
    let (x1, y1, w1, h1) = norm(b);
    let dc = ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt();
    let ds = ((w1 - w0).powi(2) + (h1 - h0).powi(2)).sqrt();
    1.0 / (1.0 + dc + ds)
}
