//! Dense loops behind the tape primitives. All matrices are row-major.

/// `a[m,k] * b[k,n]`.
pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `out[m,k] += g[m,n] * b[k,n]^T`.
pub fn matmul_bt_acc(g: &[f64], b: &[f64], m: usize, n: usize, k: usize, out: &mut [f64]) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            out[i * k + p] += dot(grow, brow);
        }
    }
}

/// `out[k,n] += a[m,k]^T * g[m,n]`.
pub fn matmul_at_acc(a: &[f64], g: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, gv) in orow.iter_mut().zip(grow) {
                *o += av * gv;
            }
        }
    }
}

/// Inner product with four interleaved partial sums (fixed order, so results
/// are reproducible).
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

/// Cosine similarity with the norm guard; returns the norms when the pair is
/// non-degenerate.
pub fn cosine(a: &[f64], b: &[f64], eps: f64) -> (f64, Option<(f64, f64)>) {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na < eps || nb < eps {
        return (0.0, None);
    }
    (dot(a, b) / (na * nb), Some((na, nb)))
}

#[derive(Clone, Copy, Debug)]
pub struct ConvGeom {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub o: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    pub fn new(x: &[usize], k: &[usize], stride: usize) -> Self {
        let (n, c, h, w) = (x[0], x[1], x[2], x[3]);
        let (o, kh, kw) = (k[0], k[2], k[3]);
        Self {
            n,
            c,
            h,
            w,
            o,
            kh,
            kw,
            stride,
            ho: (h - kh) / stride + 1,
            wo: (w - kw) / stride + 1,
        }
    }

    fn patch(&self) -> usize {
        self.c * self.kh * self.kw
    }
}

/// Unfolds the patches of sample `n` into `[C*kh*kw, Ho*Wo]` (one row per
/// kernel tap, spatial positions contiguous).
fn im2col_t(g: &ConvGeom, x: &[f64], n: usize, cols: &mut [f64]) {
    let plane = g.ho * g.wo;
    let mut p = 0;
    for c in 0..g.c {
        let src = &x[(n * g.c + c) * g.h * g.w..(n * g.c + c + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = &mut cols[p * plane..(p + 1) * plane];
                for oy in 0..g.ho {
                    let base = (oy * g.stride + ky) * g.w + kx;
                    let dst = &mut row[oy * g.wo..(oy + 1) * g.wo];
                    if g.stride == 1 {
                        dst.copy_from_slice(&src[base..base + g.wo]);
                    } else {
                        for (ox, d) in dst.iter_mut().enumerate() {
                            *d = src[base + ox * g.stride];
                        }
                    }
                }
                p += 1;
            }
        }
    }
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yv, xv) in y.iter_mut().zip(x) {
        *yv += alpha * xv;
    }
}

pub fn conv2d_forward(g: &ConvGeom, x: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
    let patch = g.patch();
    let plane = g.ho * g.wo;
    let mut cols = vec![0.0; patch * plane];
    let mut out = vec![0.0; g.n * g.o * plane];
    for n in 0..g.n {
        im2col_t(g, x, n, &mut cols);
        for o in 0..g.o {
            let dst = &mut out[(n * g.o + o) * plane..(n * g.o + o + 1) * plane];
            dst.iter_mut().for_each(|v| *v = b[o]);
            for p in 0..patch {
                let wv = w[o * patch + p];
                if wv != 0.0 {
                    axpy(wv, &cols[p * plane..(p + 1) * plane], dst);
                }
            }
        }
    }
    out
}

pub fn conv2d_bias_grad(g: &ConvGeom, grad: &[f64], out: &mut [f64]) {
    let plane = g.ho * g.wo;
    for n in 0..g.n {
        for o in 0..g.o {
            out[o] += grad[(n * g.o + o) * plane..(n * g.o + o + 1) * plane].iter().sum::<f64>();
        }
    }
}

pub fn conv2d_weight_grad(g: &ConvGeom, x: &[f64], grad: &[f64], out: &mut [f64]) {
    let patch = g.patch();
    let plane = g.ho * g.wo;
    let mut cols = vec![0.0; patch * plane];
    for n in 0..g.n {
        im2col_t(g, x, n, &mut cols);
        for o in 0..g.o {
            let go = &grad[(n * g.o + o) * plane..(n * g.o + o + 1) * plane];
            if go.iter().all(|v| *v == 0.0) {
                continue;
            }
            for p in 0..patch {
                out[o * patch + p] += dot(go, &cols[p * plane..(p + 1) * plane]);
            }
        }
    }
}

pub fn conv2d_input_grad(g: &ConvGeom, w: &[f64], grad: &[f64], out: &mut [f64]) {
    let patch = g.patch();
    let plane = g.ho * g.wo;
    let mut dcols = vec![0.0; patch * plane];
    for n in 0..g.n {
        dcols.iter_mut().for_each(|v| *v = 0.0);
        for o in 0..g.o {
            let go = &grad[(n * g.o + o) * plane..(n * g.o + o + 1) * plane];
            for p in 0..patch {
                let wv = w[o * patch + p];
                if wv != 0.0 {
                    axpy(wv, go, &mut dcols[p * plane..(p + 1) * plane]);
                }
            }
        }
        let mut p = 0;
        for c in 0..g.c {
            let dst = &mut out[(n * g.c + c) * g.h * g.w..(n * g.c + c + 1) * g.h * g.w];
            for ky in 0..g.kh {
                for kx in 0..g.kw {
                    let row = &dcols[p * plane..(p + 1) * plane];
                    for oy in 0..g.ho {
                        let base = (oy * g.stride + ky) * g.w + kx;
                        for ox in 0..g.wo {
                            dst[base + ox * g.stride] += row[oy * g.wo + ox];
                        }
                    }
                    p += 1;
                }
            }
        }
    }
}
