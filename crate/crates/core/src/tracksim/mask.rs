pub const LABEL_BACKGROUND: u8 = 0;
pub const LABEL_OBSTACLE: u8 = 128;
pub const LABEL_TARGET: u8 = 255;

/// Row-major segmentation grid with labels {0, 128, 255}.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

/// Tight pixel bounds `(col0, row0, col1, row1)`, inclusive.
pub type PixelBounds = (usize, usize, usize, usize);

impl Mask {
    pub fn blank(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![LABEL_BACKGROUND; width * height],
        }
    }

    pub fn get(&self, col: usize, row: usize) -> u8 {
        self.data[row * self.width + col]
    }

    pub fn count(&self, label: u8) -> usize {
        self.data.iter().filter(|&&v| v == label).count()
    }

    pub fn target_pixels(&self) -> usize {
        self.count(LABEL_TARGET)
    }

    /// Bounds of all pixels carrying `label`, or `None` if there are none.
    pub fn bounds(&self, label: u8) -> Option<PixelBounds> {
        let mut out: Option<PixelBounds> = None;
        for (i, &v) in self.data.iter().enumerate() {
            if v != label {
                continue;
            }
            let (c, r) = (i % self.width, i / self.width);
            out = Some(match out {
                None => (c, r, c, r),
                Some((c0, r0, c1, r1)) => (c0.min(c), r0.min(r), c1.max(c), r1.max(r)),
            });
        }
        out
    }

    /// Number of distinct rows containing `label`.
    pub fn rows_with(&self, label: u8) -> usize {
        self.data.chunks(self.width).filter(|row| row.contains(&label)).count()
    }

    /// Mean column of target pixels (pixel centers), if any.
    pub fn target_centroid_col(&self) -> Option<f64> {
        let (mut sum, mut n) = (0.0, 0usize);
        for (i, &v) in self.data.iter().enumerate() {
            if v == LABEL_TARGET {
                sum += (i % self.width) as f64 + 0.5;
                n += 1;
            }
        }
        (n > 0).then(|| sum / n as f64)
    }

    /// Labels scaled to `[0, 1]`.
    pub fn normalized(&self) -> impl Iterator<Item = f64> + '_ {
        self.data.iter().map(|&v| f64::from(v) / 255.0)
    }
}
