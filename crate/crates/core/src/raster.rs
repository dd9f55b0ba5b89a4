//! Float image helpers shared by the corner detector, the flow solver and
//! the lane estimator.

use crate::frame_io::GrayFrame;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct FloatImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl FloatImage {
    pub fn zeros(width: usize, height: usize) -> Self {
        FloatImage {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_frame(frame: &GrayFrame) -> Self {
        FloatImage {
            width: frame.width(),
            height: frame.height(),
            data: frame.pixels().iter().map(|&p| f32::from(p)).collect(),
        }
    }

    /// Pixel-wise mean of equally sized frames.
    pub fn mean_of(frames: &[GrayFrame]) -> Self {
        let mut img = FloatImage::zeros(frames[0].width(), frames[0].height());
        for f in frames {
            for (acc, &p) in img.data.iter_mut().zip(f.pixels()) {
                *acc += f32::from(p);
            }
        }
        let n = frames.len() as f32;
        img.data.iter_mut().for_each(|v| *v /= n);
        img
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    /// Border-replicating integer access.
    #[inline]
    pub fn clamped(&self, x: isize, y: isize) -> f32 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.at(x, y)
    }

    /// Bilinear sample with border replication.
    pub fn sample(&self, x: f64, y: f64) -> f32 {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = (x - x0) as f32;
        let fy = (y - y0) as f32;
        let (xi, yi) = (x0 as isize, y0 as isize);
        let p00 = self.clamped(xi, yi);
        let p10 = self.clamped(xi + 1, yi);
        let p01 = self.clamped(xi, yi + 1);
        let p11 = self.clamped(xi + 1, yi + 1);
        let top = p00 + (p10 - p00) * fx;
        let bottom = p01 + (p11 - p01) * fx;
        top + (bottom - top) * fy
    }

    /// Sobel derivatives scaled to intensity per pixel.
    pub fn sobel(&self) -> (FloatImage, FloatImage) {
        let (w, h) = (self.width, self.height);
        let mut gx = FloatImage::zeros(w, h);
        let mut gy = FloatImage::zeros(w, h);
        for y in 0..h {
            let border_row = y == 0 || y + 1 >= h;
            for x in 0..w {
                if border_row || x == 0 || x + 1 >= w {
                    let p = |dx: isize, dy: isize| self.clamped(x as isize + dx, y as isize + dy);
                    let dx = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
                    let dy = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
                    gx.data[y * w + x] = dx / 8.0;
                    gy.data[y * w + x] = dy / 8.0;
                } else {
                    let d = &self.data;
                    let (a, b, c) = ((y - 1) * w + x, y * w + x, (y + 1) * w + x);
                    let dx = (d[a + 1] + 2.0 * d[b + 1] + d[c + 1]) - (d[a - 1] + 2.0 * d[b - 1] + d[c - 1]);
                    let dy = (d[c - 1] + 2.0 * d[c] + d[c + 1]) - (d[a - 1] + 2.0 * d[a] + d[a + 1]);
                    gx.data[b] = dx / 8.0;
                    gy.data[b] = dy / 8.0;
                }
            }
        }
        (gx, gy)
    }

    /// Sum over the 3x3 neighbourhood with border replication.
    pub fn box3(&self) -> FloatImage {
        let (w, h) = (self.width, self.height);
        let mut horiz = FloatImage::zeros(w, h);
        for y in 0..h {
            for x in 0..w {
                let l = self.at(x.saturating_sub(1), y);
                let r = self.at((x + 1).min(w - 1), y);
                horiz.data[y * w + x] = l + self.at(x, y) + r;
            }
        }
        let mut out = FloatImage::zeros(w, h);
        for y in 0..h {
            let (up, down) = (y.saturating_sub(1), (y + 1).min(h - 1));
            for x in 0..w {
                out.data[y * w + x] = horiz.at(x, up) + horiz.at(x, y) + horiz.at(x, down);
            }
        }
        out
    }

    /// Binomial 5-tap blur followed by 2x decimation.
    pub fn pyr_down(&self) -> FloatImage {
        const K: [f32; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];
        let (w, h) = (self.width, self.height);
        let w2 = w.div_ceil(2);
        let h2 = h.div_ceil(2);
        // horizontal pass only at the kept columns
        let mut horiz = FloatImage::zeros(w2, h);
        for y in 0..h {
            let row = &self.data[y * w..(y + 1) * w];
            for x2 in 0..w2 {
                let x = 2 * x2;
                let acc = if x >= 2 && x + 2 < w {
                    K.iter().zip(&row[x - 2..=x + 2]).map(|(k, v)| k * v).sum()
                } else {
                    K.iter()
                        .enumerate()
                        .map(|(k, wt)| wt * self.clamped(x as isize + k as isize - 2, y as isize))
                        .sum()
                };
                horiz.data[y * w2 + x2] = acc;
            }
        }
        let mut out = FloatImage::zeros(w2, h2);
        for y2 in 0..h2 {
            for x2 in 0..w2 {
                let mut acc = 0.0;
                for (k, wt) in K.iter().enumerate() {
                    acc += wt * horiz.clamped(x2 as isize, 2 * y2 as isize + k as isize - 2);
                }
                out.data[y2 * w2 + x2] = acc;
            }
        }
        out
    }
}
