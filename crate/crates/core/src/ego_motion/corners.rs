//! Minimum-eigenvalue ("good features to track") corner detection.

use super::FeaturePoint;
use crate::frame_io::GrayFrame;
use crate::raster::FloatImage;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CornerOptions {
    pub max_corners: usize,
    /// Minimum score as a fraction of the strongest response in the frame.
    pub quality_fraction: f64,
    pub min_distance_px: f64,
    /// Pixels closer than this to the border are never reported.
    pub margin: usize,
}

impl Default for CornerOptions {
    fn default() -> Self {
        CornerOptions {
            max_corners: 100,
            quality_fraction: 0.01,
            min_distance_px: 10.0,
            margin: 7,
        }
    }
}

/// Smaller eigenvalue of the gradient structure tensor summed over 3x3.
pub(crate) fn min_eigen_map(img: &FloatImage) -> FloatImage {
    let (gx, gy) = img.sobel();
    let (w, h) = (img.width, img.height);
    let mut xx = FloatImage::zeros(w, h);
    let mut xy = FloatImage::zeros(w, h);
    let mut yy = FloatImage::zeros(w, h);
    for i in 0..w * h {
        let (a, b) = (gx.data[i], gy.data[i]);
        xx.data[i] = a * a;
        xy.data[i] = a * b;
        yy.data[i] = b * b;
    }
    let (xx, xy, yy) = (xx.box3(), xy.box3(), yy.box3());
    let mut out = FloatImage::zeros(w, h);
    for i in 0..w * h {
        let (a, b, c) = (f64::from(xx.data[i]), f64::from(xy.data[i]), f64::from(yy.data[i]));
        let half_tr = 0.5 * (a + c);
        let disc = (0.25 * (a - c) * (a - c) + b * b).sqrt();
        out.data[i] = (half_tr - disc).max(0.0) as f32;
    }
    out
}

/// Vertex offset of the parabola through three samples, in [-0.5, 0.5].
fn parabolic_offset(l: f32, c: f32, r: f32) -> f64 {
    let denom = l - 2.0 * c + r;
    if denom.abs() < f32::EPSILON {
        return 0.0;
    }
    (0.5 * (l - r) / denom).clamp(-0.5, 0.5) as f64
}

/// Keeps candidates, strongest first, that lie at least `min_distance` from
/// every already accepted one. Input must be sorted best first.
pub(crate) fn suppress_by_distance(sorted: &[FeaturePoint], min_distance: f64, max: usize) -> Vec<FeaturePoint> {
    let mut kept: Vec<FeaturePoint> = Vec::new();
    let min_d2 = min_distance * min_distance;
    for p in sorted {
        if kept.len() >= max {
            break;
        }
        let clear = kept.iter().all(|k| {
            let (dx, dy) = (k.x - p.x, k.y - p.y);
            dx * dx + dy * dy >= min_d2
        });
        if clear {
            kept.push(*p);
        }
    }
    kept
}

pub fn detect_corners(frame: &GrayFrame, options: &CornerOptions) -> Vec<FeaturePoint> {
    let img = FloatImage::from_frame(frame);
    let score = min_eigen_map(&img);
    let (w, h) = (score.width, score.height);
    let m = options.margin.max(1);
    if w <= 2 * m || h <= 2 * m {
        return Vec::new();
    }
    let best = score.data.iter().copied().fold(0.0f32, f32::max);
    if best <= 0.0 {
        return Vec::new();
    }
    let floor = (options.quality_fraction * f64::from(best)) as f32;

    let mut candidates = Vec::new();
    for y in m..h - m {
        for x in m..w - m {
            let s = score.at(x, y);
            if s < floor || s <= 0.0 {
                continue;
            }
            let mut is_max = true;
            'nb: for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    if (dx, dy) == (0, 0) {
                        continue;
                    }
                    let n = score.at((x as isize + dx) as usize, (y as isize + dy) as usize);
                    // strict on the causal half so plateaus keep a single pixel
                    if n > s || (n == s && (dy < 0 || (dy == 0 && dx < 0))) {
                        is_max = false;
                        break 'nb;
                    }
                }
            }
            if !is_max {
                continue;
            }
            let ox = parabolic_offset(score.at(x - 1, y), s, score.at(x + 1, y));
            let oy = parabolic_offset(score.at(x, y - 1), s, score.at(x, y + 1));
            candidates.push(FeaturePoint {
                x: x as f64 + ox,
                y: y as f64 + oy,
                response: f64::from(s),
            });
        }
    }
    candidates.sort_by(|a, b| {
        b.response
            .total_cmp(&a.response)
            .then(a.y.total_cmp(&b.y))
            .then(a.x.total_cmp(&b.x))
    });
    suppress_by_distance(&candidates, options.min_distance_px, options.max_corners)
}
