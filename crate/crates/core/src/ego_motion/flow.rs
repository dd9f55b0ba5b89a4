//! Coarse-to-fine iterative Lucas-Kanade flow for sparse points.

use super::FeaturePoint;
use crate::error::{Error, Result};
use crate::frame_io::GrayFrame;
use crate::geometry::Vec2;
use crate::raster::FloatImage;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowOptions {
    /// Pyramid levels including the full-resolution one.
    pub levels: usize,
    /// Odd side length of the integration window.
    pub window: usize,
    pub max_iters: usize,
    /// Stop iterating once an update step is shorter than this (pixels).
    pub epsilon: f64,
    /// Points whose window tensor has a smaller per-pixel eigenvalue than
    /// this are reported as failed.
    pub min_eigen: f64,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions {
            levels: 3,
            window: 15,
            max_iters: 10,
            epsilon: 0.03,
            min_eigen: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowResult {
    pub displacement: Vec2,
    pub converged: bool,
}

impl FlowResult {
    const FAILED: FlowResult = FlowResult {
        displacement: Vec2::ZERO,
        converged: false,
    };
}

struct Level {
    img: FloatImage,
    gx: FloatImage,
    gy: FloatImage,
}

fn pyramid(frame: &GrayFrame, levels: usize, with_gradients: bool) -> Vec<Level> {
    let mut out: Vec<Level> = Vec::with_capacity(levels);
    let mut img = FloatImage::from_frame(frame);
    for l in 0..levels {
        if l > 0 {
            img = out[l - 1].img.pyr_down();
        }
        let (gx, gy) = if with_gradients {
            img.sobel()
        } else {
            (FloatImage::zeros(0, 0), FloatImage::zeros(0, 0))
        };
        out.push(Level {
            img: img.clone(),
            gx,
            gy,
        });
    }
    out
}

fn inside(img: &FloatImage, p: Vec2) -> bool {
    p.x >= 0.0 && p.y >= 0.0 && p.x <= (img.width - 1) as f64 && p.y <= (img.height - 1) as f64
}

pub fn lk_flow(prev: &GrayFrame, next: &GrayFrame, points: &[FeaturePoint], options: &FlowOptions) -> Result<Vec<FlowResult>> {
    if (prev.width(), prev.height()) != (next.width(), next.height()) {
        return Err(Error::Usage(format!(
            "flow frames differ in size: {}x{} vs {}x{}",
            prev.width(),
            prev.height(),
            next.width(),
            next.height()
        )));
    }
    if options.window < 3 || options.window % 2 == 0 || options.levels == 0 {
        return Err(Error::Usage("flow window must be odd and >= 3, levels >= 1".into()));
    }
    if points.is_empty() {
        return Ok(Vec::new());
    }
    let prev_pyr = pyramid(prev, options.levels, true);
    let next_pyr = pyramid(next, options.levels, false);
    Ok(points
        .iter()
        .map(|p| track_point(&prev_pyr, &next_pyr, Vec2::new(p.x, p.y), options))
        .collect())
}

fn track_point(prev: &[Level], next: &[Level], p: Vec2, opt: &FlowOptions) -> FlowResult {
    let r = (opt.window / 2) as isize;
    let n = (opt.window * opt.window) as f64;
    let mut guess = Vec2::ZERO;
    let mut template = Vec::with_capacity(opt.window * opt.window);

    for level in (0..prev.len()).rev() {
        let scale = f64::from(1u32 << level);
        let u = p / scale;
        let (pi, ni) = (&prev[level], &next[level]);

        template.clear();
        let (mut gxx, mut gxy, mut gyy) = (0.0f64, 0.0f64, 0.0f64);
        for dy in -r..=r {
            for dx in -r..=r {
                let (x, y) = (u.x + dx as f64, u.y + dy as f64);
                let ix = f64::from(pi.gx.sample(x, y));
                let iy = f64::from(pi.gy.sample(x, y));
                let i = f64::from(pi.img.sample(x, y));
                gxx += ix * ix;
                gxy += ix * iy;
                gyy += iy * iy;
                template.push((i, ix, iy));
            }
        }
        let half_tr = 0.5 * (gxx + gyy);
        let min_eig = half_tr - (0.25 * (gxx - gyy).powi(2) + gxy * gxy).sqrt();
        if min_eig / n < opt.min_eigen {
            return FlowResult::FAILED;
        }
        let det = gxx * gyy - gxy * gxy;

        let mut nu = Vec2::ZERO;
        for _ in 0..opt.max_iters {
            let centre = u + guess + nu;
            if !inside(&ni.img, centre) {
                return FlowResult::FAILED;
            }
            let (mut bx, mut by) = (0.0f64, 0.0f64);
            let mut k = 0;
            for dy in -r..=r {
                for dx in -r..=r {
                    let (i, ix, iy) = template[k];
                    k += 1;
                    let j = f64::from(ni.img.sample(centre.x + dx as f64, centre.y + dy as f64));
                    let diff = i - j;
                    bx += diff * ix;
                    by += diff * iy;
                }
            }
            let step = Vec2::new((gyy * bx - gxy * by) / det, (gxx * by - gxy * bx) / det);
            nu += step;
            if step.norm() < opt.epsilon {
                break;
            }
        }
        if !inside(&ni.img, u + guess + nu) {
            return FlowResult::FAILED;
        }
        if level > 0 {
            guess = (guess + nu) * 2.0;
        } else {
            guess += nu;
        }
    }
    FlowResult {
        displacement: guess,
        converged: true,
    }
}
