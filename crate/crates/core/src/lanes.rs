//! Straight-line lane estimator.
//!
//! Edge pixels of the lower half of the frame (gradient magnitude above a
//! fraction of the strongest gradient) vote in a Hough accumulator over
//! normal angle and offset. Each pixel only votes for angles near its own
//! gradient orientation. The strongest line rising to the right becomes the
//! left demarcation; the strongest line falling to the right becomes the
//! right one.

use crate::candidates::{LaneModel, LineSegment};
use crate::error::{Error, Result};
use crate::frame_io::GrayFrame;
use crate::geometry::Vec2;
use crate::raster::FloatImage;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaneEstimatorOptions {
    /// Edge threshold as a fraction of the strongest gradient magnitude.
    pub gradient_fraction: f32,
    /// Absolute floor on the edge threshold, intensity per pixel.
    pub min_gradient: f32,
    /// Accumulator angle resolution in degrees.
    pub angle_step_deg: f64,
    /// Votes are cast within this many degrees of the gradient orientation.
    pub orientation_tolerance_deg: f64,
    /// Lines flatter or steeper than these slope angles are ignored.
    pub min_abs_slope_deg: f64,
    pub max_abs_slope_deg: f64,
    /// Minimum votes, as a fraction of the analysed row count.
    pub min_votes_fraction: f64,
}

impl Default for LaneEstimatorOptions {
    fn default() -> Self {
        LaneEstimatorOptions {
            gradient_fraction: 0.35,
            min_gradient: 10.0,
            angle_step_deg: 0.25,
            orientation_tolerance_deg: 12.0,
            min_abs_slope_deg: 12.0,
            max_abs_slope_deg: 80.0,
            min_votes_fraction: 0.25,
        }
    }
}

/// A line `x cos(phi) + y sin(phi) = rho`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoughLine {
    pub phi_deg: f64,
    pub rho: f64,
    pub votes: u32,
}

impl HoughLine {
    /// Slope angle against the x axis, y down; negative rises to the right.
    pub fn slope_deg(&self) -> f64 {
        self.phi_deg - 90.0
    }

    fn x_at(&self, y: f64) -> f64 {
        let (s, c) = self.phi_deg.to_radians().sin_cos();
        (self.rho - y * s) / c
    }
}

pub fn estimate_lanes(frames: &[GrayFrame]) -> Result<LaneModel> {
    estimate_lanes_with(frames, &LaneEstimatorOptions::default())
}

pub fn estimate_lanes_with(frames: &[GrayFrame], opt: &LaneEstimatorOptions) -> Result<LaneModel> {
    let (left, right) = strongest_lines(frames, opt)?;
    let first = &frames[0];
    let (w, h) = (first.width(), first.height());
    let top = (h / 2) as f64;
    let bottom = h as f64;
    let seg = |l: &HoughLine| {
        LineSegment::new(Vec2::new(l.x_at(top), top), Vec2::new(l.x_at(bottom), bottom))
    };
    LaneModel::new(seg(&left), seg(&right), w, h)
        .map_err(|e| Error::Estimation(format!("inconsistent lane pair: {e}")))
}

/// Strongest left-type and right-type lines.
pub fn strongest_lines(frames: &[GrayFrame], opt: &LaneEstimatorOptions) -> Result<(HoughLine, HoughLine)> {
    let Some(first) = frames.first() else {
        return Err(Error::Estimation("no frames".into()));
    };
    if frames
        .iter()
        .any(|f| (f.width(), f.height()) != (first.width(), first.height()))
    {
        return Err(Error::Estimation("frames differ in size".into()));
    }
    let img = FloatImage::mean_of(frames);
    let (w, h) = (img.width, img.height);
    let y0 = h / 2;
    let rows = h - y0;
    let (gx, gy) = img.sobel();

    let mut max_mag = 0.0f32;
    for y in y0..h {
        for x in 0..w {
            max_mag = max_mag.max(gx.at(x, y).hypot(gy.at(x, y)));
        }
    }
    let threshold = (opt.gradient_fraction * max_mag).max(opt.min_gradient);
    if max_mag < threshold {
        return Err(Error::Estimation("no edges in the lower half".into()));
    }

    let n_phi = (180.0 / opt.angle_step_deg).round() as usize;
    let diag = (w as f64).hypot(h as f64).ceil() as i64;
    let n_rho = (2 * diag + 1) as usize;
    let mut acc = vec![0u32; n_phi * n_rho];
    let trig: Vec<(f64, f64)> = (0..n_phi)
        .map(|i| (i as f64 * opt.angle_step_deg).to_radians().sin_cos())
        .collect();
    let allowed: Vec<bool> = (0..n_phi)
        .map(|i| {
            let slope = (i as f64 * opt.angle_step_deg - 90.0).abs();
            slope >= opt.min_abs_slope_deg && slope <= opt.max_abs_slope_deg
        })
        .collect();
    let tol_bins = (opt.orientation_tolerance_deg / opt.angle_step_deg).ceil() as i64;

    for y in y0..h {
        for x in 0..w {
            let (dx, dy) = (gx.at(x, y), gy.at(x, y));
            if dx.hypot(dy) < threshold {
                continue;
            }
            // gradient orientation folded into [0, 180)
            let mut theta = f64::from(dy).atan2(f64::from(dx)).to_degrees();
            if theta < 0.0 {
                theta += 180.0;
            }
            if theta >= 180.0 {
                theta -= 180.0;
            }
            let centre = (theta / opt.angle_step_deg).round() as i64;
            for k in (centre - tol_bins)..=(centre + tol_bins) {
                let i = k.rem_euclid(n_phi as i64) as usize;
                if !allowed[i] {
                    continue;
                }
                let (s, c) = trig[i];
                let rho = x as f64 * c + y as f64 * s;
                let r = (rho.round() as i64 + diag) as usize;
                acc[i * n_rho + r] += 1;
            }
        }
    }

    let min_votes = ((rows as f64) * opt.min_votes_fraction).max(10.0) as u32;
    let mut left: Option<HoughLine> = None;
    let mut right: Option<HoughLine> = None;
    for i in 0..n_phi {
        if !allowed[i] {
            continue;
        }
        let phi = i as f64 * opt.angle_step_deg;
        for r in 0..n_rho {
            let votes = acc[i * n_rho + r];
            if votes < min_votes {
                continue;
            }
            let line = HoughLine {
                phi_deg: phi,
                rho: r as f64 - diag as f64,
                votes,
            };
            let slot = if phi < 90.0 { &mut left } else { &mut right };
            if slot.is_none_or(|b| votes > b.votes) {
                *slot = Some(line);
            }
        }
    }
    match (left, right) {
        (Some(l), Some(r)) => Ok((refine(&acc, n_rho, diag, opt, l), refine(&acc, n_rho, diag, opt, r))),
        _ => Err(Error::Estimation("fewer than two qualifying lines".into())),
    }
}

/// Vote-weighted angle and offset over the 3x3 accumulator neighbourhood.
fn refine(acc: &[u32], n_rho: usize, diag: i64, opt: &LaneEstimatorOptions, line: HoughLine) -> HoughLine {
    let n_phi = acc.len() / n_rho;
    let i0 = (line.phi_deg / opt.angle_step_deg).round() as i64;
    let r0 = line.rho.round() as i64 + diag;
    let (mut sw, mut sp, mut sr) = (0.0, 0.0, 0.0);
    for di in -1..=1 {
        for dr in -1..=1 {
            let (i, r) = (i0 + di, r0 + dr);
            if i < 0 || i >= n_phi as i64 || r < 0 || r >= n_rho as i64 {
                continue;
            }
            let v = f64::from(acc[i as usize * n_rho + r as usize]);
            sw += v;
            sp += v * i as f64 * opt.angle_step_deg;
            sr += v * (r - diag) as f64;
        }
    }
    if sw == 0.0 {
        return line;
    }
    HoughLine {
        phi_deg: sp / sw,
        rho: sr / sw,
        votes: line.votes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Draws a bright band of half-width `half` along the line through
    /// `(x0, y0)` with slope angle `deg`.
    fn paint(frame: &mut GrayFrame, x0: f64, y0: f64, deg: f64, half: f64) {
        let d = Vec2::new(1.0, 0.0).rotated_deg(deg);
        let n = Vec2::new(-d.y, d.x);
        for y in 0..frame.height() {
            for x in 0..frame.width() {
                let p = Vec2::new(x as f64, y as f64) - Vec2::new(x0, y0);
                if p.dot(n).abs() <= half {
                    frame.set(x, y, 230);
                }
            }
        }
    }

    fn road(left_deg: f64, right_deg: f64) -> GrayFrame {
        let mut f = GrayFrame::filled(640, 360, 70);
        paint(&mut f, 320.0, 170.0, left_deg, 2.5);
        paint(&mut f, 320.0, 170.0, right_deg, 2.5);
        f
    }

    #[test]
    fn recovers_thirty_degree_pair() {
        let f = road(-30.0, 30.0);
        let m = estimate_lanes(&[f]).unwrap();
        assert!((m.left_line.angle_deg() + 30.0).abs() < 2.0, "{:?}", m.left_line);
        assert!((m.right_line.angle_deg() - 30.0).abs() < 2.0, "{:?}", m.right_line);
        // both pass near the painted apex
        assert!((m.left_line.x_at(170.0) - 320.0).abs() < 6.0);
        assert!((m.right_line.x_at(170.0) - 320.0).abs() < 6.0);
    }

    #[test]
    fn constant_frame_fails() {
        let f = GrayFrame::filled(320, 240, 100);
        assert!(matches!(estimate_lanes(&[f]), Err(Error::Estimation(_))));
    }

    #[test]
    fn single_line_fails() {
        let mut f = GrayFrame::filled(640, 360, 70);
        paint(&mut f, 320.0, 170.0, -35.0, 2.5);
        assert!(matches!(estimate_lanes(&[f]), Err(Error::Estimation(_))));
    }

    #[test]
    fn empty_sample_fails() {
        assert!(matches!(estimate_lanes(&[]), Err(Error::Estimation(_))));
    }
}
