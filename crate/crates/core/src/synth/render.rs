use crate::frame_io::GrayFrame;

use super::Scenario;

const LANE_VALUE: u8 = 230;
const LANE_HALF_THICKNESS: f64 = 2.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RenderOptions {
    pub lanes: bool,
    pub vehicles: bool,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            lanes: true,
            vehicles: true,
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn lattice(seed: u64, i: i64, j: i64) -> f64 {
    let h = splitmix(seed ^ splitmix((i as u64).wrapping_mul(0x1f1f_1f1f) ^ splitmix(j as u64)));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn value_noise(seed: u64, x: f64, y: f64, cell: f64) -> f64 {
    let (gx, gy) = (x / cell, y / cell);
    let (i, j) = (gx.floor(), gy.floor());
    let fade = |t: f64| t * t * (3.0 - 2.0 * t);
    let (tx, ty) = (fade(gx - i), fade(gy - j));
    let (i, j) = (i as i64, j as i64);
    let top = lattice(seed, i, j) * (1.0 - tx) + lattice(seed, i + 1, j) * tx;
    let bottom = lattice(seed, i, j + 1) * (1.0 - tx) + lattice(seed, i + 1, j + 1) * tx;
    top * (1.0 - ty) + bottom * ty
}

/// Background texture over the whole plane, in [50, 170].
fn texture(seed: u64, x: f64, y: f64) -> u8 {
    let v = 0.65 * value_noise(seed, x, y, 9.0) + 0.35 * value_noise(seed ^ 0xabcd, x, y, 4.0);
    (50.0 + 120.0 * v).round() as u8
}

pub fn render_frame(scenario: &Scenario, frame: u64, opts: RenderOptions) -> GrayFrame {
    let (w, h) = (scenario.frame_width, scenario.frame_height);
    let shift = scenario.ego_flow_px * frame as f64;
    let seed = scenario.seed;
    let mut img = GrayFrame::from_fn(w, h, |x, y| texture(seed, x as f64 - shift.x, y as f64 - shift.y));

    if opts.lanes {
        for pts in [scenario.lanes.left, scenario.lanes.right] {
            let (top, bottom) = ((pts[0][0], pts[0][1]), (pts[1][0], pts[1][1]));
            let (dx, dy) = (bottom.0 - top.0, bottom.1 - top.1);
            let half = LANE_HALF_THICKNESS * dx.hypot(dy) / dy.abs();
            let y0 = top.1.min(bottom.1).max(0.0).ceil() as usize;
            for y in y0..h {
                let xc = top.0 + dx * (y as f64 - top.1) / dy;
                let lo = (xc - half).ceil().max(0.0) as usize;
                let hi = (xc + half).floor().min(w as f64 - 1.0);
                if hi < 0.0 {
                    continue;
                }
                for x in lo..=hi as usize {
                    img.set(x, y, LANE_VALUE);
                }
            }
        }
    }

    if opts.vehicles {
        for (i, v) in scenario.vehicles.iter().enumerate() {
            let b = v.bbox(frame);
            let shade = 25 + 20 * (i % 4) as u8;
            let (x0, x1) = (b.left().max(0.0).round() as usize, b.right().min(w as f64).round() as usize);
            let (y0, y1) = (b.top().max(0.0).round() as usize, b.bottom().min(h as f64).round() as usize);
            for y in y0..y1 {
                for x in x0..x1 {
                    img.set(x, y, shade);
                }
            }
        }
    }
    img
}

pub fn render_frames_with(scenario: &Scenario, opts: RenderOptions) -> Vec<GrayFrame> {
    (0..scenario.n_frames).map(|f| render_frame(scenario, f, opts)).collect()
}

/// Background, lanes and vehicles for every frame.
pub fn render_frames(scenario: &Scenario) -> Vec<GrayFrame> {
    render_frames_with(scenario, RenderOptions::default())
}
