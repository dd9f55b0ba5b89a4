//! Ego-vehicle motion from background optical flow.
//!
//! Corners are picked on the previous frame, tracked into the next frame
//! with pyramidal Lucas-Kanade, filtered against the median flow magnitude
//! and averaged. The camera moves against the apparent background motion,
//! so the ego direction is the negated mean flow.

mod corners;
mod flow;

use crate::frame_io::{GrayFrame, PipelineConfig};
use crate::geometry::Vec2;

pub use corners::{detect_corners, CornerOptions};
pub use flow::{lk_flow, FlowOptions, FlowResult};

/// Direction reported when the ego vehicle is not moving.
pub const STATIONARY_DIRECTION: Vec2 = Vec2::new(0.0, -1.0);

/// Flow magnitudes within this many pixels of the median band are kept
/// even when the median is near zero.
const OUTLIER_SLACK_PX: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeaturePoint {
    pub x: f64,
    pub y: f64,
    /// Smaller eigenvalue of the local structure tensor.
    pub response: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EgoMotionEstimate {
    pub speed_m_s: f64,
    pub direction: Vec2,
    pub n_features_used: usize,
    pub valid: bool,
}

impl EgoMotionEstimate {
    pub fn invalid(n_features_used: usize) -> Self {
        EgoMotionEstimate {
            speed_m_s: 0.0,
            direction: STATIONARY_DIRECTION,
            n_features_used,
            valid: false,
        }
    }
}

impl CornerOptions {
    pub fn from_config(config: &PipelineConfig) -> Self {
        CornerOptions {
            max_corners: config.max_corners,
            quality_fraction: config.corner_quality,
            min_distance_px: config.corner_min_distance_px,
            margin: config.flow_window / 2,
        }
    }
}

impl FlowOptions {
    pub fn from_config(config: &PipelineConfig) -> Self {
        FlowOptions {
            levels: config.flow_levels,
            window: config.flow_window,
            max_iters: config.flow_max_iters,
            epsilon: config.flow_epsilon_px,
            min_eigen: config.flow_min_eigen,
        }
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Per-frame flow vectors that survive convergence and outlier filtering.
pub fn background_flow(prev: &GrayFrame, next: &GrayFrame, config: &PipelineConfig) -> Vec<Vec2> {
    if (prev.width(), prev.height()) != (next.width(), next.height()) {
        return Vec::new();
    }
    let points = detect_corners(prev, &CornerOptions::from_config(config));
    let Ok(flows) = lk_flow(prev, next, &points, &FlowOptions::from_config(config)) else {
        return Vec::new();
    };
    let tracked: Vec<Vec2> = flows
        .into_iter()
        .filter(|f| f.converged)
        .map(|f| f.displacement)
        .collect();
    if tracked.is_empty() {
        return tracked;
    }
    let mut mags: Vec<f64> = tracked.iter().map(|v| v.norm()).collect();
    let med = median(&mut mags);
    let ratio = config.ego_outlier_ratio;
    let (lo, hi) = (med / ratio - OUTLIER_SLACK_PX, med * ratio + OUTLIER_SLACK_PX);
    tracked
        .into_iter()
        .filter(|v| {
            let m = v.norm();
            m >= lo && m <= hi
        })
        .collect()
}

/// Ego speed and direction between two consecutive frames.
///
/// Speed is the mean of the per-feature speeds (displacement per frame
/// period, converted with `metres_per_pixel`).
pub fn estimate_ego(prev: &GrayFrame, next: &GrayFrame, config: &PipelineConfig) -> EgoMotionEstimate {
    let survivors = background_flow(prev, next, config);
    let n = survivors.len();
    if n < config.ego_min_features {
        return EgoMotionEstimate::invalid(n);
    }
    let mut mean = Vec2::ZERO;
    let mut speed = 0.0;
    for v in &survivors {
        mean += *v;
        speed += v.norm() * config.fps * config.metres_per_pixel;
    }
    mean = mean / n as f64;
    speed /= n as f64;
    let direction = if mean.norm() < 1e-9 {
        STATIONARY_DIRECTION
    } else {
        (mean * config.ego_direction_sign).normalized().unwrap_or(STATIONARY_DIRECTION)
    };
    EgoMotionEstimate {
        speed_m_s: speed,
        direction,
        n_features_used: n,
        valid: true,
    }
}
