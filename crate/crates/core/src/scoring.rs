//! Anomaly scores for a candidate episode and the accident verdict.
//!
//! Each raw quantity is mapped into [0, 1] by a clamped linear ramp (or, for
//! near-parallel trajectories, an exponential in the distance to the
//! trajectories' crossing point); the verdict is a weighted sum compared
//! against `score_threshold`.

use serde::{Deserialize, Serialize};

use crate::candidates::CandidateEpisode;
use crate::error::{Error, Result};
use crate::frame_io::PipelineConfig;
use crate::geometry::Vec2;
use crate::kinematics::{accel_between, intersection_angle};
use crate::tracker::{Track, TrackId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnomalyScores {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub combined: f64,
    /// Angle between the pair's trajectories at the overlap onset; `None`
    /// when either track had no stored direction.
    pub theta_deg: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Diagnostic {
    NoSpeedHistory(TrackId),
    MissingDirection(TrackId),
    NoRotationSample(TrackId),
    ParallelTrajectories,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccidentEvent {
    pub episode: CandidateEpisode,
    pub scores: AnomalyScores,
    /// Frame at which the overlap condition was first met.
    pub frame: u64,
    pub verdict: bool,
    pub diagnostics: Vec<Diagnostic>,
}

/// Acceleration window statistics for one vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccelWindow {
    pub mean_before: f64,
    pub max_after: f64,
}

/// Magnitudes of first-difference accelerations of the stored absolute
/// speeds, before (frames `start - W + 1 ..= start`) and after
/// (`start + 1 ..= start + W`) the onset. `None` without any speed history.
pub fn accel_window(track: &Track, start: u64, config: &PipelineConfig) -> Option<AccelWindow> {
    let hist = &track.absolute_speed_history;
    if hist.is_empty() {
        return None;
    }
    let w = u64::from(config.accel_window_frames);
    let lo = (start + 1).saturating_sub(w);
    let hi = start + w;
    let (mut sum, mut n, mut max_after) = (0.0, 0usize, 0.0f64);
    for pair in hist.windows(2) {
        let ((f0, s0), (f1, s1)) = (pair[0], pair[1]);
        let a = accel_between(s0, s1, f1 - f0, config).abs();
        if (lo..=start).contains(&f1) {
            sum += a;
            n += 1;
        } else if f1 > start && f1 <= hi {
            max_after = max_after.max(a);
        }
    }
    Some(AccelWindow {
        mean_before: if n > 0 { sum / n as f64 } else { 0.0 },
        max_after,
    })
}

pub fn alpha_from_window(window: AccelWindow, config: &PipelineConfig) -> f64 {
    ((window.max_after - window.mean_before) / config.alpha_ref_mps2).clamp(0.0, 1.0)
}

/// Per-vehicle acceleration anomaly; 0 with a diagnostic if no speeds were recorded.
pub fn alpha_score(track: &Track, episode: &CandidateEpisode, config: &PipelineConfig) -> (f64, Option<Diagnostic>) {
    match accel_window(track, episode.start_frame, config) {
        Some(w) => (alpha_from_window(w, config), None),
        None => (0.0, Some(Diagnostic::NoSpeedHistory(track.id))),
    }
}

/// Crossing point of the lines `pa + t da` and `pb + s db`.
fn line_intersection(pa: Vec2, da: Vec2, pb: Vec2, db: Vec2) -> Option<Vec2> {
    let denom = da.cross(db);
    if denom == 0.0 {
        return None;
    }
    let t = (pb - pa).cross(db) / denom;
    Some(pa + da * t)
}

/// Trajectory anomaly from the pair's intersection angle.
///
/// Between the two angle limits the score ramps linearly and saturates at
/// `theta_high_deg`. At or below `theta_low_deg` it decays with the distance
/// from the closer centroid to the trajectories' crossing point, and is 0
/// for parallel lines.
pub fn beta_score(theta_deg: f64, dir_a: Vec2, dir_b: Vec2, centroid_a: Vec2, centroid_b: Vec2, config: &PipelineConfig) -> f64 {
    let (lo, hi) = (config.theta_low_deg, config.theta_high_deg);
    if theta_deg >= hi {
        return 1.0;
    }
    if theta_deg > lo {
        return ((theta_deg - lo) / (hi - lo)).clamp(0.0, 1.0);
    }
    if theta_deg.to_radians().abs() < 1e-6 {
        return 0.0;
    }
    let Some(p) = line_intersection(centroid_a, dir_a, centroid_b, dir_b) else {
        return 0.0;
    };
    let d = p.distance(centroid_a).min(p.distance(centroid_b));
    (config.beta_parallel_scale * (-d / config.beta_distance_ref_px).exp()).clamp(0.0, 1.0)
}

/// Self-rotation anomaly: change of a vehicle's own direction over one
/// interval after the onset.
pub fn gamma_score(track: &Track, episode: &CandidateEpisode, config: &PipelineConfig) -> (f64, Option<Diagnostic>) {
    let start = episode.start_frame;
    let later = start + u64::from(config.interval_frames);
    match (track.direction_at(start), track.direction_at(later)) {
        (Some(a), Some(b)) => (gamma_from_angle(intersection_angle(a, b), config), None),
        _ => (0.0, Some(Diagnostic::NoRotationSample(track.id))),
    }
}

pub fn gamma_from_angle(delta_deg: f64, config: &PipelineConfig) -> f64 {
    (delta_deg / config.gamma_ref_deg).clamp(0.0, 1.0)
}

/// Weighted sum of the three components and the strict-threshold verdict.
pub fn combine(alpha: f64, beta: f64, gamma: f64, config: &PipelineConfig) -> Result<(f64, bool)> {
    for (name, v) in [("alpha", alpha), ("beta", beta), ("gamma", gamma)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Invariant(format!("{name} = {v} outside [0, 1]")));
        }
    }
    let combined = (config.w_alpha * alpha + config.w_beta * beta + config.w_gamma * gamma).clamp(0.0, 1.0);
    Ok((combined, combined > config.score_threshold))
}

/// Scores a closed episode from the two tracks' histories.
pub fn score_episode(episode: &CandidateEpisode, a: &Track, b: &Track, config: &PipelineConfig) -> Result<AccidentEvent> {
    let mut diagnostics = Vec::new();
    let start = episode.start_frame;

    let (alpha_a, da) = alpha_score(a, episode, config);
    let (alpha_b, db) = alpha_score(b, episode, config);
    diagnostics.extend(da.into_iter().chain(db));
    let alpha = alpha_a.max(alpha_b);

    let dir_a = a.direction_at(start);
    let dir_b = b.direction_at(start);
    let (beta, theta_deg) = match (dir_a, dir_b) {
        (Some(ua), Some(ub)) => {
            let theta = intersection_angle(ua, ub);
            let ca = a.box_at(start).map(|bb| bb.centroid());
            let cb = b.box_at(start).map(|bb| bb.centroid());
            let (ca, cb) = match (ca, cb) {
                (Some(ca), Some(cb)) => (ca, cb),
                _ => {
                    return Err(Error::Invariant(format!(
                        "episode {:?} starts at frame {start} without both boxes",
                        episode.track_ids
                    )))
                }
            };
            if theta <= config.theta_low_deg && theta.to_radians() < 1e-6 {
                diagnostics.push(Diagnostic::ParallelTrajectories);
            }
            (beta_score(theta, ua, ub, ca, cb, config), Some(theta))
        }
        _ => {
            if dir_a.is_none() {
                diagnostics.push(Diagnostic::MissingDirection(a.id));
            }
            if dir_b.is_none() {
                diagnostics.push(Diagnostic::MissingDirection(b.id));
            }
            (0.0, None)
        }
    };

    let (gamma_a, ga) = gamma_score(a, episode, config);
    let (gamma_b, gb) = gamma_score(b, episode, config);
    diagnostics.extend(ga.into_iter().chain(gb));
    let gamma = gamma_a.max(gamma_b);

    let (combined, verdict) = combine(alpha, beta, gamma, config)?;
    Ok(AccidentEvent {
        episode: *episode,
        scores: AnomalyScores {
            alpha,
            beta,
            gamma,
            combined,
            theta_deg,
        },
        frame: start,
        verdict,
        diagnostics,
    })
}
