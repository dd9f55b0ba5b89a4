//! Trajectory, intersection angle, speed and acceleration of tracked vehicles.

use crate::ego_motion::EgoMotionEstimate;
use crate::error::{Error, Result};
use crate::frame_io::PipelineConfig;
use crate::geometry::Vec2;
use crate::tracker::{centroid_at, CentroidPair, Track};

/// Normalized movement direction plus the displacement length it came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryVector {
    pub direction: Vec2,
    pub raw_magnitude: f64,
}

impl TrajectoryVector {
    /// `None` when the displacement is shorter than `min_magnitude`.
    pub fn from_displacement(mu: Vec2, min_magnitude: f64) -> Option<Self> {
        let magnitude = (mu.x * mu.x + mu.y * mu.y).sqrt();
        if magnitude < min_magnitude || magnitude == 0.0 {
            return None;
        }
        Some(TrajectoryVector {
            direction: mu / magnitude,
            raw_magnitude: magnitude,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KinematicState {
    pub gross_speed_px_s: f64,
    pub scaled_speed_px_s: f64,
    pub absolute_speed_m_s: f64,
    pub accel_change_m_s2: Option<f64>,
}

/// Displacement between the current centroid and the one `interval_frames`
/// back. Short displacements return `None` and leave any stored direction as is.
pub fn trajectory(track: &mut Track, frame_index: u64, config: &PipelineConfig) -> Result<Option<TrajectoryVector>> {
    if track.centroid_history.len() < 2 {
        return Ok(None);
    }
    let pair = centroid_at(track, frame_index, config.interval_frames.into())?;
    let traj = TrajectoryVector::from_displacement(pair.displacement(), config.trajectory_min_magnitude_px);
    if let Some(t) = traj {
        track.store_direction(frame_index, t.direction)?;
    }
    Ok(traj)
}

/// Angle between two directions in degrees, in [0, 180].
///
/// Equal to the arccosine of the normalized dot product; the two-argument
/// arctangent form keeps full precision near 0 and 180 degrees.
pub fn intersection_angle(mu1: Vec2, mu2: Vec2) -> f64 {
    if mu1.norm() == 0.0 || mu2.norm() == 0.0 {
        return 0.0;
    }
    mu1.cross(mu2).abs().atan2(mu1.dot(mu2)).to_degrees()
}

/// Pixel speed over the configured interval.
pub fn gross_speed(c1: Vec2, c2: Vec2, config: &PipelineConfig) -> f64 {
    gross_speed_over(c2 - c1, config.interval_frames.into(), config)
}

/// Pixel speed of `displacement` covered in `elapsed_frames` frames.
pub fn gross_speed_over(displacement: Vec2, elapsed_frames: u64, config: &PipelineConfig) -> f64 {
    if elapsed_frames == 0 {
        return 0.0;
    }
    displacement.norm() / (config.frame_period() * elapsed_frames as f64)
}

/// Height-normalized speed: boxes far from the camera (short) are scaled up,
/// by a factor between 1 (full-height box) and 2.
pub fn scaled_speed(gross: f64, box_height: f64, frame_height: f64) -> Result<f64> {
    if !(box_height > 0.0 && box_height <= frame_height) {
        return Err(Error::Domain(format!(
            "box height {box_height} outside (0, {frame_height}]"
        )));
    }
    Ok(((frame_height - box_height) / frame_height + 1.0) * gross)
}

/// Magnitude of ego velocity plus the tracked vehicle's relative velocity, in m/s.
///
/// `nu` must be a unit vector unless `scaled` is zero. A missing or invalid
/// ego estimate counts as a stationary camera.
pub fn absolute_speed(
    scaled: f64,
    nu: Vec2,
    ego: Option<&EgoMotionEstimate>,
    config: &PipelineConfig,
) -> Result<f64> {
    let relative_m_s = scaled * config.metres_per_pixel;
    if relative_m_s != 0.0 && (nu.norm() - 1.0).abs() > 1e-9 {
        return Err(Error::Invariant(format!(
            "direction ({}, {}) is not a unit vector",
            nu.x, nu.y
        )));
    }
    let ego_velocity = match ego {
        Some(e) if e.valid => e.direction * e.speed_m_s,
        _ => Vec2::ZERO,
    };
    let rel_velocity = if relative_m_s == 0.0 { Vec2::ZERO } else { nu * relative_m_s };
    Ok((ego_velocity + rel_velocity).norm())
}

/// Speed change over one interval, divided by the interval duration.
pub fn accel_change(s1: f64, s2: f64, config: &PipelineConfig) -> f64 {
    (s2 - s1) / (config.frame_period() * f64::from(config.interval_frames))
}

/// Acceleration between two speed samples `frames` apart.
pub fn accel_between(s1: f64, s2: f64, frames: u64, config: &PipelineConfig) -> f64 {
    (s2 - s1) / (config.frame_period() * frames as f64)
}

/// Updates direction and speed histories of a track observed at `frame_index`.
///
/// Gross speed divides by the frames actually spanned by the centroid pair,
/// which equals `interval_frames` once the track is old enough.
pub fn update_track(
    track: &mut Track,
    frame_index: u64,
    frame_height: f64,
    ego: Option<&EgoMotionEstimate>,
    config: &PipelineConfig,
) -> Result<KinematicState> {
    let bbox = *track
        .box_at(frame_index)
        .ok_or_else(|| Error::Lookup(format!("track {} not observed at frame {frame_index}", track.id)))?;
    trajectory(track, frame_index, config)?;
    let pair: CentroidPair = centroid_at(track, frame_index, config.interval_frames.into())?;
    let gross = gross_speed_over(pair.displacement(), pair.elapsed_frames(), config);
    let scaled = scaled_speed(gross, bbox.height, frame_height)?;

    let nu = track
        .direction
        .or_else(|| pair.displacement().normalized())
        .unwrap_or(Vec2::new(0.0, -1.0));
    let scaled_for_abs = if pair.displacement().normalized().is_some() { scaled } else { 0.0 };
    let absolute = absolute_speed(scaled_for_abs, nu, ego, config)?;

    let accel = track
        .absolute_speed_history
        .last()
        .map(|&(f, s)| accel_between(s, absolute, frame_index - f, config));
    track.scaled_speed_history.push((frame_index, scaled));
    track.absolute_speed_history.push((frame_index, absolute));
    Ok(KinematicState {
        gross_speed_px_s: gross,
        scaled_speed_px_s: scaled,
        absolute_speed_m_s: absolute,
        accel_change_m_s2: accel,
    })
}
