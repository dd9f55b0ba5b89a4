use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Every tunable of the pipeline. Serialized as a flat JSON object whose
/// keys mirror the field names; absent keys take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub fps: f64,
    /// Lookback, in frames, for trajectories and gross speed.
    pub interval_frames: u32,
    /// Frames on each side of the overlap onset used for acceleration statistics.
    pub accel_window_frames: u32,
    pub score_threshold: f64,
    pub min_detection_score: f64,
    /// Gate for centroid matching. `None` means a quarter of the frame diagonal.
    pub max_match_distance_px: Option<f64>,
    pub deregister_after_frames: u32,
    pub trajectory_min_magnitude_px: f64,
    pub theta_low_deg: f64,
    pub theta_high_deg: f64,
    pub alpha_ref_mps2: f64,
    pub gamma_ref_deg: f64,
    pub beta_parallel_scale: f64,
    pub beta_distance_ref_px: f64,
    pub w_alpha: f64,
    pub w_beta: f64,
    pub w_gamma: f64,
    pub metres_per_pixel: f64,
    /// Frame size used when no frames are supplied.
    pub frame_width: u32,
    pub frame_height: u32,
    pub match_tolerance_frames: u32,

    pub max_corners: usize,
    pub corner_quality: f64,
    pub corner_min_distance_px: f64,
    pub flow_levels: usize,
    pub flow_window: usize,
    pub flow_max_iters: usize,
    pub flow_epsilon_px: f64,
    /// Floor on the per-pixel smaller eigenvalue of the flow window tensor.
    pub flow_min_eigen: f64,
    pub ego_min_features: usize,
    pub ego_outlier_ratio: f64,
    /// Ego direction is `ego_direction_sign` times the mean background flow.
    pub ego_direction_sign: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            fps: 30.0,
            interval_frames: 5,
            accel_window_frames: 15,
            score_threshold: 0.5,
            min_detection_score: 0.7,
            max_match_distance_px: None,
            deregister_after_frames: 15,
            trajectory_min_magnitude_px: 5.0,
            theta_low_deg: 20.0,
            theta_high_deg: 120.0,
            alpha_ref_mps2: 20.0,
            gamma_ref_deg: 90.0,
            beta_parallel_scale: 0.5,
            beta_distance_ref_px: 50.0,
            w_alpha: 0.4,
            w_beta: 0.35,
            w_gamma: 0.25,
            metres_per_pixel: 0.05,
            frame_width: 1280,
            frame_height: 720,
            match_tolerance_frames: 30,
            max_corners: 100,
            corner_quality: 0.01,
            corner_min_distance_px: 10.0,
            flow_levels: 3,
            flow_window: 15,
            flow_max_iters: 10,
            flow_epsilon_px: 0.03,
            flow_min_eigen: 1e-3,
            ego_min_features: 8,
            ego_outlier_ratio: 3.0,
            ego_direction_sign: -1.0,
        }
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::validation(field, format!("must be positive, got {v}")))
    }
}

fn non_zero(field: &str, v: u64) -> Result<()> {
    if v > 0 {
        Ok(())
    } else {
        Err(Error::validation(field, "must be at least 1"))
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        positive("fps", self.fps)?;
        non_zero("interval_frames", self.interval_frames.into())?;
        non_zero("accel_window_frames", self.accel_window_frames.into())?;
        positive("score_threshold", self.score_threshold)?;
        if self.score_threshold >= 1.0 {
            return Err(Error::validation("score_threshold", "must be below 1"));
        }
        if !(0.0..=1.0).contains(&self.min_detection_score) {
            return Err(Error::validation("min_detection_score", "must lie in [0, 1]"));
        }
        if let Some(d) = self.max_match_distance_px {
            positive("max_match_distance_px", d)?;
        }
        non_zero("deregister_after_frames", self.deregister_after_frames.into())?;
        positive("trajectory_min_magnitude_px", self.trajectory_min_magnitude_px)?;
        positive("theta_low_deg", self.theta_low_deg)?;
        positive("theta_high_deg", self.theta_high_deg)?;
        if self.theta_low_deg >= self.theta_high_deg {
            return Err(Error::validation(
                "theta_low_deg",
                "must be smaller than theta_high_deg",
            ));
        }
        if self.theta_high_deg > 180.0 {
            return Err(Error::validation("theta_high_deg", "must not exceed 180"));
        }
        positive("alpha_ref_mps2", self.alpha_ref_mps2)?;
        positive("gamma_ref_deg", self.gamma_ref_deg)?;
        positive("beta_parallel_scale", self.beta_parallel_scale)?;
        if self.beta_parallel_scale > 1.0 {
            return Err(Error::validation("beta_parallel_scale", "must not exceed 1"));
        }
        positive("beta_distance_ref_px", self.beta_distance_ref_px)?;
        for (field, w) in [
            ("w_alpha", self.w_alpha),
            ("w_beta", self.w_beta),
            ("w_gamma", self.w_gamma),
        ] {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::validation(field, "weights must be non-negative"));
            }
        }
        let sum = self.w_alpha + self.w_beta + self.w_gamma;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::validation(
                "w_alpha",
                format!("weights w_alpha + w_beta + w_gamma sum to {sum}, expected 1"),
            ));
        }
        positive("metres_per_pixel", self.metres_per_pixel)?;
        non_zero("frame_width", self.frame_width.into())?;
        non_zero("frame_height", self.frame_height.into())?;
        non_zero("max_corners", self.max_corners as u64)?;
        positive("corner_quality", self.corner_quality)?;
        positive("corner_min_distance_px", self.corner_min_distance_px)?;
        non_zero("flow_levels", self.flow_levels as u64)?;
        if self.flow_window < 3 || self.flow_window % 2 == 0 {
            return Err(Error::validation("flow_window", "must be odd and at least 3"));
        }
        non_zero("flow_max_iters", self.flow_max_iters as u64)?;
        positive("flow_epsilon_px", self.flow_epsilon_px)?;
        positive("flow_min_eigen", self.flow_min_eigen)?;
        non_zero("ego_min_features", self.ego_min_features as u64)?;
        positive("ego_outlier_ratio", self.ego_outlier_ratio)?;
        if self.ego_direction_sign != 1.0 && self.ego_direction_sign != -1.0 {
            return Err(Error::validation("ego_direction_sign", "must be 1 or -1"));
        }
        Ok(())
    }

    /// Seconds between frames.
    pub fn frame_period(&self) -> f64 {
        1.0 / self.fps
    }

    pub fn match_distance_px(&self, frame_width: usize, frame_height: usize) -> f64 {
        self.max_match_distance_px
            .unwrap_or_else(|| (frame_width as f64).hypot(frame_height as f64) / 4.0)
    }
}

pub fn parse_config(text: &str) -> Result<PipelineConfig> {
    let config: PipelineConfig =
        serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
    config.validate()?;
    Ok(config)
}

pub fn read_config(path: impl AsRef<Path>) -> Result<PipelineConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_defaults() {
        assert_eq!(parse_config("{}").unwrap(), PipelineConfig::default());
        PipelineConfig::default().validate().unwrap();
    }

    #[test]
    fn weights_must_sum_to_one() {
        let err = parse_config(r#"{"w_alpha": 0.5, "w_beta": 0.5, "w_gamma": 0.5}"#).unwrap_err();
        match err {
            Error::Validation { field, .. } => assert_eq!(field, "w_alpha"),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn theta_order_checked() {
        let err = parse_config(r#"{"theta_low_deg": 130}"#).unwrap_err();
        assert!(matches!(err, Error::Validation { ref field, .. } if field == "theta_low_deg"));
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(matches!(parse_config(r#"{"fsp": 30}"#), Err(Error::Parse { .. })));
    }

    #[test]
    fn non_positive_threshold_names_field() {
        let err = parse_config(r#"{"fps": 0}"#).unwrap_err();
        assert!(err.to_string().contains("`fps`"), "{err}");
    }

    #[test]
    fn default_gate_is_quarter_diagonal() {
        let c = PipelineConfig::default();
        assert!((c.match_distance_px(300, 400) - 125.0).abs() < 1e-12);
    }
}
