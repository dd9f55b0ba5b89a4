//! Deterministic post-detection accident detection for dashcam footage.
//!
//! The crate consumes per-frame vehicle detections (and optionally grayscale
//! frames), keeps vehicle identities with a centroid tracker, derives
//! trajectory and speed kinematics, finds overlapping vehicle pairs and
//! scores them for acceleration, trajectory and rotation anomalies.
//!
//! Module map:
//!
//! - [`frame_io`]: on-disk formats (detections, graymaps, lanes, truth, config)
//! - [`tracker`]: greedy nearest-centroid tracker
//! - [`candidates`]: overlap test, lane sections and candidate episodes
//! - [`lanes`]: straight-line lane estimator
//! - [`kinematics`]: trajectories, angles, speeds and acceleration
//! - [`ego_motion`]: corner features and pyramidal Lucas-Kanade flow
//! - [`scoring`]: anomaly scores and the accident verdict
//! - [`evaluation`]: detection rate and false alarm rate
//! - [`synth`]: synthetic scenario generator and renderer
//! - [`pipeline`]: per-frame orchestration and event logs

pub mod candidates;
pub mod ego_motion;
pub mod error;
pub mod evaluation;
pub mod frame_io;
pub mod geometry;
pub mod kinematics;
pub mod lanes;
pub mod pipeline;
mod raster;
pub mod scoring;
pub mod synth;
pub mod tracker;

pub use error::{Error, Result};
pub use frame_io::config::PipelineConfig;
pub use geometry::Vec2;
