//! On-disk formats: detection streams, binary graymaps, lanes, ground truth
//! and pipeline configuration.

pub mod config;
mod detections;
mod lanes_file;
mod pgm;
mod truth;

use serde::{Deserialize, Serialize};

use crate::geometry::Vec2;

pub use config::{read_config, PipelineConfig};
pub use detections::{parse_detections, read_detections, write_detections, DetectionStream};
pub use lanes_file::{read_lanes, write_lanes, LanesFile};
pub use pgm::{decode_pgm, encode_pgm, read_frames, read_pgm, write_frames, write_pgm, GrayFrame};
pub use truth::{normalize_intervals, read_ground_truth, write_ground_truth, GroundTruthInterval};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VehicleClass {
    Car,
    Bus,
    Truck,
}

impl VehicleClass {
    pub fn from_label(label: &str) -> Option<Self> {
        match label {
            "car" => Some(VehicleClass::Car),
            "bus" => Some(VehicleClass::Bus),
            "truck" => Some(VehicleClass::Truck),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            VehicleClass::Car => "car",
            VehicleClass::Bus => "bus",
            VehicleClass::Truck => "truck",
        }
    }
}

/// Axis-aligned box in centroid form. `width` and `height` are full extents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub cx: f64,
    pub cy: f64,
    pub width: f64,
    pub height: f64,
}

impl BoundingBox {
    pub const fn new(cx: f64, cy: f64, width: f64, height: f64) -> Self {
        BoundingBox {
            cx,
            cy,
            width,
            height,
        }
    }

    pub fn centroid(&self) -> Vec2 {
        Vec2::new(self.cx, self.cy)
    }

    pub fn left(&self) -> f64 {
        self.cx - self.width / 2.0
    }

    pub fn right(&self) -> f64 {
        self.cx + self.width / 2.0
    }

    pub fn top(&self) -> f64 {
        self.cy - self.height / 2.0
    }

    pub fn bottom(&self) -> f64 {
        self.cy + self.height / 2.0
    }

    pub fn is_valid(&self) -> bool {
        self.cx.is_finite()
            && self.cy.is_finite()
            && self.width.is_finite()
            && self.height.is_finite()
            && self.width > 0.0
            && self.height > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub frame_index: u64,
    pub class_label: VehicleClass,
    pub score: f64,
    pub bbox: BoundingBox,
}
