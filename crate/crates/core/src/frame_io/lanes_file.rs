use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::candidates::{LaneModel, LineSegment};
use crate::error::{Error, Result};
use crate::geometry::Vec2;

/// `{"left": [[x1,y1],[x2,y2]], "right": [[x1,y1],[x2,y2]]}`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LanesFile {
    pub left: [[f64; 2]; 2],
    pub right: [[f64; 2]; 2],
}

fn segment(points: [[f64; 2]; 2]) -> LineSegment {
    LineSegment::new(
        Vec2::new(points[0][0], points[0][1]),
        Vec2::new(points[1][0], points[1][1]),
    )
}

fn points(seg: &LineSegment) -> [[f64; 2]; 2] {
    [[seg.a.x, seg.a.y], [seg.b.x, seg.b.y]]
}

impl LanesFile {
    pub fn into_model(self, frame_width: usize, frame_height: usize) -> Result<LaneModel> {
        LaneModel::new(
            segment(self.left),
            segment(self.right),
            frame_width,
            frame_height,
        )
    }
}

impl From<&LaneModel> for LanesFile {
    fn from(m: &LaneModel) -> Self {
        LanesFile {
            left: points(&m.left_line),
            right: points(&m.right_line),
        }
    }
}

/// Reads a lanes file; the frame size is needed to validate line order at the bottom row.
pub fn read_lanes(path: impl AsRef<Path>, frame_width: usize, frame_height: usize) -> Result<LaneModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: LanesFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: e.line(),
        message: e.to_string(),
    })?;
    file.into_model(frame_width, frame_height)
}

pub fn write_lanes(path: impl AsRef<Path>, lanes: &LaneModel) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string(&LanesFile::from(lanes))
        .map_err(|e| Error::Format(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
