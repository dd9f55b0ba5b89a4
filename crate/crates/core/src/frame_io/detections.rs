use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BoundingBox, Detection, VehicleClass};
use crate::error::{Error, Result};

/// Per-frame detection lists, indexed by frame number.
pub type DetectionStream = Vec<Vec<Detection>>;

#[derive(Debug, Serialize, Deserialize)]
struct FrameRecord {
    frame: u64,
    boxes: Vec<BoxRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BoxRecord {
    class: String,
    score: f64,
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
}

/// Reads a line-delimited detection stream.
///
/// Frames missing from the file come back as empty lists. Boxes scoring
/// below `min_score` or labelled with a non-vehicle class are dropped.
pub fn read_detections(path: impl AsRef<Path>, min_score: f64) -> Result<DetectionStream> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_detections(BufReader::new(file), min_score)
}

pub fn parse_detections(reader: impl BufRead, min_score: f64) -> Result<DetectionStream> {
    let mut frames: DetectionStream = Vec::new();
    let mut last_frame: Option<u64> = None;

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let record: FrameRecord = serde_json::from_str(trimmed).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;

        if let Some(prev) = last_frame {
            if record.frame < prev {
                return Err(Error::Format(format!(
                    "line {line_no}: frame index {} follows {prev}",
                    record.frame
                )));
            }
        }
        last_frame = Some(record.frame);

        let slot = usize::try_from(record.frame).map_err(|_| Error::Parse {
            line: line_no,
            message: format!("frame index {} out of range", record.frame),
        })?;
        if frames.len() <= slot {
            frames.resize_with(slot + 1, Vec::new);
        }

        for b in record.boxes {
            if !(0.0..=1.0).contains(&b.score) {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("score {} outside [0, 1]", b.score),
                });
            }
            let bbox = BoundingBox::new(b.cx, b.cy, b.w, b.h);
            if !bbox.is_valid() {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("invalid box ({}, {}, {}, {})", b.cx, b.cy, b.w, b.h),
                });
            }
            let Some(class_label) = VehicleClass::from_label(&b.class) else {
                continue;
            };
            if b.score < min_score {
                continue;
            }
            frames[slot].push(Detection {
                frame_index: record.frame,
                class_label,
                score: b.score,
                bbox,
            });
        }
    }

    Ok(frames)
}

/// Writes one record per frame, including empty frames.
pub fn write_detections(path: impl AsRef<Path>, frames: &[Vec<Detection>]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for (frame, dets) in frames.iter().enumerate() {
        let record = FrameRecord {
            frame: frame as u64,
            boxes: dets
                .iter()
                .map(|d| BoxRecord {
                    class: d.class_label.as_str().to_string(),
                    score: d.score,
                    cx: d.bbox.cx,
                    cy: d.bbox.cy,
                    w: d.bbox.width,
                    h: d.bbox.height,
                })
                .collect(),
        };
        let line = serde_json::to_string(&record).map_err(|e| Error::Format(e.to_string()))?;
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}
