use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inclusive frame span containing a labelled accident.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroundTruthInterval {
    pub start_frame: u64,
    pub end_frame: u64,
}

impl GroundTruthInterval {
    pub fn new(start_frame: u64, end_frame: u64) -> Self {
        GroundTruthInterval {
            start_frame,
            end_frame,
        }
    }
}

/// Sorts intervals and merges those sharing at least one frame.
pub fn normalize_intervals(mut intervals: Vec<GroundTruthInterval>) -> Vec<GroundTruthInterval> {
    intervals.sort();
    let mut merged: Vec<GroundTruthInterval> = Vec::with_capacity(intervals.len());
    for iv in intervals {
        match merged.last_mut() {
            Some(last) if iv.start_frame <= last.end_frame => {
                last.end_frame = last.end_frame.max(iv.end_frame);
            }
            _ => merged.push(iv),
        }
    }
    merged
}

pub fn parse_ground_truth(text: &str) -> Result<Vec<GroundTruthInterval>> {
    let intervals: Vec<GroundTruthInterval> =
        serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
    for iv in &intervals {
        if iv.start_frame > iv.end_frame {
            return Err(Error::validation(
                "start_frame",
                format!("{} is after end_frame {}", iv.start_frame, iv.end_frame),
            ));
        }
    }
    Ok(normalize_intervals(intervals))
}

pub fn read_ground_truth(path: impl AsRef<Path>) -> Result<Vec<GroundTruthInterval>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_ground_truth(&text)
}

pub fn write_ground_truth(path: impl AsRef<Path>, intervals: &[GroundTruthInterval]) -> Result<()> {
    let path = path.as_ref();
    let mut text =
        serde_json::to_string_pretty(intervals).map_err(|e| Error::Format(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
