//! Detection rate and false-alarm rate against ground-truth intervals.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame_io::GroundTruthInterval;

/// Frame and verdict of one scored episode; all evaluation needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScoredFrame {
    pub frame: u64,
    pub accident: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub adr_percent: Option<f64>,
    pub far_percent: Option<f64>,
    pub identified: u64,
    pub total_accidents: u64,
    pub false_alarms: u64,
    pub total_patterns: u64,
}

impl MetricsReport {
    /// Builds a report from raw counts; a zero denominator gives `None`.
    pub fn from_counts(identified: u64, total_accidents: u64, false_alarms: u64, total_patterns: u64) -> Self {
        let pct = |n: u64, d: u64| (d > 0).then(|| n as f64 / d as f64 * 100.0);
        MetricsReport {
            adr_percent: pct(identified, total_accidents),
            far_percent: pct(false_alarms, total_patterns),
            identified,
            total_accidents,
            false_alarms,
            total_patterns,
        }
    }

    /// Pools the counts of several runs.
    pub fn merge<'a>(reports: impl IntoIterator<Item = &'a MetricsReport>) -> Self {
        let (mut i, mut t, mut f, mut p) = (0, 0, 0, 0);
        for r in reports {
            i += r.identified;
            t += r.total_accidents;
            f += r.false_alarms;
            p += r.total_patterns;
        }
        Self::from_counts(i, t, f, p)
    }
}

/// Matches positive events to truth intervals widened by `tolerance` frames.
///
/// Events are taken in frame order and each credits at most one interval,
/// the earliest still-unidentified one that contains it. A positive event
/// inside no widened interval is a false alarm.
pub fn evaluate(events: &[ScoredFrame], truth: &[GroundTruthInterval], tolerance: u64) -> MetricsReport {
    let mut positives: Vec<u64> = events.iter().filter(|e| e.accident).map(|e| e.frame).collect();
    positives.sort_unstable();
    let widened: Vec<(u64, u64)> = truth
        .iter()
        .map(|iv| (iv.start_frame.saturating_sub(tolerance), iv.end_frame.saturating_add(tolerance)))
        .collect();
    let mut identified = vec![false; truth.len()];
    let mut false_alarms = 0;
    for frame in positives {
        let inside = |&(lo, hi): &(u64, u64)| lo <= frame && frame <= hi;
        if let Some(k) = (0..widened.len()).find(|&k| !identified[k] && inside(&widened[k])) {
            identified[k] = true;
        } else if !widened.iter().any(inside) {
            false_alarms += 1;
        }
    }
    MetricsReport::from_counts(
        identified.iter().filter(|&&x| x).count() as u64,
        truth.len() as u64,
        false_alarms,
        events.len() as u64,
    )
}

pub fn write_report(report: &MetricsReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(report).map_err(|e| Error::Format(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_report(path: impl AsRef<Path>) -> Result<MetricsReport> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: e.line(),
        message: e.to_string(),
    })
}
