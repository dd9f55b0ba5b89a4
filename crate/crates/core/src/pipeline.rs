//! Per-frame orchestration, event logs and run manifests.
//!
//! Each frame runs, in order: tracker update, ego-motion estimate (when
//! frames are available), kinematics for every track observed in the frame,
//! candidate update, then scoring of closed episodes whose post-onset
//! acceleration window has fully elapsed.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::candidates::{CandidateEpisode, EpisodeTable, LaneModel};
use crate::ego_motion::{estimate_ego, EgoMotionEstimate};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, write_report, MetricsReport, ScoredFrame};
use crate::frame_io::{
    read_detections, read_frames, read_ground_truth, read_lanes, write_lanes, Detection, GrayFrame, PipelineConfig,
};
use crate::kinematics::update_track;
use crate::lanes::estimate_lanes;
use crate::scoring::{score_episode, AccidentEvent};
use crate::synth::{generate, render_frames, write_scenario, ScenarioKind, SynthOutput};
use crate::tracker::{CentroidTracker, Track, TrackId, TrackerConfig};

/// One line of the event log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventRecord {
    pub frame: u64,
    pub tracks: [TrackId; 2],
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub theta_deg: Option<f64>,
    pub score: f64,
    pub accident: bool,
}

impl From<&AccidentEvent> for EventRecord {
    fn from(e: &AccidentEvent) -> Self {
        EventRecord {
            frame: e.frame,
            tracks: [e.episode.track_ids.0, e.episode.track_ids.1],
            alpha: e.scores.alpha,
            beta: e.scores.beta,
            gamma: e.scores.gamma,
            theta_deg: e.scores.theta_deg,
            score: e.scores.combined,
            accident: e.verdict,
        }
    }
}

impl From<&EventRecord> for ScoredFrame {
    fn from(r: &EventRecord) -> Self {
        ScoredFrame {
            frame: r.frame,
            accident: r.accident,
        }
    }
}

#[derive(Serialize)]
struct TruncationMarker<'a> {
    truncated: bool,
    frame: Option<u64>,
    error: &'a str,
}

/// Where the lane model of a run came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaneSource {
    File,
    Estimated,
    /// No lanes: the whole road is one section.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInputs {
    pub detections: PathBuf,
    pub frames: Option<PathBuf>,
    pub lanes: Option<PathBuf>,
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config: PipelineConfig,
    pub inputs: RunInputs,
    pub lane_source: LaneSource,
    pub frames_processed: u64,
    pub event_count: u64,
    pub wall_time_s: f64,
    pub error: Option<String>,
}

/// Streaming detector state.
#[derive(Debug)]
pub struct Detector {
    config: PipelineConfig,
    lanes: Option<LaneModel>,
    frame_height: f64,
    tracker: CentroidTracker,
    episodes: EpisodeTable,
    retired: BTreeMap<TrackId, Track>,
    pending: Vec<CandidateEpisode>,
}

impl Detector {
    pub fn new(config: PipelineConfig, lanes: Option<LaneModel>, frame_width: usize, frame_height: usize) -> Result<Self> {
        config.validate()?;
        let tracker = CentroidTracker::new(TrackerConfig {
            max_match_distance_px: config.match_distance_px(frame_width, frame_height),
            deregister_after_frames: config.deregister_after_frames,
        });
        Ok(Detector {
            config,
            lanes,
            frame_height: frame_height as f64,
            tracker,
            episodes: EpisodeTable::new(),
            retired: BTreeMap::new(),
            pending: Vec::new(),
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    /// Processes one frame and returns the episodes that became scorable.
    pub fn step(
        &mut self,
        frame_index: u64,
        detections: &[Detection],
        ego: Option<&EgoMotionEstimate>,
    ) -> Result<Vec<AccidentEvent>> {
        self.step_inner(frame_index, detections, ego)
            .map_err(|e| e.at_frame(frame_index))
    }

    fn step_inner(
        &mut self,
        frame_index: u64,
        detections: &[Detection],
        ego: Option<&EgoMotionEstimate>,
    ) -> Result<Vec<AccidentEvent>> {
        let update = self.tracker.update(detections, frame_index)?;
        for track in update.deregistered {
            self.retired.insert(track.id, track);
        }

        let mut observed = Vec::with_capacity(update.assignments.len());
        for (&id, det) in update.assignments.iter().zip(detections) {
            let track = self
                .tracker
                .track_mut(id)
                .ok_or_else(|| Error::Invariant(format!("assigned track {id} is not live")))?;
            update_track(track, frame_index, self.frame_height, ego, &self.config)?;
            observed.push((id, det.bbox));
        }
        observed.sort_by_key(|&(id, _)| id);

        let changes = self.episodes.update(&observed, self.lanes.as_ref(), frame_index)?;
        self.pending.extend(changes.closed);
        self.score_ready(Some(frame_index))
    }

    /// Closes all open episodes and scores everything still pending.
    pub fn finish(&mut self) -> Result<Vec<AccidentEvent>> {
        let rest = self.episodes.close_all();
        self.pending.extend(rest);
        self.score_ready(None)
    }

    fn track(&self, id: TrackId) -> Result<&Track> {
        self.tracker
            .track(id)
            .or_else(|| self.retired.get(&id))
            .ok_or_else(|| Error::Invariant(format!("episode refers to unknown track {id}")))
    }

    fn score_ready(&mut self, now: Option<u64>) -> Result<Vec<AccidentEvent>> {
        let window = u64::from(self.config.accel_window_frames);
        let (ready, waiting): (Vec<_>, Vec<_>) = std::mem::take(&mut self.pending)
            .into_iter()
            .partition(|ep| now.map_or(true, |f| f >= ep.start_frame + window));
        self.pending = waiting;

        let mut events = Vec::with_capacity(ready.len());
        for ep in &ready {
            let a = self.track(ep.track_ids.0)?;
            let b = self.track(ep.track_ids.1)?;
            events.push(score_episode(ep, a, b, &self.config)?);
        }
        events.sort_by_key(|e| (e.frame, e.episode.track_ids));

        let pending = &self.pending;
        self.retired
            .retain(|id, _| pending.iter().any(|ep| ep.track_ids.0 == *id || ep.track_ids.1 == *id));
        Ok(events)
    }
}

/// Runs the detector over a whole stream. `frames`, when given, drive the
/// ego-motion estimate; their size overrides the configured frame size.
pub fn detect(
    stream: &[Vec<Detection>],
    frames: Option<&[GrayFrame]>,
    lanes: Option<LaneModel>,
    config: &PipelineConfig,
) -> Result<Vec<AccidentEvent>> {
    let mut events = Vec::new();
    drive(stream, frames, lanes, config, |batch| {
        events.extend_from_slice(batch);
        Ok(())
    })?;
    Ok(events)
}

fn frame_size(frames: Option<&[GrayFrame]>, config: &PipelineConfig) -> (usize, usize) {
    match frames.and_then(|f| f.first()) {
        Some(f) => (f.width(), f.height()),
        None => (config.frame_width as usize, config.frame_height as usize),
    }
}

/// Returns the number of frames processed.
fn drive(
    stream: &[Vec<Detection>],
    frames: Option<&[GrayFrame]>,
    lanes: Option<LaneModel>,
    config: &PipelineConfig,
    mut sink: impl FnMut(&[AccidentEvent]) -> Result<()>,
) -> Result<u64> {
    let (w, h) = frame_size(frames, config);
    let mut detector = Detector::new(config.clone(), lanes, w, h)?;
    let frames = frames.unwrap_or(&[]);
    let n = stream.len().max(frames.len());
    for f in 0..n {
        let dets = stream.get(f).map(Vec::as_slice).unwrap_or(&[]);
        let ego = match (f.checked_sub(1).and_then(|p| frames.get(p)), frames.get(f)) {
            (Some(prev), Some(next)) => Some(estimate_ego(prev, next, config)),
            _ => None,
        };
        let events = detector.step(f as u64, dets, ego.as_ref())?;
        sink(&events)?;
    }
    let events = detector.finish().map_err(|e| e.at_frame(n as u64))?;
    sink(&events)?;
    Ok(n as u64)
}

/// Picks the lane model: the file if given, else an estimate from the
/// frames, else none.
pub fn resolve_lanes(
    lanes_path: Option<&Path>,
    frames: Option<&[GrayFrame]>,
    config: &PipelineConfig,
) -> Result<(Option<LaneModel>, LaneSource)> {
    let (w, h) = frame_size(frames, config);
    if let Some(p) = lanes_path {
        return Ok((Some(read_lanes(p, w, h)?), LaneSource::File));
    }
    match frames {
        Some(frames) if !frames.is_empty() => match estimate_lanes(frames) {
            Ok(m) => Ok((Some(m), LaneSource::Estimated)),
            Err(Error::Estimation(_)) => Ok((None, LaneSource::None)),
            Err(e) => Err(e),
        },
        _ => Ok((None, LaneSource::None)),
    }
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

fn write_json_pretty<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

struct EventLog {
    path: PathBuf,
    out: BufWriter<File>,
    count: u64,
}

impl EventLog {
    fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(EventLog {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
            count: 0,
        })
    }

    fn line<T: Serialize>(&mut self, value: &T) -> Result<()> {
        let text = serde_json::to_string(value).map_err(|e| Error::Format(e.to_string()))?;
        writeln!(self.out, "{text}").map_err(|e| Error::io(&self.path, e))
    }

    fn append(&mut self, events: &[AccidentEvent]) -> Result<()> {
        for e in events {
            self.line(&EventRecord::from(e))?;
            self.count += 1;
        }
        Ok(())
    }

    fn flush(&mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Runs detection over files and writes the event log to `out` and a run
/// manifest next to it. On failure the log ends with a truncation marker.
pub fn run_detect(inputs: &RunInputs, config: &PipelineConfig, out: &Path) -> Result<RunManifest> {
    let started = Instant::now();
    config.validate()?;
    let stream = read_detections(&inputs.detections, config.min_detection_score)?;
    let frames = inputs.frames.as_deref().map(read_frames).transpose()?;
    let (lanes, lane_source) = resolve_lanes(inputs.lanes.as_deref(), frames.as_deref(), config)?;

    let mut log = EventLog::create(out)?;
    let result = drive(&stream, frames.as_deref(), lanes, config, |batch| log.append(batch));
    let (frames_processed, error) = match &result {
        Ok(n) => (*n, None),
        Err(e) => {
            let frame = match e {
                Error::AtFrame { frame, .. } => Some(*frame),
                _ => None,
            };
            let message = e.to_string();
            log.line(&TruncationMarker {
                truncated: true,
                frame,
                error: &message,
            })?;
            (frame.unwrap_or(0), Some(message))
        }
    };
    log.flush()?;

    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        inputs: inputs.clone(),
        lane_source,
        frames_processed,
        event_count: log.count,
        wall_time_s: started.elapsed().as_secs_f64(),
        error,
    };
    write_json_pretty(&manifest, &manifest_path(out))?;
    result.map(|_| manifest)
}

/// Reads an event log; a truncation marker is a format error.
pub fn read_events(path: impl AsRef<Path>) -> Result<Vec<EventRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if value.get("truncated").is_some() {
            return Err(Error::Format(format!("event log is truncated at line {}: {line}", i + 1)));
        }
        let record: EventRecord = serde_json::from_value(value).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

pub fn run_eval(events: &Path, truth: &Path, tolerance_frames: u64, out: &Path) -> Result<MetricsReport> {
    let records = read_events(events)?;
    let truth = read_ground_truth(truth)?;
    let scored: Vec<ScoredFrame> = records.iter().map(ScoredFrame::from).collect();
    let report = evaluate(&scored, &truth, tolerance_frames);
    write_report(&report, out)?;
    Ok(report)
}

/// Generates a scenario into `out_dir`, optionally rendering its frames.
pub fn run_synth(seed: u64, kind: ScenarioKind, out_dir: &Path, render: bool, config: &PipelineConfig) -> Result<SynthOutput> {
    let out = generate(seed, kind, config);
    let frames = render.then(|| render_frames(&out.scenario));
    write_scenario(out_dir, &out, frames.as_deref())?;
    Ok(out)
}

pub fn run_estimate_lanes(frames_dir: &Path, out: &Path) -> Result<LaneModel> {
    let frames = read_frames(frames_dir)?;
    if frames.is_empty() {
        return Err(Error::Usage(format!("no frames in {}", frames_dir.display())));
    }
    let model = estimate_lanes(&frames)?;
    write_lanes(out, &model)?;
    Ok(model)
}
