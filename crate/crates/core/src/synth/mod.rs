//! Seeded synthetic dashcam scenarios with known ground truth.
//!
//! Vehicles follow scripted piecewise-linear centroid paths in pixel space.
//! Crash kinds bring two vehicles together at a known crossing angle, then
//! deflect both headings and bring them to a stop within a few frames.

mod render;

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::candidates::{boxes_overlap, condition_c1, LaneModel};
use crate::error::{Error, Result};
use crate::frame_io::{
    write_detections, write_frames, write_ground_truth, write_lanes, BoundingBox, Detection, DetectionStream,
    GrayFrame, GroundTruthInterval, LanesFile, PipelineConfig, VehicleClass,
};
use crate::geometry::Vec2;

pub use render::{render_frame, render_frames, render_frames_with, RenderOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    CrashRearEnd,
    CrashCrossing,
    NearMissPass,
    ParallelTraffic,
    OcclusionOverlap,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 5] = [
        ScenarioKind::CrashRearEnd,
        ScenarioKind::CrashCrossing,
        ScenarioKind::NearMissPass,
        ScenarioKind::ParallelTraffic,
        ScenarioKind::OcclusionOverlap,
    ];

    pub fn is_crash(self) -> bool {
        matches!(
            self,
            ScenarioKind::CrashRearEnd | ScenarioKind::CrashCrossing | ScenarioKind::OcclusionOverlap
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::CrashRearEnd => "crash_rear_end",
            ScenarioKind::CrashCrossing => "crash_crossing",
            ScenarioKind::NearMissPass => "near_miss_pass",
            ScenarioKind::ParallelTraffic => "parallel_traffic",
            ScenarioKind::OcclusionOverlap => "occlusion_overlap",
        }
    }

    fn salt(self) -> u64 {
        ScenarioKind::ALL.iter().position(|&k| k == self).unwrap_or(0) as u64
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<_> = ScenarioKind::ALL.iter().map(|k| k.as_str()).collect();
                Error::Usage(format!("unknown scenario kind `{s}` (expected one of {})", names.join(", ")))
            })
    }
}

/// Constant-velocity piece of a path, active from `start_frame` until the next one begins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathSegment {
    pub start_frame: u64,
    pub start: Vec2,
    /// Pixels per frame.
    pub velocity: Vec2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleScript {
    pub class_label: VehicleClass,
    pub width: f64,
    pub height: f64,
    pub segments: Vec<PathSegment>,
}

impl VehicleScript {
    fn straight(class_label: VehicleClass, width: f64, height: f64, start: Vec2, velocity: Vec2) -> Self {
        VehicleScript {
            class_label,
            width,
            height,
            segments: vec![PathSegment {
                start_frame: 0,
                start,
                velocity,
            }],
        }
    }

    pub fn position(&self, frame: u64) -> Vec2 {
        let seg = self
            .segments
            .iter()
            .rev()
            .find(|s| s.start_frame <= frame)
            .unwrap_or(&self.segments[0]);
        seg.start + seg.velocity * (frame as f64 - seg.start_frame as f64)
    }

    pub fn bbox(&self, frame: u64) -> BoundingBox {
        let c = self.position(frame);
        BoundingBox::new(c.x, c.y, self.width, self.height)
    }

    /// Replaces the path after `frame` with the given per-frame velocities,
    /// then holds still.
    fn continue_with(&mut self, frame: u64, velocities: &[Vec2]) {
        self.segments.retain(|s| s.start_frame <= frame);
        let mut f = frame;
        for &v in velocities.iter().chain(std::iter::once(&Vec2::ZERO)) {
            let start = self.position(f);
            self.segments.push(PathSegment {
                start_frame: f,
                start,
                velocity: v,
            });
            f += 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub seed: u64,
    pub kind: ScenarioKind,
    pub n_frames: u64,
    pub frame_width: usize,
    pub frame_height: usize,
    pub ego_speed_m_s: f64,
    /// Background translation in pixels per frame.
    pub ego_flow_px: Vec2,
    pub lanes: LanesFile,
    pub vehicles: Vec<VehicleScript>,
    pub crash_frame: Option<u64>,
}

impl Scenario {
    pub fn lane_model(&self) -> Result<LaneModel> {
        self.lanes.clone().into_model(self.frame_width, self.frame_height)
    }

    /// Detections in vehicle order, one list per frame.
    pub fn detections(&self) -> DetectionStream {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5eed_5c0e);
        (0..self.n_frames)
            .map(|f| {
                self.vehicles
                    .iter()
                    .map(|v| Detection {
                        frame_index: f,
                        class_label: v.class_label,
                        score: (rng.gen_range(0.80..0.99f64) * 1000.0).round() / 1000.0,
                        bbox: v.bbox(f),
                    })
                    .collect()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub scenario: Scenario,
    pub detections: DetectionStream,
    pub lanes: LaneModel,
    pub truth: Vec<GroundTruthInterval>,
}

const MIN_CRASH_FRAME: u64 = 20;
const STOP_FRAMES: usize = 6;
const MAX_ATTEMPTS: usize = 100_000;

fn heading(deg: f64) -> Vec2 {
    Vec2::new(deg.to_radians().cos(), deg.to_radians().sin())
}

fn sign(rng: &mut ChaCha8Rng) -> f64 {
    if rng.gen_bool(0.5) {
        1.0
    } else {
        -1.0
    }
}

fn vehicle_size(rng: &mut ChaCha8Rng, class: VehicleClass) -> (f64, f64) {
    let w: f64 = match class {
        VehicleClass::Car => rng.gen_range(70.0..110.0),
        VehicleClass::Bus | VehicleClass::Truck => rng.gen_range(120.0..170.0),
    };
    let h = w * rng.gen_range(0.65..0.85);
    (w.round(), h.round())
}

fn road(rng: &mut ChaCha8Rng, width: f64, height: f64) -> LanesFile {
    let vp = Vec2::new(width * (0.5 + rng.gen_range(-0.05..0.05)), height * rng.gen_range(0.3..0.38));
    let drop = height - vp.y;
    let a_left: f64 = rng.gen_range(25.0..45.0f64);
    let a_right: f64 = rng.gen_range(25.0..45.0f64);
    LanesFile {
        left: [[vp.x, vp.y], [vp.x - drop / a_left.to_radians().tan(), height]],
        right: [[vp.x, vp.y], [vp.x + drop / a_right.to_radians().tan(), height]],
    }
}

/// Point between the lanes at a row in `[lo, hi)` of the frame height, at
/// least `margin` pixels from either line.
fn point_in_middle(rng: &mut ChaCha8Rng, lanes: &LaneModel, lo: f64, hi: f64, margin: f64) -> Option<Vec2> {
    let y = rng.gen_range(lo..hi) * lanes.frame_height as f64;
    let (xl, xr) = (lanes.left_line.x_at(y) + margin, lanes.right_line.x_at(y) - margin);
    (xl < xr).then(|| Vec2::new(rng.gen_range(xl..xr), y))
}

fn in_frame(b: &BoundingBox, width: usize, height: usize) -> bool {
    b.left() >= 0.0 && b.top() >= 0.0 && b.right() <= width as f64 && b.bottom() <= height as f64
}

/// Stays in frame and keeps every pair of centroids at least three times
/// the largest per-frame step apart, so nearest-centroid matching cannot swap ids.
fn paths_are_trackable(vehicles: &[VehicleScript], n_frames: u64, width: usize, height: usize) -> bool {
    let mut max_step: f64 = 1.0;
    for v in vehicles {
        for f in 1..n_frames {
            max_step = max_step.max(v.position(f).distance(v.position(f - 1)));
        }
    }
    (0..n_frames).all(|f| {
        vehicles.iter().all(|v| in_frame(&v.bbox(f), width, height))
            && vehicles.iter().enumerate().all(|(i, a)| {
                vehicles[i + 1..]
                    .iter()
                    .all(|b| a.position(f).distance(b.position(f)) >= 3.0 * max_step)
            })
    })
}

fn c1_at(a: &VehicleScript, b: &VehicleScript, f: u64, lanes: &LaneModel) -> bool {
    condition_c1(&a.bbox(f), &b.bbox(f), Some(lanes)).is_some()
}

/// Adds a vehicle that never overlaps any other, or leaves the set unchanged.
fn add_background_vehicle(rng: &mut ChaCha8Rng, vehicles: &mut Vec<VehicleScript>, n_frames: u64, lanes: &LaneModel) {
    for _ in 0..50 {
        let (w, h) = vehicle_size(rng, VehicleClass::Car);
        let x = rng.gen_range(0.1..0.9) * lanes.frame_width as f64;
        let y = rng.gen_range(0.55..0.9) * lanes.frame_height as f64;
        let v = heading(rng.gen_range(-100.0..-80.0)) * rng.gen_range(1.5..3.0);
        let candidate = VehicleScript::straight(VehicleClass::Car, w, h, Vec2::new(x, y), v);
        let clear = (0..n_frames).all(|f| vehicles.iter().all(|o| !boxes_overlap(&o.bbox(f), &candidate.bbox(f))));
        let mut all = vehicles.clone();
        all.push(candidate);
        if clear && paths_are_trackable(&all, n_frames, lanes.frame_width, lanes.frame_height) {
            *vehicles = all;
            return;
        }
    }
}

fn crash_vehicles(rng: &mut ChaCha8Rng, kind: ScenarioKind, lanes: &LaneModel) -> Option<(Vec<VehicleScript>, u64, u64)> {
    let p = point_in_middle(rng, lanes, 0.55, 0.75, 90.0)?;
    let theta: f64 = match kind {
        ScenarioKind::CrashCrossing => rng.gen_range(70.0..100.0),
        _ => rng.gen_range(25.0..45.0),
    };
    let ua = heading(rng.gen_range(70.0..110.0) * sign(rng));
    let ub = ua.rotated_deg(sign(rng) * theta);
    let (va, vb): (f64, f64) = match kind {
        ScenarioKind::CrashRearEnd => (rng.gen_range(4.5..6.0), rng.gen_range(2.0..3.5)),
        ScenarioKind::CrashCrossing => (rng.gen_range(3.5..5.5), rng.gen_range(3.5..5.5)),
        _ => (rng.gen_range(3.5..5.5), rng.gen_range(3.5..5.5)),
    };
    let class_a = if kind == ScenarioKind::OcclusionOverlap {
        if rng.gen_bool(0.5) {
            VehicleClass::Bus
        } else {
            VehicleClass::Truck
        }
    } else {
        VehicleClass::Car
    };
    let (wa, ha) = vehicle_size(rng, class_a);
    let (wb, hb) = vehicle_size(rng, VehicleClass::Car);
    let script = |class, w, h, u: Vec2, v: f64, t0: f64| VehicleScript::straight(class, w, h, p + u * (v * t0), u * v);
    let probe_a = script(class_a, wa, ha, ua, va, -200.0);
    let probe_b = script(VehicleClass::Car, wb, hb, ub, vb, -200.0);
    let onset = (0..=200).find(|&f| c1_at(&probe_a, &probe_b, f, lanes))?;
    let crash: u64 = rng.gen_range(MIN_CRASH_FRAME..=35);
    // shift the clock so the first qualifying frame is `crash`
    let t0 = onset as f64 - 200.0 - crash as f64;
    let mut a = script(class_a, wa, ha, ua, va, t0);
    let mut b = script(VehicleClass::Car, wb, hb, ub, vb, t0);
    if (0..=crash).find(|&f| c1_at(&a, &b, f, lanes)) != Some(crash) {
        return None;
    }
    let n_frames = crash + 36;
    for (script, u, v) in [(&mut a, ua, va), (&mut b, ub, vb)] {
        let turned = u.rotated_deg(sign(rng) * rng.gen_range(50.0..75.0));
        let steps: Vec<Vec2> = (1..=STOP_FRAMES)
            .map(|k| turned * (v * (1.0 - k as f64 / (STOP_FRAMES + 1) as f64)))
            .collect();
        script.continue_with(crash, &steps);
    }
    if !(crash..n_frames).all(|f| c1_at(&a, &b, f, lanes)) {
        return None;
    }
    Some((vec![a, b], crash, n_frames))
}

fn near_miss_vehicles(rng: &mut ChaCha8Rng, lanes: &LaneModel) -> Option<(Vec<VehicleScript>, u64)> {
    let q = point_in_middle(rng, lanes, 0.55, 0.7, 90.0)?;
    let ub = heading(rng.gen_range(80.0..100.0) * sign(rng));
    let ua = ub.rotated_deg(rng.gen_range(-2.0..2.0));
    let vb: f64 = rng.gen_range(1.5..2.0);
    let va = vb + rng.gen_range(1.5..2.5);
    let (wa, ha) = vehicle_size(rng, VehicleClass::Car);
    let (wb, hb) = vehicle_size(rng, VehicleClass::Car);
    let lateral = sign(rng) * rng.gen_range(0.4..0.7) * 0.5 * (wa + wb);
    let offset = Vec2::new(-ub.y, ub.x) * lateral;
    let scripts = |t0: f64| {
        (
            VehicleScript::straight(VehicleClass::Car, wa, ha, q + offset + ua * (va * t0), ua * va),
            VehicleScript::straight(VehicleClass::Car, wb, hb, q + ub * (vb * t0), ub * vb),
        )
    };
    let (pa, pb) = scripts(-200.0);
    let onset = (0..=200).find(|&f| c1_at(&pa, &pb, f, lanes))?;
    let first: u64 = rng.gen_range(MIN_CRASH_FRAME..=30);
    let (a, b) = scripts(onset as f64 - 200.0 - first as f64);
    let n_frames = first + 50;
    if (0..n_frames).find(|&f| c1_at(&a, &b, f, lanes)) != Some(first) {
        return None;
    }
    Some((vec![a, b], n_frames))
}

fn parallel_vehicles(rng: &mut ChaCha8Rng, lanes: &LaneModel) -> (Vec<VehicleScript>, u64) {
    let n = rng.gen_range(2..=3usize);
    let velocity = heading(rng.gen_range(-100.0..-80.0)) * rng.gen_range(1.5..4.0);
    let y0 = rng.gen_range(0.75..0.85) * lanes.frame_height as f64;
    let mut x = lanes.left_line.x_at(y0).max(0.0) + rng.gen_range(20.0..80.0);
    let mut vehicles = Vec::new();
    for _ in 0..n {
        let (w, h) = vehicle_size(rng, VehicleClass::Car);
        let cx = x + 0.5 * w;
        let cy = y0 + rng.gen_range(-20.0..20.0);
        vehicles.push(VehicleScript::straight(VehicleClass::Car, w, h, Vec2::new(cx, cy), velocity));
        x = cx + 0.5 * w + rng.gen_range(6.0..30.0);
    }
    (vehicles, 70)
}

/// Builds a scenario of the given kind. Output is a pure function of
/// `seed`, `kind` and the config's frame size, rates and windows.
pub fn generate(seed: u64, kind: ScenarioKind, config: &PipelineConfig) -> SynthOutput {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ kind.salt());
    let (width, height) = (config.frame_width as usize, config.frame_height as usize);
    for _ in 0..MAX_ATTEMPTS {
        let lanes_file = road(&mut rng, width as f64, height as f64);
        let Ok(lanes) = lanes_file.clone().into_model(width, height) else {
            continue;
        };
        let (mut vehicles, n_frames, crash_frame) = match kind {
            ScenarioKind::NearMissPass => match near_miss_vehicles(&mut rng, &lanes) {
                Some((v, n)) => (v, n, None),
                None => continue,
            },
            ScenarioKind::ParallelTraffic => {
                let (v, n) = parallel_vehicles(&mut rng, &lanes);
                (v, n, None)
            }
            _ => match crash_vehicles(&mut rng, kind, &lanes) {
                Some((v, crash, n)) => (v, n, Some(crash)),
                None => continue,
            },
        };
        if !paths_are_trackable(&vehicles, n_frames, width, height) {
            continue;
        }
        if kind == ScenarioKind::ParallelTraffic
            && (0..n_frames).any(|f| {
                vehicles
                    .iter()
                    .enumerate()
                    .any(|(i, a)| vehicles[i + 1..].iter().any(|b| boxes_overlap(&a.bbox(f), &b.bbox(f))))
            })
        {
            continue;
        }
        if kind.is_crash() && rng.gen_bool(0.5) {
            add_background_vehicle(&mut rng, &mut vehicles, n_frames, &lanes);
        }

        let flow = Vec2::new(rng.gen_range(-1.0..1.0f64).round(), rng.gen_range(1.0..4.0f64).round());
        let scenario = Scenario {
            seed,
            kind,
            n_frames,
            frame_width: width,
            frame_height: height,
            ego_speed_m_s: flow.norm() * config.fps * config.metres_per_pixel,
            ego_flow_px: flow,
            lanes: lanes_file,
            vehicles,
            crash_frame,
        };
        let truth = crash_frame
            .map(|c| vec![GroundTruthInterval::new(c, c + u64::from(config.accel_window_frames))])
            .unwrap_or_default();
        return SynthOutput {
            detections: scenario.detections(),
            lanes,
            truth,
            scenario,
        };
    }
    panic!("no valid {kind} scenario for seed {seed} in {MAX_ATTEMPTS} attempts; frame size too small?");
}

/// Writes `detections.jsonl`, `lanes.json`, `truth.json` and `scenario.json`
/// into `dir`, plus `frames/` when frames are given.
pub fn write_scenario(dir: impl AsRef<Path>, out: &SynthOutput, frames: Option<&[GrayFrame]>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_detections(dir.join("detections.jsonl"), &out.detections)?;
    write_lanes(dir.join("lanes.json"), &out.lanes)?;
    write_ground_truth(dir.join("truth.json"), &out.truth)?;
    let path = dir.join("scenario.json");
    let mut text = serde_json::to_string_pretty(&out.scenario).map_err(|e| Error::Format(e.to_string()))?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    if let Some(frames) = frames {
        write_frames(dir.join("frames"), frames)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::candidates::section_fractions;
    use crate::kinematics::intersection_angle;

    fn cfg() -> PipelineConfig {
        PipelineConfig::default()
    }

    #[test]
    fn kinds_parse() {
        for k in ScenarioKind::ALL {
            assert_eq!(k.as_str().parse::<ScenarioKind>().unwrap(), k);
        }
        assert!(matches!("crash".parse::<ScenarioKind>(), Err(Error::Usage(_))));
    }

    #[test]
    fn deterministic_in_seed() {
        let c = cfg();
        let a = generate(7, ScenarioKind::CrashCrossing, &c);
        let b = generate(7, ScenarioKind::CrashCrossing, &c);
        assert_eq!(a, b);
        let other = generate(8, ScenarioKind::CrashCrossing, &c);
        assert_ne!(a.scenario, other.scenario);
    }

    #[test]
    fn crash_kinds_meet_their_contract() {
        let c = cfg();
        for kind in [ScenarioKind::CrashRearEnd, ScenarioKind::CrashCrossing, ScenarioKind::OcclusionOverlap] {
            for seed in 0..6 {
                let out = generate(seed, kind, &c);
                let s = &out.scenario;
                let crash = s.crash_frame.expect("crash kinds define crash_frame");
                assert_eq!(out.truth, vec![GroundTruthInterval::new(crash, crash + 15)]);
                let (a, b) = (&s.vehicles[0], &s.vehicles[1]);
                let (ba, bb) = (a.bbox(crash), b.bbox(crash));
                assert!(boxes_overlap(&ba, &bb));
                let fa = section_fractions(&ba, &out.lanes);
                let fb = section_fractions(&bb, &out.lanes);
                assert!((0..3).any(|k| fa[k] >= 0.5 && fb[k] >= 0.5));
                assert!(!c1_at(a, b, crash - 1, &out.lanes));

                let theta = intersection_angle(a.segments[0].velocity, b.segments[0].velocity);
                assert!(theta > c.theta_low_deg && theta < c.theta_high_deg, "{kind} {seed}: {theta}");
                // speed lost per frame after the crash, in m/s per second
                let v0 = a.position(crash).distance(a.position(crash - 1));
                let v1 = a.position(crash + 1).distance(a.position(crash));
                let decel = (v0 - v1) * c.fps * c.metres_per_pixel * c.fps;
                assert!(decel >= c.alpha_ref_mps2, "{kind} {seed}: {decel}");
            }
        }
    }

    #[test]
    fn negative_kinds_have_no_truth() {
        let c = cfg();
        for kind in [ScenarioKind::NearMissPass, ScenarioKind::ParallelTraffic] {
            for seed in 0..6 {
                let out = generate(seed, kind, &c);
                assert!(out.truth.is_empty());
                assert!(out.scenario.crash_frame.is_none());
                for v in &out.scenario.vehicles {
                    assert_eq!(v.segments.len(), 1, "constant velocity");
                }
                let (a, b) = (&out.scenario.vehicles[0], &out.scenario.vehicles[1]);
                let theta = intersection_angle(a.segments[0].velocity, b.segments[0].velocity);
                assert!(theta <= 2.0);
            }
        }
    }

    #[test]
    fn outputs_pass_format_checks() {
        let c = cfg();
        let dir = tempfile::tempdir().unwrap();
        for (i, kind) in ScenarioKind::ALL.into_iter().enumerate() {
            let out = generate(3, kind, &c);
            let sub = dir.path().join(kind.as_str());
            write_scenario(&sub, &out, None).unwrap();
            let back = crate::frame_io::read_detections(sub.join("detections.jsonl"), c.min_detection_score).unwrap();
            assert_eq!(back, out.detections, "kind {i}");
            let lanes = crate::frame_io::read_lanes(sub.join("lanes.json"), c.frame_width as usize, c.frame_height as usize).unwrap();
            assert_eq!(lanes, out.lanes);
            let truth = crate::frame_io::read_ground_truth(sub.join("truth.json")).unwrap();
            assert_eq!(truth, out.truth);
            for frame in &out.detections {
                for d in frame {
                    assert!(d.bbox.is_valid() && in_frame(&d.bbox, c.frame_width as usize, c.frame_height as usize));
                }
            }
        }
    }
}
