//! Nearest-centroid multi-object tracker.
//!
//! Each frame, existing tracks and new detections are paired greedily by
//! ascending centroid distance. Unpaired detections start new tracks;
//! tracks unseen for `deregister_after_frames` consecutive frames are dropped.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::frame_io::{BoundingBox, Detection, VehicleClass};
use crate::geometry::Vec2;

pub type TrackId = u64;

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: TrackId,
    pub class_label: VehicleClass,
    pub centroid_history: Vec<(u64, Vec2)>,
    pub box_history: Vec<(u64, BoundingBox)>,
    /// Consecutive frames without a matched detection.
    pub missing_frames: u32,
    pub scaled_speed_history: Vec<(u64, f64)>,
    pub absolute_speed_history: Vec<(u64, f64)>,
    /// Latest stored unit direction.
    pub direction: Option<Vec2>,
    /// Every stored direction with the frame it was computed at.
    pub direction_history: Vec<(u64, Vec2)>,
}

impl Track {
    fn new(id: TrackId, det: &Detection) -> Self {
        Track {
            id,
            class_label: det.class_label,
            centroid_history: vec![(det.frame_index, det.bbox.centroid())],
            box_history: vec![(det.frame_index, det.bbox)],
            missing_frames: 0,
            scaled_speed_history: Vec::new(),
            absolute_speed_history: Vec::new(),
            direction: None,
            direction_history: Vec::new(),
        }
    }

    pub fn last_centroid(&self) -> Vec2 {
        self.centroid_history.last().map(|&(_, c)| c).unwrap_or_default()
    }

    pub fn last_frame(&self) -> Option<u64> {
        self.centroid_history.last().map(|&(f, _)| f)
    }

    pub fn box_at(&self, frame: u64) -> Option<&BoundingBox> {
        self.box_history
            .binary_search_by_key(&frame, |&(f, _)| f)
            .ok()
            .map(|i| &self.box_history[i].1)
    }

    /// Stored direction in effect at `frame` (the latest one computed at or before it).
    pub fn direction_at(&self, frame: u64) -> Option<Vec2> {
        latest_at_or_before(&self.direction_history, frame).map(|&(_, d)| d)
    }

    /// Records a unit direction computed at `frame`.
    pub fn store_direction(&mut self, frame: u64, direction: Vec2) -> Result<()> {
        if (direction.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::Invariant(format!(
                "track {}: stored direction ({}, {}) is not unit length",
                self.id, direction.x, direction.y
            )));
        }
        self.direction = Some(direction);
        self.direction_history.push((frame, direction));
        Ok(())
    }
}

pub(crate) fn latest_at_or_before<T>(history: &[(u64, T)], frame: u64) -> Option<&(u64, T)> {
    let idx = history.partition_point(|&(f, _)| f <= frame);
    idx.checked_sub(1).map(|i| &history[i])
}

/// Centroid pair used for displacement over a lookback interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CentroidPair {
    pub c1: (u64, Vec2),
    pub c2: (u64, Vec2),
}

impl CentroidPair {
    pub fn displacement(&self) -> Vec2 {
        self.c2.1 - self.c1.1
    }

    pub fn elapsed_frames(&self) -> u64 {
        self.c2.0 - self.c1.0
    }
}

/// `c2` is the latest centroid at or before `frame_index`; `c1` the latest
/// at or before `frame_index - lookback`, falling back to the oldest entry
/// when the history does not reach that far.
pub fn centroid_at(track: &Track, frame_index: u64, lookback: u64) -> Result<CentroidPair> {
    let history = &track.centroid_history;
    let Some(&oldest) = history.first() else {
        return Err(Error::Lookup(format!("track {} has no history", track.id)));
    };
    let &c2 = latest_at_or_before(history, frame_index).ok_or_else(|| {
        Error::Lookup(format!(
            "track {} has no centroid at or before frame {frame_index}",
            track.id
        ))
    })?;
    let c1 = frame_index
        .checked_sub(lookback)
        .and_then(|target| latest_at_or_before(history, target).copied())
        .unwrap_or(oldest);
    Ok(CentroidPair { c1, c2 })
}

#[derive(Debug, Clone)]
pub struct TrackerConfig {
    pub max_match_distance_px: f64,
    pub deregister_after_frames: u32,
}

#[derive(Debug, Default, Clone, PartialEq)]
pub struct TrackerUpdate {
    /// Track id assigned to each input detection, in input order.
    pub assignments: Vec<TrackId>,
    pub registered: Vec<TrackId>,
    /// Tracks removed in this update, with their full histories.
    pub deregistered: Vec<Track>,
}

#[derive(Debug, Clone)]
pub struct CentroidTracker {
    config: TrackerConfig,
    tracks: BTreeMap<TrackId, Track>,
    next_id: TrackId,
    last_frame: Option<u64>,
}

impl CentroidTracker {
    pub fn new(config: TrackerConfig) -> Self {
        CentroidTracker {
            config,
            tracks: BTreeMap::new(),
            next_id: 0,
            last_frame: None,
        }
    }

    pub fn tracks(&self) -> impl Iterator<Item = &Track> {
        self.tracks.values()
    }

    pub fn track(&self, id: TrackId) -> Option<&Track> {
        self.tracks.get(&id)
    }

    pub fn track_mut(&mut self, id: TrackId) -> Option<&mut Track> {
        self.tracks.get_mut(&id)
    }

    pub fn len(&self) -> usize {
        self.tracks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty()
    }

    /// Removes and returns every live track.
    pub fn drain(&mut self) -> Vec<Track> {
        std::mem::take(&mut self.tracks).into_values().collect()
    }

    pub fn update(&mut self, detections: &[Detection], frame_index: u64) -> Result<TrackerUpdate> {
        if let Some(last) = self.last_frame {
            if frame_index <= last {
                return Err(Error::Usage(format!(
                    "tracker update for frame {frame_index} after frame {last}"
                )));
            }
        }
        if let Some(d) = detections.iter().find(|d| d.frame_index != frame_index) {
            return Err(Error::Usage(format!(
                "detection for frame {} passed to update of frame {frame_index}",
                d.frame_index
            )));
        }
        self.last_frame = Some(frame_index);

        let gate = self.config.max_match_distance_px;
        let mut candidates: Vec<(f64, TrackId, usize)> = Vec::new();
        for track in self.tracks.values() {
            let c = track.last_centroid();
            for (j, det) in detections.iter().enumerate() {
                let d = c.distance(det.bbox.centroid());
                if d <= gate {
                    candidates.push((d, track.id, j));
                }
            }
        }
        candidates.sort_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });

        let mut det_track: Vec<Option<TrackId>> = vec![None; detections.len()];
        let mut matched_tracks: BTreeMap<TrackId, usize> = BTreeMap::new();
        for (_, id, j) in candidates {
            if det_track[j].is_some() || matched_tracks.contains_key(&id) {
                continue;
            }
            det_track[j] = Some(id);
            matched_tracks.insert(id, j);
        }

        let mut update = TrackerUpdate::default();
        let mut removed = Vec::new();
        for (id, track) in self.tracks.iter_mut() {
            match matched_tracks.get(id) {
                Some(&j) => {
                    let det = &detections[j];
                    track.centroid_history.push((frame_index, det.bbox.centroid()));
                    track.box_history.push((frame_index, det.bbox));
                    track.class_label = det.class_label;
                    track.missing_frames = 0;
                }
                None => {
                    track.missing_frames += 1;
                    if track.missing_frames >= self.config.deregister_after_frames {
                        removed.push(*id);
                    }
                }
            }
        }
        for id in removed {
            if let Some(t) = self.tracks.remove(&id) {
                update.deregistered.push(t);
            }
        }

        for (j, det) in detections.iter().enumerate() {
            let id = match det_track[j] {
                Some(id) => id,
                None => {
                    let id = self.next_id;
                    self.next_id += 1;
                    self.tracks.insert(id, Track::new(id, det));
                    update.registered.push(id);
                    id
                }
            };
            update.assignments.push(id);
        }
        Ok(update)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(frame: u64, cx: f64, cy: f64) -> Detection {
        Detection {
            frame_index: frame,
            class_label: VehicleClass::Car,
            score: 0.9,
            bbox: BoundingBox::new(cx, cy, 20.0, 20.0),
        }
    }

    fn tracker() -> CentroidTracker {
        CentroidTracker::new(TrackerConfig {
            max_match_distance_px: 200.0,
            deregister_after_frames: 15,
        })
    }

    fn total_distance(points: &[(f64, f64)], dets: &[(f64, f64)], perm: &[usize]) -> f64 {
        perm.iter()
            .enumerate()
            .map(|(i, &j)| Vec2::from(points[i]).distance(Vec2::from(dets[j])))
            .sum()
    }

    #[test]
    fn two_tracks_follow_nearest() {
        let mut t = tracker();
        let first = t.update(&[det(0, 0.0, 0.0), det(0, 100.0, 100.0)], 0).unwrap();
        assert_eq!(first.registered, vec![0, 1]);
        let up = t.update(&[det(1, 5.0, 5.0), det(1, 98.0, 103.0)], 1).unwrap();
        assert_eq!(up.assignments, vec![0, 1]);
        assert!(up.registered.is_empty());
        // brute force over both pairings agrees
        let tracks = [(0.0, 0.0), (100.0, 100.0)];
        let dets = [(5.0, 5.0), (98.0, 103.0)];
        assert!(total_distance(&tracks, &dets, &[0, 1]) < total_distance(&tracks, &dets, &[1, 0]));
    }

    #[test]
    fn registers_fresh_ids() {
        let mut t = tracker();
        let up = t
            .update(&[det(0, 0.0, 0.0), det(0, 300.0, 0.0), det(0, 600.0, 0.0)], 0)
            .unwrap();
        assert_eq!(up.registered, vec![0, 1, 2]);
        assert_eq!(t.len(), 3);
    }

    #[test]
    fn deregisters_on_fifteenth_miss() {
        let mut t = tracker();
        t.update(&[det(0, 0.0, 0.0)], 0).unwrap();
        for f in 1..15 {
            let up = t.update(&[], f).unwrap();
            assert!(up.deregistered.is_empty(), "frame {f}");
            assert_eq!(t.track(0).unwrap().missing_frames, f as u32);
        }
        let up = t.update(&[], 15).unwrap();
        assert_eq!(up.deregistered.len(), 1);
        assert!(t.is_empty());
    }

    #[test]
    fn ids_never_reused() {
        let mut t = CentroidTracker::new(TrackerConfig {
            max_match_distance_px: 10.0,
            deregister_after_frames: 1,
        });
        t.update(&[det(0, 0.0, 0.0)], 0).unwrap();
        t.update(&[], 1).unwrap();
        let up = t.update(&[det(2, 0.0, 0.0)], 2).unwrap();
        assert_eq!(up.registered, vec![1]);
    }

    #[test]
    fn duplicate_detections_tracked_separately() {
        let mut t = tracker();
        let up = t.update(&[det(0, 50.0, 50.0), det(0, 50.0, 50.0)], 0).unwrap();
        assert_eq!(up.registered, vec![0, 1]);
        let up = t.update(&[det(1, 51.0, 50.0), det(1, 51.0, 50.0)], 1).unwrap();
        assert_eq!(up.assignments, vec![0, 1]);
    }

    #[test]
    fn tie_goes_to_lower_track_id() {
        let mut t = tracker();
        t.update(&[det(0, 0.0, 0.0), det(0, 20.0, 0.0)], 0).unwrap();
        let up = t.update(&[det(1, 10.0, 0.0)], 1).unwrap();
        assert_eq!(up.assignments, vec![0]);
    }

    #[test]
    fn gate_prevents_teleport() {
        let mut t = tracker();
        t.update(&[det(0, 0.0, 0.0)], 0).unwrap();
        let up = t.update(&[det(1, 500.0, 0.0)], 1).unwrap();
        assert_eq!(up.registered, vec![1]);
    }

    #[test]
    fn frame_order_enforced() {
        let mut t = tracker();
        t.update(&[], 5).unwrap();
        assert!(matches!(t.update(&[], 5), Err(Error::Usage(_))));
        assert!(matches!(t.update(&[], 3), Err(Error::Usage(_))));
        assert!(matches!(t.update(&[det(2, 0.0, 0.0)], 6), Err(Error::Usage(_))));
    }

    fn track_with(frames: impl IntoIterator<Item = u64>) -> Track {
        let mut frames = frames.into_iter();
        let f0 = frames.next().unwrap();
        let mut t = Track::new(0, &det(f0, f0 as f64, 0.0));
        for f in frames {
            t.centroid_history.push((f, Vec2::new(f as f64, 0.0)));
        }
        t
    }

    #[test]
    fn centroid_lookup_rules() {
        let t = track_with(0..=10);
        let p = centroid_at(&t, 10, 5).unwrap();
        assert_eq!((p.c1.0, p.c2.0), (5, 10));

        let t = track_with(8..=10);
        let p = centroid_at(&t, 10, 5).unwrap();
        assert_eq!((p.c1.0, p.c2.0), (8, 10));

        let t = track_with(0..=4);
        let p = centroid_at(&t, 7, 5).unwrap();
        assert_eq!(p.c2.0, 4);
        assert_eq!(p.c2.1, Vec2::new(4.0, 0.0));
    }

    #[test]
    fn empty_history_is_lookup_error() {
        let mut t = track_with([0]);
        t.centroid_history.clear();
        assert!(matches!(centroid_at(&t, 3, 5), Err(Error::Lookup(_))));
    }

    #[test]
    fn non_unit_direction_rejected() {
        let mut t = track_with([0]);
        assert!(t.store_direction(0, Vec2::new(1.0, 1.0)).is_err());
        t.store_direction(0, Vec2::new(0.6, 0.8)).unwrap();
        assert_eq!(t.direction_at(3), Some(Vec2::new(0.6, 0.8)));
    }
}
