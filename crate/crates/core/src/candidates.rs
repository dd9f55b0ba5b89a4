//! Overlap condition, lane sections, and candidate episodes.
//!
//! A pair of tracks is a candidate while their boxes overlap and both boxes
//! have at least half of their road-contact edge in the same lane section.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame_io::BoundingBox;
use crate::geometry::Vec2;
use crate::tracker::TrackId;

/// Centre-distance overlap test on both axes.
///
/// The vertical clause compares the centre *difference*; a sum of the two
/// centre ordinates would depend on where the pair sits in the image.
pub fn boxes_overlap(a: &BoundingBox, b: &BoundingBox) -> bool {
    2.0 * (a.cx - b.cx).abs() < a.width + b.width
        && 2.0 * (a.cy - b.cy).abs() < a.height + b.height
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSegment {
    pub a: Vec2,
    pub b: Vec2,
}

impl LineSegment {
    pub fn new(a: Vec2, b: Vec2) -> Self {
        LineSegment { a, b }
    }

    /// x of the infinite line through the segment at row `y`.
    pub fn x_at(&self, y: f64) -> f64 {
        self.a.x + (y - self.a.y) * (self.b.x - self.a.x) / (self.b.y - self.a.y)
    }

    /// Angle of the line against the image x axis in degrees, in (-90, 90].
    /// Negative for lines that rise to the right (y down).
    pub fn angle_deg(&self) -> f64 {
        let d = self.b - self.a;
        let mut deg = d.y.atan2(d.x).to_degrees();
        if deg <= -90.0 {
            deg += 180.0;
        } else if deg > 90.0 {
            deg -= 180.0;
        }
        deg
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Section {
    S1,
    S2,
    S3,
}

/// Two lane demarcations, fixed for the whole sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct LaneModel {
    pub left_line: LineSegment,
    pub right_line: LineSegment,
    pub frame_width: usize,
    pub frame_height: usize,
}

impl LaneModel {
    pub fn new(
        left_line: LineSegment,
        right_line: LineSegment,
        frame_width: usize,
        frame_height: usize,
    ) -> Result<Self> {
        for (field, line) in [("left", &left_line), ("right", &right_line)] {
            let finite = [line.a.x, line.a.y, line.b.x, line.b.y]
                .iter()
                .all(|v| v.is_finite());
            if !finite || line.a.y == line.b.y {
                return Err(Error::validation(
                    field,
                    "lane line must be finite and not horizontal",
                ));
            }
        }
        let bottom = frame_height as f64;
        let (xl, xr) = (left_line.x_at(bottom), right_line.x_at(bottom));
        let (xl_top, xr_top) = (left_line.x_at(0.0), right_line.x_at(0.0));
        if xl == xr && xl_top == xr_top {
            return Err(Error::validation("right", "lane lines are identical"));
        }
        if xl >= xr {
            return Err(Error::validation(
                "left",
                format!("left line x {xl} is not left of right line x {xr} at the bottom row"),
            ));
        }
        Ok(LaneModel {
            left_line,
            right_line,
            frame_width,
            frame_height,
        })
    }

    /// Section boundaries at row `y`. Above the lines' crossing point the
    /// middle section collapses to a single boundary.
    fn boundaries_at(&self, y: f64) -> (f64, f64) {
        let xl = self.left_line.x_at(y);
        let xr = self.right_line.x_at(y);
        if xl <= xr {
            (xl, xr)
        } else {
            let mid = 0.5 * (xl + xr);
            (mid, mid)
        }
    }
}

/// Length shares of the box's bottom edge in S1, S2, S3.
///
/// A point exactly on a lane line belongs to the section on its right.
pub fn section_fractions(bbox: &BoundingBox, lanes: &LaneModel) -> [f64; 3] {
    let y = bbox.bottom();
    let (xl, xr) = lanes.boundaries_at(y);
    let (l, r) = (bbox.left(), bbox.right());
    let w = r - l;
    if !(w > 0.0) {
        let x = bbox.cx;
        return if x < xl {
            [1.0, 0.0, 0.0]
        } else if x < xr {
            [0.0, 1.0, 0.0]
        } else {
            [0.0, 0.0, 1.0]
        };
    }
    let f1 = ((xl - l) / w).clamp(0.0, 1.0);
    let f3 = ((r - xr) / w).clamp(0.0, 1.0);
    let f2 = (1.0 - f1 - f3).max(0.0);
    [f1, f2, f3]
}

/// The section holding at least half of both boxes, if any. With no lane
/// model the whole road is one section, reported as S2.
pub fn common_section(a: &BoundingBox, b: &BoundingBox, lanes: Option<&LaneModel>) -> Option<Section> {
    let Some(lanes) = lanes else {
        return Some(Section::S2);
    };
    let fa = section_fractions(a, lanes);
    let fb = section_fractions(b, lanes);
    let mut best: Option<(f64, Section)> = None;
    for (i, s) in [Section::S1, Section::S2, Section::S3].into_iter().enumerate() {
        let shared = fa[i].min(fb[i]);
        if shared >= 0.5 && best.is_none_or(|(v, _)| shared > v) {
            best = Some((shared, s));
        }
    }
    best.map(|(_, s)| s)
}

/// Overlap condition C1 for one pair of boxes.
pub fn condition_c1(a: &BoundingBox, b: &BoundingBox, lanes: Option<&LaneModel>) -> Option<Section> {
    if boxes_overlap(a, b) {
        common_section(a, b, lanes)
    } else {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateEpisode {
    /// Ordered low id first; the pair is unordered.
    pub track_ids: (TrackId, TrackId),
    pub start_frame: u64,
    pub end_frame: u64,
    pub common_section: Section,
    pub closed: bool,
}

#[derive(Debug, Default, Clone, PartialEq)]
pub struct CandidateUpdate {
    pub opened: Vec<(TrackId, TrackId)>,
    pub extended: Vec<(TrackId, TrackId)>,
    pub closed: Vec<CandidateEpisode>,
}

/// Open episodes keyed by track pair.
#[derive(Debug, Default, Clone)]
pub struct EpisodeTable {
    open: BTreeMap<(TrackId, TrackId), CandidateEpisode>,
    last_frame: Option<u64>,
}

fn pair(a: TrackId, b: TrackId) -> (TrackId, TrackId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl EpisodeTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn open_episodes(&self) -> impl Iterator<Item = &CandidateEpisode> {
        self.open.values()
    }

    /// Advances the table by one frame. `observed` holds the boxes of tracks
    /// detected in `frame_index`; a pair involving any other track fails C1.
    pub fn update(
        &mut self,
        observed: &[(TrackId, BoundingBox)],
        lanes: Option<&LaneModel>,
        frame_index: u64,
    ) -> Result<CandidateUpdate> {
        if self.last_frame.is_some_and(|f| frame_index <= f) {
            return Err(Error::Usage(format!(
                "candidate update for frame {frame_index} after frame {}",
                self.last_frame.unwrap_or_default()
            )));
        }
        self.last_frame = Some(frame_index);

        let mut holding: BTreeMap<(TrackId, TrackId), Section> = BTreeMap::new();
        for (i, (ida, a)) in observed.iter().enumerate() {
            for (idb, b) in &observed[i + 1..] {
                if let Some(s) = condition_c1(a, b, lanes) {
                    holding.insert(pair(*ida, *idb), s);
                }
            }
        }

        let mut update = CandidateUpdate::default();
        let keys: Vec<_> = self.open.keys().copied().collect();
        for key in keys {
            if holding.remove(&key).is_some() {
                if let Some(ep) = self.open.get_mut(&key) {
                    ep.end_frame = frame_index;
                }
                update.extended.push(key);
            } else if let Some(mut ep) = self.open.remove(&key) {
                ep.closed = true;
                update.closed.push(ep);
            }
        }
        for (key, section) in holding {
            self.open.insert(
                key,
                CandidateEpisode {
                    track_ids: key,
                    start_frame: frame_index,
                    end_frame: frame_index,
                    common_section: section,
                    closed: false,
                },
            );
            update.opened.push(key);
        }
        Ok(update)
    }

    /// Closes every open episode, e.g. at the end of a stream.
    pub fn close_all(&mut self) -> Vec<CandidateEpisode> {
        std::mem::take(&mut self.open)
            .into_values()
            .map(|mut ep| {
                ep.closed = true;
                ep
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vertical_lanes() -> LaneModel {
        LaneModel::new(
            LineSegment::new(Vec2::new(200.0, 0.0), Vec2::new(200.0, 720.0)),
            LineSegment::new(Vec2::new(400.0, 0.0), Vec2::new(400.0, 720.0)),
            1280,
            720,
        )
        .unwrap()
    }

    /// Box whose bottom edge spans [x0, x1] at row 500.
    fn edge_box(x0: f64, x1: f64) -> BoundingBox {
        BoundingBox::new(0.5 * (x0 + x1), 480.0, x1 - x0, 40.0)
    }

    #[test]
    fn overlap_examples() {
        let a = BoundingBox::new(10.0, 10.0, 4.0, 4.0);
        assert!(boxes_overlap(&a, &a));
        assert!(!boxes_overlap(
            &BoundingBox::new(0.0, 0.0, 4.0, 4.0),
            &BoundingBox::new(10.0, 0.0, 4.0, 4.0)
        ));
        // 16 < 18 and 8 < 12
        assert!(boxes_overlap(
            &BoundingBox::new(0.0, 0.0, 10.0, 6.0),
            &BoundingBox::new(8.0, 4.0, 8.0, 6.0)
        ));
    }

    #[test]
    fn overlap_is_position_independent_vertically() {
        // a printed `|a.y + b.y|` would reject this pair far from the origin
        let a = BoundingBox::new(500.0, 600.0, 40.0, 40.0);
        let b = BoundingBox::new(510.0, 610.0, 40.0, 40.0);
        assert!(boxes_overlap(&a, &b));
    }

    #[test]
    fn fraction_examples() {
        let lanes = vertical_lanes();
        assert_eq!(section_fractions(&edge_box(60.0, 140.0), &lanes), [1.0, 0.0, 0.0]);
        assert_eq!(section_fractions(&edge_box(180.0, 260.0), &lanes), [0.25, 0.75, 0.0]);
        assert_eq!(section_fractions(&edge_box(400.0, 480.0), &lanes), [0.0, 0.0, 1.0]);
    }

    #[test]
    fn degenerate_box_on_line_goes_right() {
        let lanes = vertical_lanes();
        let b = BoundingBox::new(200.0, 480.0, 0.0, 40.0);
        assert_eq!(section_fractions(&b, &lanes), [0.0, 1.0, 0.0]);
    }

    #[test]
    fn converging_lines_above_crossing() {
        let lanes = LaneModel::new(
            LineSegment::new(Vec2::new(100.0, 720.0), Vec2::new(640.0, 360.0)),
            LineSegment::new(Vec2::new(1180.0, 720.0), Vec2::new(640.0, 360.0)),
            1280,
            720,
        )
        .unwrap();
        let above = BoundingBox::new(600.0, 200.0, 40.0, 20.0);
        let f = section_fractions(&above, &lanes);
        assert!((f.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(f[1], 0.0);
        assert!((f[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn episode_opens_in_common_section() {
        let lanes = vertical_lanes();
        let mut table = EpisodeTable::new();
        let a = BoundingBox::new(500.0, 480.0, 60.0, 40.0);
        let b = BoundingBox::new(520.0, 490.0, 60.0, 40.0);
        let up = table.update(&[(0, a), (1, b)], Some(&lanes), 0).unwrap();
        assert_eq!(up.opened, vec![(0, 1)]);
        let ep = table.open_episodes().next().unwrap();
        assert_eq!(ep.common_section, Section::S3);
    }

    #[test]
    fn no_episode_without_common_majority() {
        let lanes = vertical_lanes();
        let mut table = EpisodeTable::new();
        // a: 60% S2 / 40% S3; b: 40% S2 / 60% S3
        let a = BoundingBox::new(380.0 + 10.0, 480.0, 100.0, 40.0);
        let b = BoundingBox::new(410.0, 480.0, 100.0, 40.0);
        let fa = section_fractions(&a, &lanes);
        let fb = section_fractions(&b, &lanes);
        assert!((fa[1] - 0.6).abs() < 1e-12 && (fb[2] - 0.6).abs() < 1e-12);
        assert!(boxes_overlap(&a, &b));
        let up = table.update(&[(0, a), (1, b)], Some(&lanes), 0).unwrap();
        assert!(up.opened.is_empty());
    }

    #[test]
    fn episode_closes_on_first_failing_frame() {
        let mut table = EpisodeTable::new();
        let a = BoundingBox::new(100.0, 100.0, 40.0, 40.0);
        let near = BoundingBox::new(110.0, 100.0, 40.0, 40.0);
        let far = BoundingBox::new(400.0, 100.0, 40.0, 40.0);
        for f in 40..=46 {
            let up = table.update(&[(3, a), (7, near)], None, f).unwrap();
            assert!(up.closed.is_empty());
        }
        let up = table.update(&[(3, a), (7, far)], None, 47).unwrap();
        assert_eq!(up.closed.len(), 1);
        let ep = up.closed[0];
        assert_eq!((ep.start_frame, ep.end_frame), (40, 46));
        assert_eq!(ep.track_ids, (3, 7));
        assert!(ep.closed);
    }

    #[test]
    fn episode_closes_when_track_disappears() {
        let mut table = EpisodeTable::new();
        let a = BoundingBox::new(100.0, 100.0, 40.0, 40.0);
        table.update(&[(1, a), (2, a)], None, 0).unwrap();
        let up = table.update(&[(1, a)], None, 1).unwrap();
        assert_eq!(up.closed.len(), 1);
        assert_eq!(up.closed[0].end_frame, 0);
    }

    #[test]
    fn one_open_episode_per_pair() {
        let mut table = EpisodeTable::new();
        let a = BoundingBox::new(100.0, 100.0, 40.0, 40.0);
        for f in 0..5 {
            table.update(&[(2, a), (1, a), (3, a)], None, f).unwrap();
            let keys: Vec<_> = table.open_episodes().map(|e| e.track_ids).collect();
            assert_eq!(keys, vec![(1, 2), (1, 3), (2, 3)]);
        }
    }

    fn arb_box() -> impl Strategy<Value = BoundingBox> {
        (-500.0f64..500.0, -500.0f64..500.0, 0.1f64..300.0, 0.1f64..300.0)
            .prop_map(|(cx, cy, w, h)| BoundingBox::new(cx, cy, w, h))
    }

    fn intervals_intersect(lo1: f64, hi1: f64, lo2: f64, hi2: f64) -> bool {
        lo1 < hi2 && lo2 < hi1
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]
        #[test]
        fn overlap_symmetric_and_matches_interval_test(a in arb_box(), b in arb_box()) {
            prop_assert_eq!(boxes_overlap(&a, &b), boxes_overlap(&b, &a));
            let oracle = intervals_intersect(a.left(), a.right(), b.left(), b.right())
                && intervals_intersect(a.top(), a.bottom(), b.top(), b.bottom());
            // exact ties at touching edges can differ by rounding
            let touching = ((a.cx - b.cx).abs() * 2.0 - (a.width + b.width)).abs() < 1e-9
                || ((a.cy - b.cy).abs() * 2.0 - (a.height + b.height)).abs() < 1e-9;
            if !touching {
                prop_assert_eq!(boxes_overlap(&a, &b), oracle);
            }
        }
    }

    proptest! {
        #[test]
        fn fractions_partition_unity(b in arb_box(), xl in 0.0f64..600.0, gap in 1.0f64..600.0, tilt in -2.0f64..2.0) {
            let lanes = LaneModel::new(
                LineSegment::new(Vec2::new(xl, 720.0), Vec2::new(xl + tilt * 300.0, 420.0)),
                LineSegment::new(Vec2::new(xl + gap, 720.0), Vec2::new(xl + gap - tilt * 300.0, 420.0)),
                1280,
                720,
            ).unwrap();
            let f = section_fractions(&b, &lanes);
            prop_assert!(f.iter().all(|&v| v >= 0.0));
            prop_assert!((f.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
