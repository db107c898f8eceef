//! Metered beat grids from uninherited timing points.

use thiserror::Error;

use crate::osu_format::TimingPoint;

/// A generated beat stops this far short of the next segment's offset, so the
/// next segment's own first beat is never duplicated.
pub const SEGMENT_GUARD_S: f64 = 1e-3;

/// Upper bound on the number of beats in one grid.
pub const MAX_BEATS: usize = 2_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("no uninherited timing points")]
    NoUninheritedPoints,
    #[error("uninherited timing point at {time_ms} ms has non-positive beat length {beat_length_ms}")]
    NonPositiveBeatLength { time_ms: f64, beat_length_ms: f64 },
    #[error("end time must be positive, got {0}")]
    NonPositiveEnd(f64),
    #[error("grid would exceed {MAX_BEATS} beats")]
    TooManyBeats,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeatEvent {
    pub time_s: f64,
    /// 1-based position within the measure; 1 is a downbeat.
    pub index: u32,
    /// Index of the governing uninherited timing point.
    pub segment: usize,
}

impl BeatEvent {
    pub fn is_downbeat(&self) -> bool {
        self.index == 1
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BeatAnnotation {
    pub events: Vec<BeatEvent>,
    pub source_md5: String,
    pub beatmapset_id: i64,
}

impl BeatAnnotation {
    pub fn with_source(mut self, md5: impl Into<String>, beatmapset_id: i64) -> Self {
        self.source_md5 = md5.into();
        self.beatmapset_id = beatmapset_id;
        self
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.events.iter().map(|e| e.time_s).collect()
    }

    pub fn indices(&self) -> Vec<u32> {
        self.events.iter().map(|e| e.index).collect()
    }

    pub fn segment_count(&self) -> usize {
        let mut segs: Vec<usize> = self.events.iter().map(|e| e.segment).collect();
        segs.dedup();
        segs.len()
    }

    /// Beats per measure of each segment, in order, taken as the largest index
    /// seen in that segment.
    pub fn meters(&self) -> Vec<u32> {
        let mut out: Vec<(usize, u32)> = Vec::new();
        for e in &self.events {
            match out.last_mut() {
                Some((seg, m)) if *seg == e.segment => *m = (*m).max(e.index),
                _ => out.push((e.segment, e.index)),
            }
        }
        out.into_iter().map(|(_, m)| m).collect()
    }

    /// Spacing of the last two beats when they share a segment.
    pub fn final_beat_length(&self) -> Option<f64> {
        match self.events.as_slice() {
            [.., a, b] if a.segment == b.segment => Some(b.time_s - a.time_s),
            _ => None,
        }
    }
}

/// Builds the beat grid for the uninherited points in `timing_points`.
///
/// Each uninherited point starts a segment whose beats fall at
/// `offset + k * beat_length` up to (but not within [`SEGMENT_GUARD_S`] of) the
/// next uninherited offset or `end_time_s`. The measure restarts at index 1 at
/// every segment. Beats before zero are skipped by whole beats, keeping their
/// place in the measure.
pub fn generate_grid(timing_points: &[TimingPoint], end_time_s: f64) -> Result<BeatAnnotation, GridError> {
    if end_time_s.is_nan() || end_time_s <= 0.0 {
        return Err(GridError::NonPositiveEnd(end_time_s));
    }
    let mut points: Vec<&TimingPoint> = timing_points.iter().filter(|tp| tp.uninherited).collect();
    if points.is_empty() {
        return Err(GridError::NoUninheritedPoints);
    }
    points.sort_by(|a, b| a.time_ms.total_cmp(&b.time_ms));
    if let Some(tp) = points.iter().find(|tp| tp.beat_length_ms.is_nan() || tp.beat_length_ms <= 0.0) {
        return Err(GridError::NonPositiveBeatLength {
            time_ms: tp.time_ms,
            beat_length_ms: tp.beat_length_ms,
        });
    }

    let mut events = Vec::new();
    for (segment, tp) in points.iter().enumerate() {
        let offset = tp.time_ms / 1000.0;
        let beat = tp.beat_length_ms / 1000.0;
        let meter = tp.meter.max(1);
        let next = points
            .get(segment + 1)
            .map_or(f64::INFINITY, |n| n.time_ms / 1000.0);
        let limit = next.min(end_time_s) - SEGMENT_GUARD_S;

        let mut k: i64 = if offset < 0.0 { (-offset / beat).ceil() as i64 } else { 0 };
        while offset + k as f64 * beat < 0.0 {
            k += 1;
        }
        loop {
            let t = offset + k as f64 * beat;
            if t.is_nan() || t >= limit {
                break;
            }
            if events.len() >= MAX_BEATS {
                return Err(GridError::TooManyBeats);
            }
            events.push(BeatEvent {
                time_s: t,
                index: (k.rem_euclid(i64::from(meter))) as u32 + 1,
                segment,
            });
            k += 1;
        }
    }
    Ok(BeatAnnotation {
        events,
        ..Default::default()
    })
}

/// Times of all downbeats (index 1).
pub fn downbeats(annotation: &BeatAnnotation) -> Vec<f64> {
    annotation
        .events
        .iter()
        .filter(|e| e.is_downbeat())
        .map(|e| e.time_s)
        .collect()
}

/// Drops beats later than `last_hit_s + slack_s`.
pub fn truncate_to_effective_end(annotation: &BeatAnnotation, last_hit_s: f64, slack_s: f64) -> BeatAnnotation {
    let cutoff = last_hit_s + slack_s.max(0.0);
    BeatAnnotation {
        events: annotation
            .events
            .iter()
            .filter(|e| e.time_s <= cutoff)
            .copied()
            .collect(),
        source_md5: annotation.source_md5.clone(),
        beatmapset_id: annotation.beatmapset_id,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tp(offset_s: f64, beat_s: f64, meter: u32) -> TimingPoint {
        TimingPoint::uninherited(offset_s * 1000.0, beat_s * 1000.0, meter)
    }

    fn assert_times(actual: &[f64], expected: &[f64]) {
        assert_eq!(actual.len(), expected.len(), "{actual:?} vs {expected:?}");
        for (a, e) in actual.iter().zip(expected) {
            assert!((a - e).abs() < 1e-9, "{actual:?} vs {expected:?}");
        }
    }

    #[test]
    fn single_segment() {
        let g = generate_grid(&[tp(1.0, 0.5, 4)], 4.2).unwrap();
        assert_times(&g.times(), &[1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0]);
        assert_eq!(g.indices(), vec![1, 2, 3, 4, 1, 2, 3]);
        assert_eq!(downbeats(&g), vec![1.0, 3.0]);
    }

    #[test]
    fn two_segments() {
        let g = generate_grid(&[tp(0.0, 0.5, 4), tp(2.25, 0.6, 3)], 4.0).unwrap();
        assert_times(&g.times(), &[0.0, 0.5, 1.0, 1.5, 2.0, 2.25, 2.85, 3.45]);
        assert_eq!(g.indices(), vec![1, 2, 3, 4, 1, 1, 2, 3]);
        let segs: Vec<usize> = g.events.iter().map(|e| e.segment).collect();
        assert_eq!(segs, vec![0, 0, 0, 0, 0, 1, 1, 1]);
        assert_eq!(g.meters(), vec![4, 3]);
    }

    #[test]
    fn negative_offset() {
        let g = generate_grid(&[tp(-0.25, 0.5, 4)], 1.3).unwrap();
        assert_times(&g.times(), &[0.25, 0.75, 1.25]);
        assert_eq!(g.indices(), vec![2, 3, 4]);
    }

    #[test]
    fn inherited_points_ignored_and_errors() {
        let pts = [tp(0.0, 0.5, 4), TimingPoint::inherited(1000.0, -50.0)];
        assert_eq!(generate_grid(&pts, 2.0).unwrap().len(), 4);
        assert_eq!(
            generate_grid(&[TimingPoint::inherited(0.0, -100.0)], 2.0),
            Err(GridError::NoUninheritedPoints)
        );
        let mut bad = tp(0.0, 0.5, 4);
        bad.beat_length_ms = 0.0;
        assert!(matches!(
            generate_grid(&[bad], 2.0),
            Err(GridError::NonPositiveBeatLength { .. })
        ));
        assert!(matches!(generate_grid(&[tp(0.0, 0.5, 4)], 0.0), Err(GridError::NonPositiveEnd(_))));
    }

    #[test]
    fn meter_one_all_downbeats() {
        let g = generate_grid(&[tp(0.0, 0.5, 1)], 2.0).unwrap();
        assert_eq!(downbeats(&g), g.times());
        assert!(downbeats(&BeatAnnotation::default()).is_empty());
    }

    #[test]
    fn truncation() {
        let g = generate_grid(&[tp(0.0, 0.5, 4)], 4.0).unwrap();
        let t = truncate_to_effective_end(&g, 2.6, 0.5);
        assert_eq!(t.times().last(), Some(&3.0));
        assert!(t.times().iter().all(|&x| x <= 3.1));

        assert_eq!(truncate_to_effective_end(&g, 10.0, 0.5), g);

        let t = truncate_to_effective_end(&g, 2.5, 0.0);
        assert_eq!(t.times().last(), Some(&2.5));
        assert_eq!(g.final_beat_length(), Some(0.5));
    }
}
