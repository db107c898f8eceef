//! Three-way split of beatmaps by the spacing of their uninherited timing points.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::osu_format::TimingPoint;

pub const DEFAULT_THRESHOLD_S: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PartitionError {
    #[error("no uninherited timing points")]
    NoUninheritedPoints,
    #[error("threshold must be positive, got {0}")]
    InvalidThreshold(f64),
    #[error("unknown subset label {0:?}")]
    UnknownLabel(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubsetKind {
    #[serde(rename = "single")]
    SingleTiming,
    MultiWide,
    MultiNarrow,
}

impl SubsetKind {
    /// Reporting order.
    pub const ALL: [SubsetKind; 3] = [SubsetKind::SingleTiming, SubsetKind::MultiWide, SubsetKind::MultiNarrow];

    pub fn label(self) -> &'static str {
        match self {
            SubsetKind::SingleTiming => "single",
            SubsetKind::MultiWide => "multi_wide",
            SubsetKind::MultiNarrow => "multi_narrow",
        }
    }
}

impl fmt::Display for SubsetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for SubsetKind {
    type Err = PartitionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SubsetKind::ALL
            .into_iter()
            .find(|k| k.label() == s)
            .ok_or_else(|| PartitionError::UnknownLabel(s.to_owned()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubsetClass {
    pub kind: SubsetKind,
    /// Smallest gap between consecutive uninherited offsets; `None` for a
    /// single timing point.
    pub min_gap_s: Option<f64>,
}

/// Classifies by the minimum gap between consecutive uninherited offsets.
/// A gap exactly equal to `threshold_s` counts as wide.
pub fn classify(timing_points: &[TimingPoint], threshold_s: f64) -> Result<SubsetClass, PartitionError> {
    if threshold_s.is_nan() || threshold_s <= 0.0 {
        return Err(PartitionError::InvalidThreshold(threshold_s));
    }
    let mut offsets: Vec<f64> = timing_points
        .iter()
        .filter(|tp| tp.uninherited)
        .map(|tp| tp.time_ms / 1000.0)
        .collect();
    match offsets.len() {
        0 => Err(PartitionError::NoUninheritedPoints),
        1 => Ok(SubsetClass {
            kind: SubsetKind::SingleTiming,
            min_gap_s: None,
        }),
        _ => {
            offsets.sort_by(f64::total_cmp);
            let min_gap = offsets
                .windows(2)
                .map(|w| w[1] - w[0])
                .fold(f64::INFINITY, f64::min);
            let kind = if min_gap >= threshold_s {
                SubsetKind::MultiWide
            } else {
                SubsetKind::MultiNarrow
            };
            Ok(SubsetClass {
                kind,
                min_gap_s: Some(min_gap),
            })
        }
    }
}
