//! Beat and downbeat scoring: F-measure and the continuity family
//! (CMLc, CMLt, AMLc, AMLt).
//!
//! Continuity rules, for an estimated beat `e[j]` whose nearest reference beat
//! is `r[n]` (ties go to the lower index):
//!
//! * the local reference interval `I` is `r[n] - r[n-1]`, or `r[1] - r[0]` when `n == 0`;
//! * phase: `|e[j] - r[n]| < phase_tol * I`;
//! * period: `|E - I| < period_tol * I`, where `E` is `e[j] - e[j-1]`
//!   (`e[1] - e[0]` for the first beat);
//! * continuity: for `j > 0` and `n > 0`, `e[j-1]` must have passed the phase
//!   test against `r[n-1]`.
//!
//! A beat is correct when all three hold. The "t" scores are the fraction of
//! correct estimated beats; the "c" scores are the longest run of consecutive
//! correct beats over the estimate length. AML repeats this for the reference
//! itself, its double-tempo version, both half-tempo parities and the offbeat
//! version, keeping the best of each score.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::beat_grid::{self, BeatAnnotation};
use crate::partition::SubsetKind;

pub const DEFAULT_F_WINDOW_S: f64 = 0.07;
pub const DEFAULT_PHASE_TOL: f64 = 0.175;
pub const DEFAULT_PERIOD_TOL: f64 = 0.175;
pub const DEFAULT_LEAD_IN_S: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("beat times are not sorted ascending")]
    UnsortedInput,
    #[error("reference needs at least two beats")]
    DegenerateReference,
    #[error("downbeat scoring requested but the prediction has no downbeat information")]
    MissingDownbeatChannel,
    #[error("annotation is empty")]
    EmptyAnnotation,
    #[error("malformed prediction line {line}: {text:?}")]
    MalformedLine { line: usize, text: String },
    #[error("prediction times are not strictly increasing at line {line}")]
    NonMonotoneTimes { line: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub f_window_s: f64,
    pub phase_tol: f64,
    pub period_tol: f64,
    /// Discard events before `lead_in_s` in both sequences.
    pub trim_lead_in: bool,
    pub lead_in_s: f64,
    pub score_downbeats: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            f_window_s: DEFAULT_F_WINDOW_S,
            phase_tol: DEFAULT_PHASE_TOL,
            period_tol: DEFAULT_PERIOD_TOL,
            trim_lead_in: true,
            lead_in_s: DEFAULT_LEAD_IN_S,
            score_downbeats: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ContinuityScores {
    pub cmlc: f64,
    pub cmlt: f64,
    pub amlc: f64,
    pub amlt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalScores {
    pub beat_f: f64,
    pub beat_cmlc: f64,
    pub beat_cmlt: f64,
    pub beat_amlc: f64,
    pub beat_amlt: f64,
    pub downbeat_f: f64,
    pub downbeat_cmlc: f64,
    pub downbeat_cmlt: f64,
    pub downbeat_amlc: f64,
    pub downbeat_amlt: f64,
}

impl EvalScores {
    pub const FIELD_NAMES: [&'static str; 10] = [
        "beat_f",
        "beat_cmlc",
        "beat_cmlt",
        "beat_amlc",
        "beat_amlt",
        "downbeat_f",
        "downbeat_cmlc",
        "downbeat_cmlt",
        "downbeat_amlc",
        "downbeat_amlt",
    ];

    pub fn perfect() -> Self {
        Self::from_values([1.0; 10])
    }

    pub fn values(&self) -> [f64; 10] {
        [
            self.beat_f,
            self.beat_cmlc,
            self.beat_cmlt,
            self.beat_amlc,
            self.beat_amlt,
            self.downbeat_f,
            self.downbeat_cmlc,
            self.downbeat_cmlt,
            self.downbeat_amlc,
            self.downbeat_amlt,
        ]
    }

    pub fn from_values(v: [f64; 10]) -> Self {
        EvalScores {
            beat_f: v[0],
            beat_cmlc: v[1],
            beat_cmlt: v[2],
            beat_amlc: v[3],
            beat_amlt: v[4],
            downbeat_f: v[5],
            downbeat_cmlc: v[6],
            downbeat_cmlt: v[7],
            downbeat_amlc: v[8],
            downbeat_amlt: v[9],
        }
    }

    fn set_beat(&mut self, f: f64, c: ContinuityScores) {
        self.beat_f = f;
        self.beat_cmlc = c.cmlc;
        self.beat_cmlt = c.cmlt;
        self.beat_amlc = c.amlc;
        self.beat_amlt = c.amlt;
    }

    fn set_downbeat(&mut self, f: f64, c: ContinuityScores) {
        self.downbeat_f = f;
        self.downbeat_cmlc = c.cmlc;
        self.downbeat_cmlt = c.cmlt;
        self.downbeat_amlc = c.amlc;
        self.downbeat_amlt = c.amlt;
    }
}

/// Estimated beats from an external tracker.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PredictionSet {
    pub beat_times_s: Vec<f64>,
    /// Position in the measure per beat, 1 = downbeat.
    pub beat_positions: Option<Vec<u32>>,
    /// Downbeats from a separate file; takes precedence over positions.
    pub downbeat_times_s: Option<Vec<f64>>,
}

impl PredictionSet {
    pub fn from_annotation(annotation: &BeatAnnotation) -> Self {
        PredictionSet {
            beat_times_s: annotation.times(),
            beat_positions: Some(annotation.indices()),
            downbeat_times_s: None,
        }
    }

    pub fn downbeats(&self) -> Option<Vec<f64>> {
        if let Some(d) = &self.downbeat_times_s {
            return Some(d.clone());
        }
        self.beat_positions.as_ref().map(|pos| {
            self.beat_times_s
                .iter()
                .zip(pos)
                .filter(|(_, &p)| p == 1)
                .map(|(&t, _)| t)
                .collect()
        })
    }
}

fn check_sorted(xs: &[f64]) -> Result<(), EvalError> {
    if xs.iter().any(|x| x.is_nan()) || xs.windows(2).any(|w| w[0] > w[1]) {
        Err(EvalError::UnsortedInput)
    } else {
        Ok(())
    }
}

/// Greedy one-to-one matching in time order: each estimate, in turn, takes the
/// earliest unmatched reference within `±window_s`. Returns (reference, estimate)
/// index pairs.
pub fn match_beats(reference_s: &[f64], estimate_s: &[f64], window_s: f64) -> Result<Vec<(usize, usize)>, EvalError> {
    check_sorted(reference_s)?;
    check_sorted(estimate_s)?;
    let mut pairs = Vec::new();
    let mut next_ref = 0;
    for (j, &e) in estimate_s.iter().enumerate() {
        // References this far behind can never match a later estimate either.
        while next_ref < reference_s.len() && reference_s[next_ref] - e < -window_s {
            next_ref += 1;
        }
        if next_ref < reference_s.len() && reference_s[next_ref] - e <= window_s {
            pairs.push((next_ref, j));
            next_ref += 1;
        }
    }
    Ok(pairs)
}

pub fn f_measure(reference_s: &[f64], estimate_s: &[f64], window_s: f64) -> Result<f64, EvalError> {
    let matched = match_beats(reference_s, estimate_s, window_s)?.len();
    Ok(f_from_counts(matched, reference_s.len(), estimate_s.len()))
}

fn f_from_counts(matched: usize, n_ref: usize, n_est: usize) -> f64 {
    match (n_ref, n_est) {
        (0, 0) => 1.0,
        (0, _) | (_, 0) => 0.0,
        _ if matched == 0 => 0.0,
        _ => {
            let p = matched as f64 / n_est as f64;
            let r = matched as f64 / n_ref as f64;
            2.0 * p * r / (p + r)
        }
    }
}

/// Index of the reference beat nearest `e`; ties resolve to the lowest index.
fn nearest(reference: &[f64], e: f64) -> usize {
    let p = reference.partition_point(|&r| r < e);
    if p == 0 {
        return 0;
    }
    if p == reference.len() {
        return first_equal_distance(reference, p - 1, e);
    }
    let below = (e - reference[p - 1]).abs();
    let above = (e - reference[p]).abs();
    if above < below {
        p
    } else {
        first_equal_distance(reference, p - 1, e)
    }
}

fn first_equal_distance(reference: &[f64], mut i: usize, e: f64) -> usize {
    let d = (e - reference[i]).abs();
    while i > 0 && (e - reference[i - 1]).abs() == d {
        i -= 1;
    }
    i
}

/// (c, t) at a single metrical level.
fn continuity_at_level(reference: &[f64], estimate: &[f64], phase_tol: f64, period_tol: f64) -> (f64, f64) {
    if reference.len() < 2 || estimate.len() < 2 {
        return (0.0, 0.0);
    }
    let mut prev: Option<(usize, bool)> = None;
    let mut total = 0usize;
    let mut run = 0usize;
    let mut longest = 0usize;
    for (j, &e) in estimate.iter().enumerate() {
        let n = nearest(reference, e);
        let interval = if n > 0 {
            reference[n] - reference[n - 1]
        } else {
            reference[1] - reference[0]
        };
        let est_interval = if j > 0 {
            e - estimate[j - 1]
        } else {
            estimate[1] - estimate[0]
        };
        let phase_ok = (e - reference[n]).abs() < phase_tol * interval;
        let period_ok = (est_interval - interval).abs() < period_tol * interval;
        let continuous = match prev {
            Some((prev_n, prev_phase_ok)) if n > 0 => prev_phase_ok && prev_n + 1 == n,
            _ => true,
        };
        if phase_ok && period_ok && continuous {
            total += 1;
            run += 1;
            longest = longest.max(run);
        } else {
            run = 0;
        }
        prev = Some((n, phase_ok));
    }
    let len = estimate.len() as f64;
    (longest as f64 / len, total as f64 / len)
}

fn midpoints(reference: &[f64]) -> Vec<f64> {
    reference.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0).collect()
}

/// The reference at each allowed metrical level: identity, double tempo,
/// half tempo (even and odd beats) and offbeat.
pub fn metrical_variations(reference: &[f64]) -> [Vec<f64>; 5] {
    let mids = midpoints(reference);
    let mut double = Vec::with_capacity(reference.len() + mids.len());
    for (i, &r) in reference.iter().enumerate() {
        double.push(r);
        if let Some(&m) = mids.get(i) {
            double.push(m);
        }
    }
    let half_even = reference.iter().step_by(2).copied().collect();
    let half_odd = reference.iter().skip(1).step_by(2).copied().collect();
    [reference.to_vec(), double, half_even, half_odd, mids]
}

pub fn continuity_scores(
    reference_s: &[f64],
    estimate_s: &[f64],
    phase_tol: f64,
    period_tol: f64,
) -> Result<ContinuityScores, EvalError> {
    check_sorted(reference_s)?;
    check_sorted(estimate_s)?;
    if reference_s.len() < 2 {
        return Err(EvalError::DegenerateReference);
    }
    if estimate_s.len() < 2 {
        return Ok(ContinuityScores::default());
    }
    let mut out = ContinuityScores::default();
    for (i, variation) in metrical_variations(reference_s).iter().enumerate() {
        let (c, t) = continuity_at_level(variation, estimate_s, phase_tol, period_tol);
        if i == 0 {
            out.cmlc = c;
            out.cmlt = t;
        }
        out.amlc = out.amlc.max(c);
        out.amlt = out.amlt.max(t);
    }
    Ok(out)
}

fn trimmed(xs: &[f64], cfg: &EvalConfig) -> Vec<f64> {
    if cfg.trim_lead_in {
        xs.iter().copied().filter(|&t| t >= cfg.lead_in_s).collect()
    } else {
        xs.to_vec()
    }
}

/// F-measure plus continuity for one pair of series. A reference with fewer
/// than two beats scores zero on continuity.
fn score_series(reference: &[f64], estimate: &[f64], cfg: &EvalConfig) -> Result<(f64, ContinuityScores), EvalError> {
    let reference = trimmed(reference, cfg);
    let estimate = trimmed(estimate, cfg);
    let f = f_measure(&reference, &estimate, cfg.f_window_s)?;
    let cont = match continuity_scores(&reference, &estimate, cfg.phase_tol, cfg.period_tol) {
        Err(EvalError::DegenerateReference) => ContinuityScores::default(),
        other => other?,
    };
    Ok((f, cont))
}

/// Scores a prediction against an annotation.
pub fn evaluate_pair(annotation: &BeatAnnotation, prediction: &PredictionSet, cfg: &EvalConfig) -> Result<EvalScores, EvalError> {
    if annotation.is_empty() {
        return Err(EvalError::EmptyAnnotation);
    }
    if prediction.beat_times_s.is_empty() {
        return Ok(EvalScores::default());
    }
    let mut scores = EvalScores::default();
    let (f, cont) = score_series(&annotation.times(), &prediction.beat_times_s, cfg)?;
    scores.set_beat(f, cont);
    if cfg.score_downbeats {
        let est_down = prediction.downbeats().ok_or(EvalError::MissingDownbeatChannel)?;
        let (f, cont) = score_series(&beat_grid::downbeats(annotation), &est_down, cfg)?;
        scores.set_downbeat(f, cont);
    }
    Ok(scores)
}

fn parse_position(field: &str) -> Option<u32> {
    if let Ok(p) = field.parse::<u32>() {
        return (p >= 1).then_some(p);
    }
    let p: f64 = field.parse().ok()?;
    (p >= 1.0 && p.fract() == 0.0 && p <= u32::MAX as f64).then_some(p as u32)
}

/// Reads a prediction file: one beat per line, `time` or `time<TAB>position`.
pub fn parse_predictions(text: &str) -> Result<PredictionSet, EvalError> {
    let mut times = Vec::new();
    let mut positions = Vec::new();
    let mut columns: Option<usize> = None;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let bad = || EvalError::MalformedLine {
            line: line_no,
            text: raw.to_owned(),
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() > 2 || *columns.get_or_insert(fields.len()) != fields.len() {
            return Err(bad());
        }
        let t: f64 = fields[0].parse().ok().filter(|t: &f64| t.is_finite()).ok_or_else(bad)?;
        if times.last().is_some_and(|&prev| t <= prev) {
            return Err(EvalError::NonMonotoneTimes { line: line_no });
        }
        times.push(t);
        if let Some(p) = fields.get(1) {
            positions.push(parse_position(p).ok_or_else(bad)?);
        }
    }
    Ok(PredictionSet {
        beat_times_s: times,
        beat_positions: (columns == Some(2)).then_some(positions),
        downbeat_times_s: None,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub subset: SubsetKind,
    pub count: usize,
    pub means: EvalScores,
}

impl SummaryRow {
    pub fn tsv_header() -> String {
        let mut s = String::from("subset\tcount");
        for name in EvalScores::FIELD_NAMES {
            s.push('\t');
            s.push_str(name);
        }
        s
    }

    /// Full-precision machine row.
    pub fn to_tsv(&self) -> String {
        let mut s = format!("{}\t{}", self.subset, self.count);
        for v in self.means.values() {
            let _ = write!(s, "\t{v}");
        }
        s
    }

    /// Two-decimal row for display.
    pub fn to_display(&self) -> String {
        let mut s = format!("{:<13}{:>6}", self.subset.label(), self.count);
        for v in self.means.values() {
            let _ = write!(s, "  {v:.2}");
        }
        s
    }
}

fn mean_rows<K: Ord>(groups: BTreeMap<K, Vec<EvalScores>>) -> BTreeMap<K, (usize, EvalScores)> {
    groups
        .into_iter()
        .map(|(k, scores)| {
            let n = scores.len();
            let mut sums = [0.0; 10];
            for s in &scores {
                for (acc, v) in sums.iter_mut().zip(s.values()) {
                    *acc += v;
                }
            }
            (k, (n, EvalScores::from_values(sums.map(|x| x / n as f64))))
        })
        .collect()
}

/// Per-subset means over annotations, in the order single, multi_wide, multi_narrow.
pub fn summarize(scores: &[(SubsetKind, EvalScores)]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<SubsetKind, Vec<EvalScores>> = BTreeMap::new();
    for (k, s) in scores {
        groups.entry(*k).or_default().push(*s);
    }
    mean_rows(groups)
        .into_iter()
        .map(|(subset, (count, means))| SummaryRow { subset, count, means })
        .collect()
}

/// Per-subset means where duplicate annotations of one audio are first
/// averaged together; `count` is the number of distinct audios.
pub fn summarize_by_audio(scores: &[(SubsetKind, String, EvalScores)]) -> Vec<SummaryRow> {
    let mut per_audio: BTreeMap<(SubsetKind, &str), Vec<EvalScores>> = BTreeMap::new();
    for (k, md5, s) in scores {
        per_audio.entry((*k, md5.as_str())).or_default().push(*s);
    }
    let collapsed: Vec<(SubsetKind, EvalScores)> = mean_rows(per_audio)
        .into_iter()
        .map(|((k, _), (_, s))| (k, s))
        .collect();
    summarize(&collapsed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beat_grid::generate_grid;
    use crate::osu_format::TimingPoint;

    fn grid(start: f64, step: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| start + i as f64 * step).collect()
    }

    #[test]
    fn f_measure_examples() {
        assert_eq!(f_measure(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], 0.07), Ok(1.0));
        assert_eq!(f_measure(&[1.0, 2.0, 3.0], &[], 0.07), Ok(0.0));
        assert_eq!(f_measure(&[], &[1.0], 0.07), Ok(0.0));
        assert_eq!(f_measure(&[], &[], 0.07), Ok(1.0));
        let f = f_measure(&[1.0, 2.0, 3.0, 4.0], &[1.05, 2.05, 3.05, 4.50], 0.07).unwrap();
        assert!((f - 0.75).abs() < 1e-12);
        assert_eq!(f_measure(&[2.0, 1.0], &[1.0], 0.07), Err(EvalError::UnsortedInput));
    }

    #[test]
    fn matching_is_one_to_one() {
        // Two estimates near one reference: only one may match.
        let pairs = match_beats(&[1.0], &[0.97, 1.02], 0.07).unwrap();
        assert_eq!(pairs, vec![(0, 0)]);
    }

    #[test]
    fn continuity_identity() {
        let r = grid(0.0, 0.5, 20);
        let c = continuity_scores(&r, &r, 0.175, 0.175).unwrap();
        assert_eq!((c.cmlc, c.cmlt, c.amlc, c.amlt), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn continuity_double_tempo() {
        let r = grid(0.0, 0.5, 21);
        let e = grid(0.0, 0.25, 41);
        let c = continuity_scores(&r, &e, 0.175, 0.175).unwrap();
        assert!(c.cmlt < 0.05, "{c:?}");
        assert_eq!(c.amlt, 1.0);
    }

    #[test]
    fn continuity_offbeat() {
        let r = grid(0.0, 0.5, 21);
        let e = grid(0.25, 0.5, 20);
        let c = continuity_scores(&r, &e, 0.175, 0.175).unwrap();
        assert_eq!(c.cmlt, 0.0);
        assert_eq!(c.amlt, 1.0);
    }

    #[test]
    fn continuity_degenerate() {
        assert_eq!(continuity_scores(&[1.0], &[1.0, 2.0], 0.175, 0.175), Err(EvalError::DegenerateReference));
        assert_eq!(
            continuity_scores(&[1.0, 2.0], &[1.0], 0.175, 0.175),
            Ok(ContinuityScores::default())
        );
    }

    #[test]
    fn continuity_breaks_on_gap() {
        let r = grid(0.0, 0.5, 20);
        let mut e = r.clone();
        e[10] += 0.2; // off by 40% of a beat
        let c = continuity_scores(&r, &e, 0.175, 0.175).unwrap();
        assert!(c.cmlt < 1.0 && c.cmlt > 0.8);
        assert!(c.cmlc < c.cmlt);
    }

    fn meter4_grid(n_measures: usize) -> BeatAnnotation {
        let end = n_measures as f64 * 2.0;
        generate_grid(&[TimingPoint::uninherited(0.0, 500.0, 4)], end).unwrap()
    }

    #[test]
    fn evaluate_pair_examples() {
        let cfg = EvalConfig::default();
        let a = meter4_grid(10);
        let p = PredictionSet::from_annotation(&a);
        assert_eq!(evaluate_pair(&a, &p, &cfg).unwrap(), EvalScores::perfect());

        let mut rotated = p.clone();
        rotated.beat_positions = Some(a.indices().iter().map(|i| i % 4 + 1).collect());
        let s = evaluate_pair(&a, &rotated, &cfg).unwrap();
        assert_eq!(s.beat_f, 1.0);
        assert_eq!(s.beat_amlt, 1.0);
        assert!(s.downbeat_f < 1.0);

        let empty = PredictionSet::default();
        assert_eq!(evaluate_pair(&a, &empty, &cfg).unwrap(), EvalScores::default());

        let no_pos = PredictionSet {
            beat_times_s: a.times(),
            ..Default::default()
        };
        assert_eq!(evaluate_pair(&a, &no_pos, &cfg), Err(EvalError::MissingDownbeatChannel));
        let beats_only = EvalConfig {
            score_downbeats: false,
            ..cfg
        };
        assert_eq!(evaluate_pair(&a, &no_pos, &beats_only).unwrap().beat_f, 1.0);

        let explicit = PredictionSet {
            downbeat_times_s: Some(beat_grid::downbeats(&a)),
            ..no_pos
        };
        assert_eq!(evaluate_pair(&a, &explicit, &cfg).unwrap(), EvalScores::perfect());
    }

    #[test]
    fn lead_in_trim() {
        let a = meter4_grid(10);
        let mut p = PredictionSet::from_annotation(&a);
        // Garbage before 5 s only matters when not trimmed.
        for t in p.beat_times_s.iter_mut().filter(|t| **t < 5.0) {
            *t += 0.2;
        }
        let on = evaluate_pair(&a, &p, &EvalConfig::default()).unwrap();
        assert_eq!(on.beat_f, 1.0);
        let off = evaluate_pair(
            &a,
            &p,
            &EvalConfig {
                trim_lead_in: false,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(off.beat_f < 1.0);
    }

    #[test]
    fn parse_prediction_files() {
        let p = parse_predictions("0.52\n1.04\n1.55").unwrap();
        assert_eq!(p.beat_times_s, vec![0.52, 1.04, 1.55]);
        assert_eq!(p.beat_positions, None);

        let p = parse_predictions("0.52\t1\n1.04\t2\n").unwrap();
        assert_eq!(p.beat_times_s, vec![0.52, 1.04]);
        assert_eq!(p.beat_positions, Some(vec![1, 2]));
        assert_eq!(p.downbeats(), Some(vec![0.52]));

        assert_eq!(parse_predictions("1.0\n0.5"), Err(EvalError::NonMonotoneTimes { line: 2 }));
        assert!(matches!(parse_predictions("abc"), Err(EvalError::MalformedLine { line: 1, .. })));
        assert!(matches!(parse_predictions("0.5\n1.0\t1"), Err(EvalError::MalformedLine { line: 2, .. })));
        assert!(matches!(parse_predictions("0.5\t0"), Err(EvalError::MalformedLine { .. })));
        assert_eq!(parse_predictions("0.5\t1.0").unwrap().beat_positions, Some(vec![1]));
        assert_eq!(parse_predictions("").unwrap(), PredictionSet::default());
    }

    #[test]
    fn summarize_examples() {
        let with_f = |f: f64| EvalScores {
            beat_f: f,
            ..EvalScores::perfect()
        };
        let rows = summarize(&[(SubsetKind::MultiWide, with_f(0.8)), (SubsetKind::MultiWide, with_f(1.0))]);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].count, 2);
        assert!((rows[0].means.beat_f - 0.9).abs() < 1e-12);
        assert!(rows[0].to_display().contains("0.90"));

        let rows = summarize(&[(SubsetKind::SingleTiming, with_f(0.3))]);
        assert_eq!(rows[0].means, with_f(0.3));

        let rows = summarize(&[
            (SubsetKind::MultiNarrow, with_f(0.1)),
            (SubsetKind::SingleTiming, with_f(0.2)),
            (SubsetKind::MultiWide, with_f(0.3)),
        ]);
        let order: Vec<SubsetKind> = rows.iter().map(|r| r.subset).collect();
        assert_eq!(order, SubsetKind::ALL.to_vec());
        assert!(summarize(&[]).is_empty());
    }

    #[test]
    fn summarize_by_audio_collapses_duplicates() {
        let with_f = |f: f64| EvalScores {
            beat_f: f,
            ..Default::default()
        };
        let rows = summarize_by_audio(&[
            (SubsetKind::MultiWide, "a".into(), with_f(0.0)),
            (SubsetKind::MultiWide, "a".into(), with_f(1.0)),
            (SubsetKind::MultiWide, "b".into(), with_f(1.0)),
        ]);
        assert_eq!(rows[0].count, 2);
        assert!((rows[0].means.beat_f - 0.75).abs() < 1e-12);
    }
}
