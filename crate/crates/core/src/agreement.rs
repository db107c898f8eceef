//! Agreement between several annotations of the same audio.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::beat_eval::{self, EvalConfig, EvalError, EvalScores, PredictionSet};
use crate::beat_grid::BeatAnnotation;
use crate::corpus_ingest::CatalogRecord;

pub const SAME_BAND: (f64, f64) = (0.96, 1.04);
pub const DOUBLE_BAND: (f64, f64) = (1.92, 2.08);
pub const HALF_BAND: (f64, f64) = (0.48, 0.52);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgreementError {
    #[error("agreement needs at least two annotations, got {0}")]
    GroupTooSmall(usize),
    #[error("annotation needs at least two beats")]
    DegenerateAnnotation,
    #[error("no annotation beat within the matching window of a prediction")]
    NoMatches,
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelationKind {
    Same,
    Double,
    Half,
    Offbeat,
    Other,
}

impl RelationKind {
    pub fn label(self) -> &'static str {
        match self {
            RelationKind::Same => "same",
            RelationKind::Double => "double",
            RelationKind::Half => "half",
            RelationKind::Offbeat => "offbeat",
            RelationKind::Other => "other",
        }
    }
}

impl fmt::Display for RelationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// How the estimate's metrical level relates to the reference's.
/// `tempo_ratio` is reference IBI over estimate IBI, so `Double` means the
/// estimate runs at twice the reference tempo.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricalRelation {
    pub kind: RelationKind,
    pub tempo_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgreementReport {
    pub audio_md5: String,
    pub annotation_ids: Vec<String>,
    /// `pairwise[i][j]`: annotation `i` as reference, `j` as estimate.
    pub pairwise: Vec<Vec<EvalScores>>,
    pub relations: Vec<Vec<MetricalRelation>>,
    /// Per-segment meters of each annotation, parallel to `annotation_ids`.
    pub annotation_meters: Vec<Vec<u32>>,
    /// Distinct per-segment meter sequences, in first-seen order.
    pub meter_sets: Vec<Vec<u32>>,
    /// Set when annotations disagree on meter and exactly one meter sequence
    /// uses a compound or additive meter; that annotation's id is suggested.
    pub suggested_interpretation: Option<String>,
}

impl AgreementReport {
    pub fn meters_disagree(&self) -> bool {
        self.meter_sets.len() > 1
    }

    /// One row per ordered off-diagonal pair:
    /// `md5, id_i, id_j, relation, tempo_ratio, beat_f, beat_amlt, downbeat_f`.
    pub fn tsv_rows(&self) -> Vec<String> {
        let n = self.annotation_ids.len();
        let mut rows = Vec::new();
        for i in 0..n {
            for j in (0..n).filter(|&j| j != i) {
                let s = &self.pairwise[i][j];
                let r = &self.relations[i][j];
                rows.push(format!(
                    "{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
                    self.audio_md5,
                    self.annotation_ids[i],
                    self.annotation_ids[j],
                    r.kind,
                    r.tempo_ratio,
                    s.beat_f,
                    s.beat_amlt,
                    s.downbeat_f
                ));
            }
        }
        rows
    }
}

/// Catalog records sharing an audio digest, for digests with two or more.
pub fn group_by_audio(entries: &[CatalogRecord]) -> BTreeMap<String, Vec<CatalogRecord>> {
    let mut groups: BTreeMap<String, Vec<CatalogRecord>> = BTreeMap::new();
    for e in entries {
        groups.entry(e.audio_md5.clone()).or_default().push(e.clone());
    }
    groups.retain(|_, g| g.len() >= 2);
    groups
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

fn median_ibi(a: &BeatAnnotation) -> Result<f64, AgreementError> {
    if a.len() < 2 {
        return Err(AgreementError::DegenerateAnnotation);
    }
    Ok(median(a.events.windows(2).map(|w| w[1].time_s - w[0].time_s).collect()))
}

fn in_band(x: f64, (lo, hi): (f64, f64)) -> bool {
    (lo..=hi).contains(&x)
}

pub fn classify_relation(reference: &BeatAnnotation, estimate: &BeatAnnotation) -> Result<MetricalRelation, AgreementError> {
    let tempo_ratio = median_ibi(reference)? / median_ibi(estimate)?;
    let kind = if in_band(tempo_ratio, SAME_BAND) {
        let (r, e) = (reference.times(), estimate.times());
        let f = beat_eval::f_measure(&r, &e, beat_eval::DEFAULT_F_WINDOW_S)?;
        if f >= 0.5 {
            RelationKind::Same
        } else {
            let amlt = beat_eval::continuity_scores(&r, &e, beat_eval::DEFAULT_PHASE_TOL, beat_eval::DEFAULT_PERIOD_TOL)?.amlt;
            if amlt >= 0.9 {
                RelationKind::Offbeat
            } else {
                RelationKind::Other
            }
        }
    } else if in_band(tempo_ratio, DOUBLE_BAND) {
        RelationKind::Double
    } else if in_band(tempo_ratio, HALF_BAND) {
        RelationKind::Half
    } else {
        RelationKind::Other
    };
    Ok(MetricalRelation { kind, tempo_ratio })
}

/// Compound (6, 9, 12, ...) or additive (5, 7, 10, 11, ...) beats per measure.
pub fn is_compound_or_additive(meter: u32) -> bool {
    let compound = meter > 3 && meter.is_multiple_of(3);
    let additive = meter >= 5 && !meter.is_power_of_two() && !meter.is_multiple_of(3);
    compound || additive
}

/// Full pairwise comparison of a group of annotations of one audio.
/// Annotations are identified by their beatmap set id.
pub fn pairwise_agreement(group: &[BeatAnnotation], cfg: &EvalConfig) -> Result<AgreementReport, AgreementError> {
    let n = group.len();
    if n < 2 {
        return Err(AgreementError::GroupTooSmall(n));
    }
    let ids: Vec<String> = group.iter().map(|a| a.beatmapset_id.to_string()).collect();

    let mut pairwise = vec![vec![EvalScores::perfect(); n]; n];
    let same = MetricalRelation {
        kind: RelationKind::Same,
        tempo_ratio: 1.0,
    };
    let mut relations = vec![vec![same; n]; n];
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            let prediction = PredictionSet::from_annotation(&group[j]);
            pairwise[i][j] = beat_eval::evaluate_pair(&group[i], &prediction, cfg)?;
            relations[i][j] = classify_relation(&group[i], &group[j])?;
        }
    }

    let meters: Vec<Vec<u32>> = group.iter().map(BeatAnnotation::meters).collect();
    let mut meter_sets: Vec<Vec<u32>> = Vec::new();
    for m in &meters {
        if !meter_sets.contains(m) {
            meter_sets.push(m.clone());
        }
    }
    let suggested_interpretation = if meter_sets.len() > 1 {
        let unusual: Vec<usize> = (0..n)
            .filter(|&i| meters[i].iter().any(|&m| is_compound_or_additive(m)))
            .collect();
        let distinct_unusual: Vec<&Vec<u32>> = meter_sets
            .iter()
            .filter(|s| s.iter().any(|&m| is_compound_or_additive(m)))
            .collect();
        (distinct_unusual.len() == 1).then(|| ids[unusual[0]].clone())
    } else {
        None
    };

    Ok(AgreementReport {
        audio_md5: group[0].source_md5.clone(),
        annotation_ids: ids,
        pairwise,
        relations,
        annotation_meters: meters,
        meter_sets,
        suggested_interpretation,
    })
}

/// Mean signed offset of annotation beats from their matched predictions.
/// Negative values mean the annotation leads.
pub fn mean_annotation_lead(reference: &BeatAnnotation, est_times_s: &[f64], window_s: f64) -> Result<f64, AgreementError> {
    let ann = reference.times();
    let pairs = beat_eval::match_beats(&ann, est_times_s, window_s)?;
    if pairs.is_empty() {
        return Err(AgreementError::NoMatches);
    }
    let sum: f64 = pairs.iter().map(|&(r, e)| ann[r] - est_times_s[e]).sum();
    Ok(sum / pairs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beat_grid::generate_grid;
    use crate::osu_format::TimingPoint;

    fn grid(offset_s: f64, beat_s: f64, meter: u32, end_s: f64) -> BeatAnnotation {
        generate_grid(&[TimingPoint::uninherited(offset_s * 1000.0, beat_s * 1000.0, meter)], end_s).unwrap()
    }

    fn numbered(grids: Vec<BeatAnnotation>) -> Vec<BeatAnnotation> {
        grids
            .into_iter()
            .enumerate()
            .map(|(i, g)| g.with_source("d41d8cd98f00b204e9800998ecf8427e", i as i64 + 1))
            .collect()
    }

    fn record(md5: &str, set: i64) -> CatalogRecord {
        CatalogRecord {
            audio_md5: md5.into(),
            beatmapset_id: set,
            audio_relpath: "x/audio.mp3".into(),
            osu_relpath: "x/a.osu".into(),
            subset: None,
        }
    }

    #[test]
    fn grouping() {
        let all_unique = [record("a", 1), record("b", 2)];
        assert!(group_by_audio(&all_unique).is_empty());
        let three = [record("a", 1), record("a", 2), record("a", 3), record("b", 4)];
        let g = group_by_audio(&three);
        assert_eq!(g.len(), 1);
        assert_eq!(g["a"].len(), 3);
    }

    #[test]
    fn identical_grids() {
        let a = grid(0.0, 0.5, 4, 30.0);
        let r = pairwise_agreement(&numbered(vec![a.clone(), a.clone()]), &EvalConfig::default()).unwrap();
        assert_eq!(r.pairwise[0][1], EvalScores::perfect());
        assert_eq!(r.pairwise[1][1], EvalScores::perfect());
        assert_eq!(r.relations[0][1].kind, RelationKind::Same);
        assert!(!r.meters_disagree());
        assert_eq!(r.tsv_rows().len(), 2);
    }

    #[test]
    fn half_tempo_pair() {
        let a = grid(0.0, 60.0 / 180.0, 4, 30.0);
        let b = grid(0.0, 60.0 / 90.0, 4, 30.0);
        let r = pairwise_agreement(&numbered(vec![a, b]), &EvalConfig::default()).unwrap();
        assert_eq!(r.relations[0][1].kind, RelationKind::Half);
        assert_eq!(r.relations[1][0].kind, RelationKind::Double);
        assert_eq!(r.pairwise[0][1].beat_amlt, 1.0);
        assert!(r.pairwise[0][1].beat_cmlt < 0.05);
    }

    #[test]
    fn meter_only_difference() {
        let a = grid(0.0, 0.5, 4, 40.0);
        let b = grid(0.0, 0.5, 7, 40.0);
        let r = pairwise_agreement(&numbered(vec![a, b]), &EvalConfig::default()).unwrap();
        let s = r.pairwise[0][1];
        assert_eq!((s.beat_f, s.beat_cmlt, s.beat_amlt), (1.0, 1.0, 1.0));
        assert!(s.downbeat_f < 1.0);
        assert!(r.meters_disagree());
        assert_eq!(r.suggested_interpretation.as_deref(), Some("2"));
    }

    #[test]
    fn relation_examples() {
        let a = grid(0.0, 0.5, 4, 20.0);
        assert_eq!(
            classify_relation(&a, &a).unwrap(),
            MetricalRelation {
                kind: RelationKind::Same,
                tempo_ratio: 1.0
            }
        );
        let slow = grid(0.0, 1.0, 4, 20.0);
        let rel = classify_relation(&a, &slow).unwrap();
        assert_eq!(rel.kind, RelationKind::Half);
        assert!((rel.tempo_ratio - 0.5).abs() < 1e-12);

        let shifted = grid(0.25, 0.5, 4, 19.9);
        assert_eq!(classify_relation(&a, &shifted).unwrap().kind, RelationKind::Offbeat);

        let odd = grid(0.0, 0.37, 4, 20.0);
        assert_eq!(classify_relation(&a, &odd).unwrap().kind, RelationKind::Other);

        let tiny = grid(0.0, 0.5, 4, 0.2);
        assert_eq!(classify_relation(&a, &tiny), Err(AgreementError::DegenerateAnnotation));
    }

    #[test]
    fn group_too_small() {
        let a = grid(0.0, 0.5, 4, 10.0);
        assert_eq!(
            pairwise_agreement(&numbered(vec![a]), &EvalConfig::default()),
            Err(AgreementError::GroupTooSmall(1))
        );
    }

    #[test]
    fn lead() {
        let a = grid(0.0, 0.5, 4, 10.0);
        assert_eq!(mean_annotation_lead(&a, &a.times(), 0.07), Ok(0.0));
        let later: Vec<f64> = a.times().iter().map(|t| t + 0.02).collect();
        let lead = mean_annotation_lead(&a, &later, 0.07).unwrap();
        assert!((lead + 0.02).abs() < 1e-9);
        let far: Vec<f64> = a.times().iter().map(|t| t + 0.25).collect();
        assert_eq!(mean_annotation_lead(&a, &far, 0.07), Err(AgreementError::NoMatches));
    }

    #[test]
    fn meter_classes() {
        let yes: Vec<u32> = (1..=13).filter(|&m| is_compound_or_additive(m)).collect();
        assert_eq!(yes, vec![5, 6, 7, 9, 10, 11, 12, 13]);
    }
}
