//! Batch orchestration behind the `extract`, `evaluate`, `agreement` and
//! `partition-stats` commands.
//!
//! Every command reads and writes under `output_dir`:
//!
//! ```text
//! annotations/<md5>_<set>_beats_metered.txt
//! audio/<md5>.<ext>
//! catalog.tsv  manifest.tsv  errors.tsv  filtered.tsv
//! evaluation.tsv  summary.tsv  summary_by_audio.tsv
//! agreement.tsv  agreement_meters.tsv
//! <command>_config.json
//! ```
//!
//! Per-entry failures are collected into error rows and never abort a batch.
//! Work fans out over a fixed-size thread pool; every shared output is sorted
//! before it is written, so results do not depend on the worker count.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agreement::{self, AgreementReport};
use crate::audio_probe::{self, ProbeMethod};
use crate::beat_eval::{self, EvalConfig, EvalScores, SummaryRow};
use crate::beat_grid::{self, BeatAnnotation};
use crate::corpus_ingest::{self, CatalogRecord, CorpusEntry, FilterCriteria, SidecarMetadata};
use crate::dataset_export::{self, ExportRecord, TimeUnit};
use crate::osu_format::{self, BeatmapDifficulty};
use crate::partition::{self, SubsetKind};

pub const ANNOTATIONS_DIR: &str = "annotations";
pub const AUDIO_DIR: &str = "audio";
pub const CATALOG_FILE: &str = "catalog.tsv";
pub const MANIFEST_FILE: &str = "manifest.tsv";
pub const ERRORS_FILE: &str = "errors.tsv";
pub const FILTERED_FILE: &str = "filtered.tsv";
pub const EVALUATION_FILE: &str = "evaluation.tsv";
pub const SUMMARY_FILE: &str = "summary.tsv";
pub const SUMMARY_BY_AUDIO_FILE: &str = "summary_by_audio.tsv";
pub const AGREEMENT_FILE: &str = "agreement.tsv";
pub const AGREEMENT_METERS_FILE: &str = "agreement_meters.tsv";

pub const AGREEMENT_HEADER: &str = "md5\tid_i\tid_j\trelation\ttempo_ratio\tbeat_f\tbeat_amlt\tdownbeat_f";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no .osz archives in {0}")]
    EmptyInput(PathBuf),
    #[error("no prediction file matched a catalog entry")]
    NoPredictionsMatched,
    #[error("catalog not found at {0}; run extract first")]
    CatalogMissing(PathBuf),
    #[error(transparent)]
    Ingest(#[from] corpus_ingest::IngestError),
    #[error(transparent)]
    Export(#[from] dataset_export::ExportError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
}

fn io_ctx(context: impl Into<String>) -> impl FnOnce(io::Error) -> PipelineError {
    let context = context.into();
    move |source| PipelineError::Io { context, source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub input_dir: PathBuf,
    pub output_dir: PathBuf,
    pub work_dir: PathBuf,
    pub threshold_s: f64,
    pub f_window_s: f64,
    pub phase_tol: f64,
    pub period_tol: f64,
    pub trim_lead_in: bool,
    /// `key<TAB>seconds` lines; the key is an audio MD5 or a beatmap set id.
    pub duration_overrides: Option<PathBuf>,
    pub sidecar_metadata: Option<PathBuf>,
    pub subset_filter: Option<SubsetKind>,
    pub workers: usize,
    /// Favorites and ranked status only apply when `sidecar_metadata` is set.
    pub criteria: FilterCriteria,
    /// Drop beats more than one beat past the last hit object.
    pub trim_to_effective_end: bool,
    pub time_unit: TimeUnit,
}

impl PipelineConfig {
    pub fn new(input_dir: impl Into<PathBuf>, output_dir: impl Into<PathBuf>, work_dir: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            input_dir: input_dir.into(),
            output_dir: output_dir.into(),
            work_dir: work_dir.into(),
            threshold_s: partition::DEFAULT_THRESHOLD_S,
            f_window_s: beat_eval::DEFAULT_F_WINDOW_S,
            phase_tol: beat_eval::DEFAULT_PHASE_TOL,
            period_tol: beat_eval::DEFAULT_PERIOD_TOL,
            trim_lead_in: true,
            duration_overrides: None,
            sidecar_metadata: None,
            subset_filter: None,
            workers: 1,
            criteria: FilterCriteria::default(),
            trim_to_effective_end: false,
            time_unit: TimeUnit::Seconds,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |msg: String| Err(PipelineError::InvalidConfig(msg));
        if self.threshold_s.is_nan() || self.threshold_s <= 0.0 {
            return bad(format!("threshold_s must be positive, got {}", self.threshold_s));
        }
        if self.f_window_s.is_nan() || self.f_window_s <= 0.0 {
            return bad(format!("f_window_s must be positive, got {}", self.f_window_s));
        }
        for (name, v) in [("phase_tol", self.phase_tol), ("period_tol", self.period_tol)] {
            if !(v > 0.0 && v < 1.0) {
                return bad(format!("{name} must be in (0, 1), got {v}"));
            }
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        Ok(())
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            f_window_s: self.f_window_s,
            phase_tol: self.phase_tol,
            period_tol: self.period_tol,
            trim_lead_in: self.trim_lead_in,
            ..EvalConfig::default()
        }
    }

    pub fn annotations_dir(&self) -> PathBuf {
        self.output_dir.join(ANNOTATIONS_DIR)
    }

    pub fn catalog_path(&self) -> PathBuf {
        self.output_dir.join(CATALOG_FILE)
    }

    fn pool(&self) -> Result<rayon::ThreadPool, PipelineError> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| PipelineError::InvalidConfig(e.to_string()))
    }

    fn echo(&self, command: &str) -> Result<(), PipelineError> {
        let path = self.output_dir.join(format!("{command}_config.json"));
        let mut json = serde_json::to_string_pretty(self).expect("config serializes");
        json.push('\n');
        write_file(&path, &json)
    }
}

fn write_file(path: &Path, content: &str) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_ctx(format!("creating {}", parent.display())))?;
    }
    fs::write(path, content).map_err(io_ctx(format!("writing {}", path.display())))
}

/// One failed unit of work.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ErrorRow {
    pub source: String,
    pub stage: String,
    pub detail: String,
}

impl ErrorRow {
    fn new(source: impl Into<String>, stage: &str, detail: impl ToString) -> Self {
        ErrorRow {
            source: source.into(),
            stage: stage.to_owned(),
            detail: detail.to_string().replace(['\t', '\n'], " "),
        }
    }
}

fn render_errors(rows: &[ErrorRow]) -> String {
    let mut out = String::from("source\tstage\tdetail\n");
    for r in rows {
        out.push_str(&format!("{}\t{}\t{}\n", r.source, r.stage, r.detail));
    }
    out
}

#[derive(Debug, Clone, Default)]
pub struct DurationOverrides(BTreeMap<String, f64>);

impl DurationOverrides {
    pub fn parse(text: &str) -> Result<Self, PipelineError> {
        let mut map = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parsed = line
                .split_once('\t')
                .and_then(|(k, v)| Some((k.trim(), v.trim().parse::<f64>().ok()?)))
                .filter(|(_, v)| *v > 0.0);
            let Some((key, secs)) = parsed else {
                return Err(PipelineError::InvalidConfig(format!(
                    "duration overrides line {}: {line:?}",
                    i + 1
                )));
            };
            map.insert(key.to_owned(), secs);
        }
        Ok(DurationOverrides(map))
    }

    pub fn lookup(&self, md5: &str, beatmapset_id: i64) -> Option<f64> {
        self.0
            .get(md5)
            .or_else(|| self.0.get(&beatmapset_id.to_string()))
            .copied()
    }
}

/// An entry ready to export.
#[derive(Debug, Clone)]
pub struct PreparedEntry {
    pub entry: CorpusEntry,
    pub annotation: BeatAnnotation,
    pub duration_s: f64,
    pub duration_source: ProbeMethod,
}

#[derive(Debug, Clone, Default)]
pub struct ExtractOutcome {
    pub records: Vec<ExportRecord>,
    pub catalog: Vec<CatalogRecord>,
    pub errors: Vec<ErrorRow>,
    pub filtered: Vec<(CatalogRecord, String)>,
    pub archives: usize,
}

impl ExtractOutcome {
    pub fn exported(&self) -> usize {
        self.records.len()
    }
}

fn list_archives(dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let rd = fs::read_dir(dir).map_err(io_ctx(format!("listing {}", dir.display())))?;
    let mut out: Vec<PathBuf> = rd
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| e.eq_ignore_ascii_case("osz"))
        })
        .collect();
    out.sort();
    Ok(out)
}

fn leading_set_id(stem: &str) -> Option<i64> {
    let digits: String = stem.chars().take_while(char::is_ascii_digit).collect();
    digits.parse().ok().filter(|&id| id > 0)
}

/// Finds the extracted file an `.osu` `AudioFilename` refers to. Names are
/// matched case-insensitively, as the game does on Windows.
fn find_audio(set_dir: &Path, audio_filename: &str, extracted: &[PathBuf]) -> Option<PathBuf> {
    let wanted = audio_filename.replace('\\', "/").to_lowercase();
    extracted
        .iter()
        .find(|p| {
            p.strip_prefix(set_dir)
                .map(|rel| rel.to_string_lossy().replace('\\', "/").to_lowercase() == wanted)
                .unwrap_or(false)
        })
        .cloned()
}

struct ArchiveResult {
    prepared: Vec<PreparedEntry>,
    errors: Vec<ErrorRow>,
}

fn process_archive(archive: &Path, cfg: &PipelineConfig, overrides: &DurationOverrides) -> ArchiveResult {
    let name = archive
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let stem = archive
        .file_stem()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut errors = Vec::new();
    let mut prepared = Vec::new();
    let mut fail = |stage: &str, detail: &dyn ToString| errors.push(ErrorRow::new(name.clone(), stage, detail.to_string()));

    let set_dir = cfg.work_dir.join("sets").join(&stem);
    if set_dir.exists() {
        if let Err(e) = fs::remove_dir_all(&set_dir) {
            fail("unpack", &e);
            return ArchiveResult { prepared, errors };
        }
    }
    let extracted = match corpus_ingest::unpack_osz(archive, &set_dir) {
        Ok(p) => p,
        Err(e) => {
            fail("unpack", &e);
            return ArchiveResult { prepared, errors };
        }
    };

    let mut difficulties: Vec<(PathBuf, BeatmapDifficulty)> = Vec::new();
    for path in extracted.iter().filter(|p| corpus_ingest::is_osu_file(p)) {
        let rel = path.strip_prefix(&set_dir).unwrap_or(path).display().to_string();
        match fs::read(path) {
            Ok(bytes) => match osu_format::parse_osu(&String::from_utf8_lossy(&bytes)) {
                Ok(d) => difficulties.push((path.clone(), d)),
                Err(e) => fail("parse", &format!("{rel}: {e}")),
            },
            Err(e) => fail("parse", &format!("{rel}: {e}")),
        }
    }
    if difficulties.is_empty() {
        if extracted.iter().all(|p| !corpus_ingest::is_osu_file(p)) {
            fail("parse", &"archive has no .osu files");
        }
        return ArchiveResult { prepared, errors };
    }

    let set_id = difficulties
        .iter()
        .map(|(_, d)| d.beatmapset_id)
        .find(|&id| id > 0)
        .or_else(|| leading_set_id(&stem));
    let Some(set_id) = set_id else {
        fail("parse", &"no BeatmapSetID and archive name has no leading set id");
        return ArchiveResult { prepared, errors };
    };

    let names: Vec<String> = difficulties.iter().map(|(_, d)| d.version_name.clone()).collect();
    let only_maps: Vec<BeatmapDifficulty> = difficulties.iter().map(|(_, d)| d.clone()).collect();
    for (audio_name, idx) in corpus_ingest::select_difficulty_indices(&only_maps) {
        let (osu_path, diff) = &difficulties[idx];
        let label = format!("{audio_name:?} ({})", diff.version_name);
        if audio_name.is_empty() {
            fail("audio", &format!("{label}: empty AudioFilename"));
            continue;
        }
        let Some(audio_path) = find_audio(&set_dir, &audio_name, &extracted) else {
            fail("audio", &format!("{label}: audio file not in archive"));
            continue;
        };
        let bytes = match fs::read(&audio_path) {
            Ok(b) => b,
            Err(e) => {
                fail("audio", &format!("{label}: {e}"));
                continue;
            }
        };
        let md5 = corpus_ingest::md5_hex(&bytes);

        let is_mp3 = audio_path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("mp3"));
        let probe = if is_mp3 {
            audio_probe::mp3_duration(&bytes).map_err(|e| e.to_string())
        } else {
            Err("unsupported by probe".to_owned())
        };
        let override_s = overrides.lookup(&md5, set_id);
        let (duration_s, duration_source) = match (override_s, &probe) {
            (Some(s), _) => (s, ProbeMethod::Override),
            (None, Ok(info)) => (info.duration_s, info.method),
            (None, Err(why)) => {
                let e = audio_probe::resolve_duration(None, None).unwrap_err();
                fail("probe", &format!("{label}: {e} ({why})"));
                continue;
            }
        };
        if let Ok(info) = &probe {
            if !info.warnings.is_empty() {
                log::warn!("{name}: {label}: {:?}", info.warnings);
            }
        }

        let mut annotation = match beat_grid::generate_grid(&diff.timing_points, duration_s) {
            Ok(a) => a.with_source(md5.clone(), set_id),
            Err(e) => {
                fail("grid", &format!("{label}: {e}"));
                continue;
            }
        };
        if cfg.trim_to_effective_end {
            if let Some(last_hit_ms) = diff.last_hit_ms() {
                let slack = annotation.final_beat_length().unwrap_or(0.0);
                annotation = beat_grid::truncate_to_effective_end(&annotation, last_hit_ms / 1000.0, slack);
            }
        }
        if annotation.is_empty() {
            fail("grid", &format!("{label}: no beats before the end of the audio"));
            continue;
        }
        let subset = match partition::classify(&diff.timing_points, cfg.threshold_s) {
            Ok(s) => s,
            Err(e) => {
                fail("partition", &format!("{label}: {e}"));
                continue;
            }
        };
        prepared.push(PreparedEntry {
            entry: CorpusEntry {
                beatmapset_id: set_id,
                audio_md5: md5,
                audio_path,
                osu_path: osu_path.clone(),
                chosen_difficulty: diff.clone(),
                set_difficulty_names: names.clone(),
                subset: Some(subset),
                source_archive: archive.to_owned(),
            },
            annotation,
            duration_s,
            duration_source,
        });
    }
    ArchiveResult { prepared, errors }
}

fn effective_criteria(cfg: &PipelineConfig) -> FilterCriteria {
    let mut c = cfg.criteria.clone();
    if cfg.sidecar_metadata.is_none() {
        c.min_favorites = 0;
        c.require_ranked = false;
    }
    c
}

fn read_text(path: &Path) -> Result<String, PipelineError> {
    fs::read_to_string(path).map_err(io_ctx(format!("reading {}", path.display())))
}

/// Unpacks, annotates, partitions and exports every archive in `input_dir`.
pub fn cmd_extract(cfg: &PipelineConfig) -> Result<ExtractOutcome, PipelineError> {
    cfg.validate()?;
    let archives = list_archives(&cfg.input_dir)?;
    if archives.is_empty() {
        return Err(PipelineError::EmptyInput(cfg.input_dir.clone()));
    }
    let overrides = match &cfg.duration_overrides {
        Some(p) => DurationOverrides::parse(&read_text(p)?)?,
        None => DurationOverrides::default(),
    };
    let sidecar = match &cfg.sidecar_metadata {
        Some(p) => SidecarMetadata::parse(&read_text(p)?)?,
        None => SidecarMetadata::default(),
    };
    fs::create_dir_all(&cfg.output_dir).map_err(io_ctx(format!("creating {}", cfg.output_dir.display())))?;
    cfg.echo("extract")?;

    let pool = cfg.pool()?;
    let results: Vec<ArchiveResult> =
        pool.install(|| archives.par_iter().map(|a| process_archive(a, cfg, &overrides)).collect());

    let mut errors = Vec::new();
    let mut prepared = Vec::new();
    for r in results {
        errors.extend(r.errors);
        prepared.extend(r.prepared);
    }
    prepared.sort_by(|a, b| {
        (&a.entry.audio_md5, a.entry.beatmapset_id, &a.entry.audio_path)
            .cmp(&(&b.entry.audio_md5, b.entry.beatmapset_id, &b.entry.audio_path))
    });
    let mut seen = BTreeSet::new();
    prepared.retain(|p| {
        let fresh = seen.insert((p.entry.audio_md5.clone(), p.entry.beatmapset_id));
        if !fresh {
            errors.push(ErrorRow::new(
                p.entry.source_archive.file_name().unwrap_or_default().to_string_lossy(),
                "dedupe",
                format!("duplicate audio {} within set {}", p.entry.audio_md5, p.entry.beatmapset_id),
            ));
        }
        fresh
    });

    // Filtering works on entries; keep the annotations alongside by key.
    let mut by_key: BTreeMap<(String, i64), PreparedEntry> = prepared
        .into_iter()
        .map(|p| ((p.entry.audio_md5.clone(), p.entry.beatmapset_id), p))
        .collect();
    let entries: Vec<CorpusEntry> = by_key.values().map(|p| p.entry.clone()).collect();
    let outcome = corpus_ingest::filter_catalog(entries, &sidecar, &effective_criteria(cfg));
    let mut filtered: Vec<(CatalogRecord, String)> = outcome
        .dropped
        .iter()
        .map(|(e, why)| (e.to_record(&cfg.work_dir), why.clone()))
        .collect();
    let mut kept = Vec::new();
    for e in outcome.kept {
        let p = by_key
            .remove(&(e.audio_md5.clone(), e.beatmapset_id))
            .expect("kept entry was prepared");
        match cfg.subset_filter {
            Some(want) if e.subset.map(|s| s.kind) != Some(want) => {
                filtered.push((e.to_record(&cfg.work_dir), format!("subset is not {want}")));
            }
            _ => kept.push(p),
        }
    }
    filtered.sort();

    let ann_dir = cfg.annotations_dir();
    let audio_dir = cfg.output_dir.join(AUDIO_DIR);
    for d in [&ann_dir, &audio_dir] {
        fs::create_dir_all(d).map_err(io_ctx(format!("creating {}", d.display())))?;
    }
    let exported: Vec<Result<(ExportRecord, CatalogRecord), ErrorRow>> = pool.install(|| {
        kept.par_iter()
            .map(|p| {
                let source = p.entry.source_archive.file_name().unwrap_or_default().to_string_lossy().into_owned();
                let subset = p.entry.subset.expect("classified").kind;
                let rec = dataset_export::write_annotation(&p.annotation, subset, &ann_dir, cfg.time_unit)
                    .map_err(|e| ErrorRow::new(source.clone(), "export", e))?;
                dataset_export::copy_audio(&p.entry, &audio_dir).map_err(|e| ErrorRow::new(source, "export", e))?;
                Ok((rec, p.entry.to_record(&cfg.work_dir)))
            })
            .collect()
    });

    let mut records = Vec::new();
    let mut catalog = Vec::new();
    for r in exported {
        match r {
            Ok((rec, cat)) => {
                records.push(rec);
                catalog.push(cat);
            }
            Err(row) => errors.push(row),
        }
    }
    records.sort();
    catalog.sort();
    errors.sort();
    for row in &errors {
        log::warn!("{}: {}: {}", row.source, row.stage, row.detail);
    }

    write_file(&cfg.catalog_path(), &corpus_ingest::write_catalog(&catalog))?;
    write_file(&cfg.output_dir.join(MANIFEST_FILE), &dataset_export::render_manifest(&records))?;
    write_file(&cfg.output_dir.join(ERRORS_FILE), &render_errors(&errors))?;
    let mut filtered_text = String::from("audio_md5\tbeatmapset_id\treason\n");
    for (rec, why) in &filtered {
        filtered_text.push_str(&format!("{}\t{}\t{}\n", rec.audio_md5, rec.beatmapset_id, why));
    }
    write_file(&cfg.output_dir.join(FILTERED_FILE), &filtered_text)?;

    Ok(ExtractOutcome {
        records,
        catalog,
        errors,
        filtered,
        archives: archives.len(),
    })
}

fn load_catalog(cfg: &PipelineConfig) -> Result<Vec<CatalogRecord>, PipelineError> {
    let path = cfg.catalog_path();
    if !path.exists() {
        return Err(PipelineError::CatalogMissing(path));
    }
    Ok(corpus_ingest::parse_catalog(&read_text(&path)?)?)
}

fn load_annotation(cfg: &PipelineConfig, rec: &CatalogRecord) -> Result<BeatAnnotation, PipelineError> {
    let path = cfg
        .annotations_dir()
        .join(dataset_export::annotation_filename(&rec.audio_md5, rec.beatmapset_id));
    let a = dataset_export::parse_annotation(&read_text(&path)?, cfg.time_unit)?;
    Ok(a.with_source(rec.audio_md5.clone(), rec.beatmapset_id))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntryScores {
    pub record: CatalogRecord,
    pub subset: SubsetKind,
    pub scores: EvalScores,
}

#[derive(Debug, Clone, Default)]
pub struct EvaluateOutcome {
    pub entries: Vec<EntryScores>,
    pub summary: Vec<SummaryRow>,
    pub summary_by_audio: Vec<SummaryRow>,
    /// Catalog entries with no prediction file.
    pub unmatched: usize,
    pub errors: Vec<ErrorRow>,
}

pub fn beats_prediction_path(dir: &Path, md5: &str) -> PathBuf {
    dir.join(format!("{md5}.beats.txt"))
}

pub fn downbeats_prediction_path(dir: &Path, md5: &str) -> PathBuf {
    dir.join(format!("{md5}.downbeats.txt"))
}

fn summary_tsv(rows: &[SummaryRow]) -> String {
    let mut out = SummaryRow::tsv_header();
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_tsv());
        out.push('\n');
    }
    out
}

fn score_entry(cfg: &PipelineConfig, rec: &CatalogRecord, predictions_dir: &Path) -> Result<EvalScores, String> {
    let annotation = load_annotation(cfg, rec).map_err(|e| e.to_string())?;
    let text = read_text(&beats_prediction_path(predictions_dir, &rec.audio_md5)).map_err(|e| e.to_string())?;
    let mut prediction = beat_eval::parse_predictions(&text).map_err(|e| e.to_string())?;
    let down_path = downbeats_prediction_path(predictions_dir, &rec.audio_md5);
    if down_path.exists() {
        let text = read_text(&down_path).map_err(|e| e.to_string())?;
        let down = beat_eval::parse_predictions(&text).map_err(|e| format!("downbeats: {e}"))?;
        prediction.downbeat_times_s = Some(down.beat_times_s);
    }
    beat_eval::evaluate_pair(&annotation, &prediction, &cfg.eval_config()).map_err(|e| e.to_string())
}

/// Scores tracker predictions (`<md5>.beats.txt`, optionally
/// `<md5>.downbeats.txt`) against every matching catalog entry.
pub fn cmd_evaluate(cfg: &PipelineConfig, predictions_dir: &Path) -> Result<EvaluateOutcome, PipelineError> {
    cfg.validate()?;
    let catalog = load_catalog(cfg)?;
    cfg.echo("evaluate")?;

    let candidates: Vec<(CatalogRecord, SubsetKind)> = catalog
        .into_iter()
        .filter_map(|r| r.subset.map(|s| (r, s)))
        .filter(|(_, s)| cfg.subset_filter.is_none_or(|want| want == *s))
        .collect();
    let (matched, unmatched): (Vec<_>, Vec<_>) = candidates
        .into_iter()
        .partition(|(r, _)| beats_prediction_path(predictions_dir, &r.audio_md5).exists());
    if matched.is_empty() {
        return Err(PipelineError::NoPredictionsMatched);
    }

    let pool = cfg.pool()?;
    let scored: Vec<Result<EntryScores, ErrorRow>> = pool.install(|| {
        matched
            .par_iter()
            .map(|(rec, subset)| {
                score_entry(cfg, rec, predictions_dir)
                    .map(|scores| EntryScores {
                        record: rec.clone(),
                        subset: *subset,
                        scores,
                    })
                    .map_err(|e| ErrorRow::new(format!("{}_{}", rec.audio_md5, rec.beatmapset_id), "evaluate", e))
            })
            .collect()
    });
    let mut entries = Vec::new();
    let mut errors = Vec::new();
    for r in scored {
        match r {
            Ok(s) => entries.push(s),
            Err(e) => errors.push(e),
        }
    }
    errors.sort();
    for row in &errors {
        log::warn!("{}: {}", row.source, row.detail);
    }

    let per_annotation: Vec<(SubsetKind, EvalScores)> = entries.iter().map(|e| (e.subset, e.scores)).collect();
    let per_audio: Vec<(SubsetKind, String, EvalScores)> = entries
        .iter()
        .map(|e| (e.subset, e.record.audio_md5.clone(), e.scores))
        .collect();
    let summary = beat_eval::summarize(&per_annotation);
    let summary_by_audio = beat_eval::summarize_by_audio(&per_audio);

    let mut eval_text = String::from("audio_md5\tbeatmapset_id\tsubset");
    for name in EvalScores::FIELD_NAMES {
        eval_text.push('\t');
        eval_text.push_str(name);
    }
    eval_text.push('\n');
    for e in &entries {
        eval_text.push_str(&format!("{}\t{}\t{}", e.record.audio_md5, e.record.beatmapset_id, e.subset));
        for v in e.scores.values() {
            eval_text.push_str(&format!("\t{v}"));
        }
        eval_text.push('\n');
    }
    write_file(&cfg.output_dir.join(EVALUATION_FILE), &eval_text)?;
    write_file(&cfg.output_dir.join(SUMMARY_FILE), &summary_tsv(&summary))?;
    write_file(&cfg.output_dir.join(SUMMARY_BY_AUDIO_FILE), &summary_tsv(&summary_by_audio))?;

    Ok(EvaluateOutcome {
        entries,
        summary,
        summary_by_audio,
        unmatched: unmatched.len(),
        errors,
    })
}

#[derive(Debug, Clone, Default)]
pub struct AgreementOutcome {
    pub reports: Vec<AgreementReport>,
    pub errors: Vec<ErrorRow>,
}

/// Pairwise agreement for every audio annotated in more than one set.
pub fn cmd_agreement(cfg: &PipelineConfig) -> Result<AgreementOutcome, PipelineError> {
    cfg.validate()?;
    let catalog = load_catalog(cfg)?;
    cfg.echo("agreement")?;
    let groups: Vec<(String, Vec<CatalogRecord>)> = agreement::group_by_audio(&catalog).into_iter().collect();

    let pool = cfg.pool()?;
    let eval_cfg = cfg.eval_config();
    let results: Vec<Result<AgreementReport, ErrorRow>> = pool.install(|| {
        groups
            .par_iter()
            .map(|(md5, members)| {
                let annotations = members
                    .iter()
                    .map(|r| load_annotation(cfg, r))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| ErrorRow::new(md5.clone(), "agreement", e))?;
                agreement::pairwise_agreement(&annotations, &eval_cfg).map_err(|e| ErrorRow::new(md5.clone(), "agreement", e))
            })
            .collect()
    });
    let mut reports = Vec::new();
    let mut errors = Vec::new();
    for r in results {
        match r {
            Ok(rep) => reports.push(rep),
            Err(e) => errors.push(e),
        }
    }

    let mut rows = String::from(AGREEMENT_HEADER);
    rows.push('\n');
    let mut meters = String::from("md5\tannotation_id\tmeters\tsuggested\n");
    for rep in &reports {
        for row in rep.tsv_rows() {
            rows.push_str(&row);
            rows.push('\n');
        }
        if rep.meters_disagree() {
            for (id, m) in rep.annotation_ids.iter().zip(rep_meters(rep)) {
                let suggested = rep.suggested_interpretation.as_deref() == Some(id.as_str());
                meters.push_str(&format!("{}\t{id}\t{m}\t{}\n", rep.audio_md5, u8::from(suggested)));
            }
        }
    }
    write_file(&cfg.output_dir.join(AGREEMENT_FILE), &rows)?;
    write_file(&cfg.output_dir.join(AGREEMENT_METERS_FILE), &meters)?;
    Ok(AgreementOutcome { reports, errors })
}

/// Comma-joined meters for each annotation in the report.
fn rep_meters(rep: &AgreementReport) -> Vec<String> {
    rep.annotation_meters
        .iter()
        .map(|m| m.iter().map(u32::to_string).collect::<Vec<_>>().join(","))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartitionCount {
    pub subset: SubsetKind,
    pub count: usize,
    pub fraction: f64,
}

/// Count and fraction of catalog entries per subset, in reporting order.
pub fn cmd_partition_stats(cfg: &PipelineConfig) -> Result<Vec<PartitionCount>, PipelineError> {
    let catalog = load_catalog(cfg)?;
    let total = catalog.iter().filter(|r| r.subset.is_some()).count();
    Ok(SubsetKind::ALL
        .iter()
        .map(|&subset| {
            let count = catalog.iter().filter(|r| r.subset == Some(subset)).count();
            PartitionCount {
                subset,
                count,
                fraction: if total == 0 { 0.0 } else { count as f64 / total as f64 },
            }
        })
        .collect())
}
