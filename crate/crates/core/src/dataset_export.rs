//! Annotation files, audio copies and the export manifest.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::beat_grid::{BeatAnnotation, BeatEvent};
use crate::corpus_ingest::{md5_hex, CorpusEntry};
use crate::partition::SubsetKind;

pub const MANIFEST_HEADER: &str = "filename\taudio_md5\tbeatmapset_id\tsubset\tn_beats\tn_segments";

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("{0} already exists with different content")]
    NameCollisionWithDifferentContent(PathBuf),
    #[error("copied audio {path} hashes to {actual}, expected {expected}")]
    HashMismatch { path: PathBuf, expected: String, actual: String },
    #[error("annotation is empty")]
    EmptyAnnotation,
    #[error("malformed annotation line {line}: {text:?}")]
    MalformedLine { line: usize, text: String },
    #[error("{context}: {source}")]
    IoFailure {
        context: String,
        #[source]
        source: io::Error,
    },
}

fn io_err(context: impl Into<String>) -> impl FnOnce(io::Error) -> ExportError {
    let context = context.into();
    move |source| ExportError::IoFailure { context, source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeUnit {
    #[default]
    Seconds,
    Milliseconds,
}

impl TimeUnit {
    fn format(self, time_s: f64) -> String {
        // `+ 0.0` folds negative zero.
        match self {
            TimeUnit::Seconds => format!("{:.6}", time_s + 0.0),
            TimeUnit::Milliseconds => format!("{:.3}", time_s * 1000.0 + 0.0),
        }
    }

    fn to_seconds(self, value: f64) -> f64 {
        match self {
            TimeUnit::Seconds => value,
            TimeUnit::Milliseconds => value / 1000.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ExportRecord {
    pub output_filename: String,
    pub audio_md5: String,
    pub beatmapset_id: i64,
    pub subset: SubsetKind,
    pub n_beats: usize,
    pub n_segments: usize,
}

impl ExportRecord {
    pub fn to_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}",
            self.output_filename, self.audio_md5, self.beatmapset_id, self.subset, self.n_beats, self.n_segments
        )
    }
}

pub fn annotation_filename(audio_md5: &str, beatmapset_id: i64) -> String {
    format!("{audio_md5}_{beatmapset_id}_beats_metered.txt")
}

/// `time<TAB>index` per beat, newline-terminated.
pub fn render_annotation(annotation: &BeatAnnotation, unit: TimeUnit) -> String {
    let mut out = String::with_capacity(annotation.len() * 16);
    for e in &annotation.events {
        let _ = writeln!(out, "{}\t{}", unit.format(e.time_s), e.index);
    }
    out
}

/// Reads an annotation file back.
///
/// Segment numbers are not stored, so they are reconstructed: a new segment
/// starts where the measure restarts early, where the index sequence jumps,
/// or where a restart coincides with a change in beat spacing.
pub fn parse_annotation(text: &str, unit: TimeUnit) -> Result<BeatAnnotation, ExportError> {
    let mut events: Vec<BeatEvent> = Vec::new();
    let mut segment = 0usize;
    let mut seg_max = 0u32;
    let mut seg_spacing: Option<f64> = None;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = || ExportError::MalformedLine {
            line: i + 1,
            text: line.to_owned(),
        };
        let (t, idx) = line.split_once('\t').ok_or_else(bad)?;
        let time_s = unit.to_seconds(t.trim().parse::<f64>().map_err(|_| bad())?);
        let index: u32 = idx.trim().parse().ok().filter(|&i| i >= 1).ok_or_else(bad)?;

        if let Some(prev) = events.last() {
            let spacing = time_s - prev.time_s;
            let restart = index == 1;
            let continues = index == prev.index + 1;
            let new_segment = if restart {
                prev.index < seg_max || seg_spacing.is_some_and(|s| (spacing - s).abs() > 1e-4)
            } else {
                !continues
            };
            if new_segment {
                segment += 1;
                seg_max = 0;
                seg_spacing = None;
            } else {
                seg_spacing.get_or_insert(spacing);
            }
        }
        seg_max = seg_max.max(index);
        events.push(BeatEvent { time_s, index, segment });
    }
    Ok(BeatAnnotation {
        events,
        ..Default::default()
    })
}

/// Writes `<md5>_<set id>_beats_metered.txt` into `out_dir`.
///
/// An existing file with identical content is left alone; different content is
/// a collision.
pub fn write_annotation(
    annotation: &BeatAnnotation,
    subset: SubsetKind,
    out_dir: &Path,
    unit: TimeUnit,
) -> Result<ExportRecord, ExportError> {
    if annotation.is_empty() {
        return Err(ExportError::EmptyAnnotation);
    }
    let name = annotation_filename(&annotation.source_md5, annotation.beatmapset_id);
    let path = out_dir.join(&name);
    let content = render_annotation(annotation, unit);
    write_once(&path, content.as_bytes())?;
    Ok(ExportRecord {
        output_filename: name,
        audio_md5: annotation.source_md5.clone(),
        beatmapset_id: annotation.beatmapset_id,
        subset,
        n_beats: annotation.len(),
        n_segments: annotation.segment_count(),
    })
}

fn write_once(path: &Path, content: &[u8]) -> Result<(), ExportError> {
    match fs::read(path) {
        Ok(existing) if existing == content => return Ok(()),
        Ok(_) => return Err(ExportError::NameCollisionWithDifferentContent(path.to_owned())),
        Err(e) if e.kind() == io::ErrorKind::NotFound => {}
        Err(e) => return Err(io_err(format!("reading {}", path.display()))(e)),
    }
    write_atomic(path, content)
}

fn write_atomic(path: &Path, content: &[u8]) -> Result<(), ExportError> {
    let ctx = || format!("writing {}", path.display());
    let parent = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(parent).map_err(io_err(ctx()))?;
    let tmp = parent.join(format!(
        ".{}.tmp",
        path.file_name().map(|n| n.to_string_lossy()).unwrap_or_default()
    ));
    fs::write(&tmp, content).map_err(io_err(ctx()))?;
    fs::rename(&tmp, path).map_err(io_err(ctx()))
}

/// Copies the entry's audio to `<out_dir>/<md5>.<ext>` and verifies the hash.
/// A matching copy already in place is reused.
pub fn copy_audio(entry: &CorpusEntry, out_dir: &Path) -> Result<PathBuf, ExportError> {
    let ext = entry
        .audio_path
        .extension()
        .map(|e| e.to_string_lossy().to_lowercase())
        .unwrap_or_else(|| "mp3".into());
    let dest = out_dir.join(format!("{}.{ext}", entry.audio_md5));
    if let Ok(existing) = fs::read(&dest) {
        if md5_hex(&existing) == entry.audio_md5 {
            return Ok(dest);
        }
    }
    let bytes = fs::read(&entry.audio_path).map_err(io_err(format!("reading {}", entry.audio_path.display())))?;
    write_atomic(&dest, &bytes)?;
    let actual = md5_hex(&fs::read(&dest).map_err(io_err(format!("reading {}", dest.display())))?);
    if actual != entry.audio_md5 {
        return Err(ExportError::HashMismatch {
            path: dest,
            expected: entry.audio_md5.clone(),
            actual,
        });
    }
    Ok(dest)
}

pub fn render_manifest(records: &[ExportRecord]) -> String {
    let mut sorted: Vec<&ExportRecord> = records.iter().collect();
    sorted.sort();
    let mut out = String::from(MANIFEST_HEADER);
    out.push('\n');
    for r in sorted {
        out.push_str(&r.to_line());
        out.push('\n');
    }
    out
}

/// Header plus one row per record, sorted by filename.
pub fn write_manifest(records: &[ExportRecord], path: &Path) -> Result<(), ExportError> {
    write_atomic(path, render_manifest(records).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beat_grid::generate_grid;
    use crate::osu_format::TimingPoint;

    const MD5: &str = "abcdef0123456789abcdef0123456789";

    fn three_beats() -> BeatAnnotation {
        generate_grid(&[TimingPoint::uninherited(1000.0, 500.0, 4)], 2.2)
            .unwrap()
            .with_source(MD5, 1234)
    }

    #[test]
    fn annotation_layout() {
        let dir = tempfile::tempdir().unwrap();
        let a = three_beats();
        let rec = write_annotation(&a, SubsetKind::SingleTiming, dir.path(), TimeUnit::Seconds).unwrap();
        assert_eq!(rec.output_filename, format!("{MD5}_1234_beats_metered.txt"));
        let text = fs::read_to_string(dir.path().join(&rec.output_filename)).unwrap();
        assert_eq!(text, "1.000000\t1\n1.500000\t2\n2.000000\t3\n");
        assert_eq!((rec.n_beats, rec.n_segments), (3, 1));

        // Idempotent re-export.
        let again = write_annotation(&a, SubsetKind::SingleTiming, dir.path(), TimeUnit::Seconds).unwrap();
        assert_eq!(again, rec);

        let mut other = a.clone();
        other.events.pop();
        assert!(matches!(
            write_annotation(&other, SubsetKind::SingleTiming, dir.path(), TimeUnit::Seconds),
            Err(ExportError::NameCollisionWithDifferentContent(_))
        ));
        assert!(matches!(
            write_annotation(&BeatAnnotation::default(), SubsetKind::SingleTiming, dir.path(), TimeUnit::Seconds),
            Err(ExportError::EmptyAnnotation)
        ));
    }

    #[test]
    fn milliseconds_unit() {
        let text = render_annotation(&three_beats(), TimeUnit::Milliseconds);
        assert_eq!(text, "1000.000\t1\n1500.000\t2\n2000.000\t3\n");
        let back = parse_annotation(&text, TimeUnit::Milliseconds).unwrap();
        assert_eq!(back.times(), vec![1.0, 1.5, 2.0]);
    }

    #[test]
    fn parse_reconstructs_segments() {
        let pts = [
            TimingPoint::uninherited(0.0, 500.0, 4),
            TimingPoint::uninherited(2250.0, 600.0, 3),
            TimingPoint::uninherited(6000.0, 400.0, 4),
        ];
        let g = generate_grid(&pts, 9.0).unwrap();
        let back = parse_annotation(&render_annotation(&g, TimeUnit::Seconds), TimeUnit::Seconds).unwrap();
        assert_eq!(back.segment_count(), 3);
        assert_eq!(back.meters(), vec![4, 3, 4]);
        assert_eq!(back.indices(), g.indices());
        assert!(matches!(parse_annotation("1.0 1\n", TimeUnit::Seconds), Err(ExportError::MalformedLine { .. })));
        assert!(matches!(parse_annotation("1.0\t0\n", TimeUnit::Seconds), Err(ExportError::MalformedLine { .. })));
    }

    fn entry_for(audio: &Path, bytes: &[u8]) -> CorpusEntry {
        fs::write(audio, bytes).unwrap();
        CorpusEntry {
            beatmapset_id: 1,
            audio_md5: md5_hex(bytes),
            audio_path: audio.to_owned(),
            osu_path: "a.osu".into(),
            chosen_difficulty: Default::default(),
            set_difficulty_names: vec![],
            subset: None,
            source_archive: "a.osz".into(),
        }
    }

    #[test]
    fn audio_copy() {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("Audio.MP3");
        let e = entry_for(&src, b"some audio bytes");
        let out = dir.path().join("audio");
        let p = copy_audio(&e, &out).unwrap();
        assert_eq!(p, out.join(format!("{}.mp3", e.audio_md5)));
        assert_eq!(md5_hex(&fs::read(&p).unwrap()), e.audio_md5);
        assert_eq!(copy_audio(&e, &out).unwrap(), p);

        fs::remove_file(&src).unwrap();
        let fresh = dir.path().join("audio2");
        assert!(matches!(copy_audio(&e, &fresh), Err(ExportError::IoFailure { .. })));
    }

    #[test]
    fn copy_detects_wrong_digest() {
        let dir = tempfile::tempdir().unwrap();
        let mut e = entry_for(&dir.path().join("a.mp3"), b"bytes");
        e.audio_md5 = md5_hex(b"something else");
        assert!(matches!(copy_audio(&e, dir.path()), Err(ExportError::HashMismatch { .. })));
    }

    #[test]
    fn manifest_order() {
        let rec = |name: &str| ExportRecord {
            output_filename: name.into(),
            audio_md5: MD5.into(),
            beatmapset_id: 1,
            subset: SubsetKind::MultiWide,
            n_beats: 10,
            n_segments: 2,
        };
        assert_eq!(render_manifest(&[]), format!("{MANIFEST_HEADER}\n"));
        let a = render_manifest(&[rec("b"), rec("a")]);
        let b = render_manifest(&[rec("a"), rec("b")]);
        assert_eq!(a, b);
        assert_eq!(a.lines().count(), 3);
        assert!(a.lines().nth(1).unwrap().starts_with("a\t"));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.tsv");
        write_manifest(&[rec("x")], &path).unwrap();
        assert_eq!(fs::read_to_string(path).unwrap().lines().count(), 2);
    }
}
