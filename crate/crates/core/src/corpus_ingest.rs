//! Archive unpacking, audio hashing, difficulty selection and catalog filtering.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Component, Path, PathBuf};

use md5::{Digest, Md5};
use thiserror::Error;

use crate::osu_format::BeatmapDifficulty;
use crate::partition::{SubsetClass, SubsetKind};

pub const AUDIO_EXTENSIONS: [&str; 3] = ["mp3", "ogg", "wav"];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("corrupt archive {path}: {reason}")]
    CorruptArchive { path: PathBuf, reason: String },
    #[error("archive member {0:?} escapes the extraction directory")]
    UnsafeMemberPath(String),
    #[error("malformed line {line} in {what}: {text:?}")]
    MalformedLine { what: &'static str, line: usize, text: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Lowercase hex MD5 of `bytes`.
pub fn md5_hex(bytes: &[u8]) -> String {
    let digest = Md5::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn has_extension(path: &Path, exts: &[&str]) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| exts.iter().any(|x| x.eq_ignore_ascii_case(e)))
}

pub fn is_osu_file(path: &Path) -> bool {
    has_extension(path, &["osu"])
}

pub fn is_audio_file(path: &Path) -> bool {
    has_extension(path, &AUDIO_EXTENSIONS)
}

fn safe_member_path(name: &str) -> Option<PathBuf> {
    let normalized = name.replace('\\', "/");
    let path = Path::new(&normalized);
    let mut out = PathBuf::new();
    for comp in path.components() {
        match comp {
            Component::Normal(c) => out.push(c),
            Component::CurDir => {}
            Component::ParentDir | Component::RootDir | Component::Prefix(_) => return None,
        }
    }
    // Windows drive letters survive as a normal component on unix.
    if normalized.contains(':') || out.as_os_str().is_empty() {
        return None;
    }
    Some(out)
}

/// Extracts every member of a `.osz` archive under `work_dir` and returns the
/// paths of the `.osu` and audio members, sorted.
///
/// All member names are checked before anything is written.
pub fn unpack_osz(archive_path: &Path, work_dir: &Path) -> Result<Vec<PathBuf>, IngestError> {
    let corrupt = |reason: String| IngestError::CorruptArchive {
        path: archive_path.to_owned(),
        reason,
    };
    let file = fs::File::open(archive_path)?;
    let mut archive = zip::ZipArchive::new(file).map_err(|e| corrupt(e.to_string()))?;

    let mut members = Vec::with_capacity(archive.len());
    for i in 0..archive.len() {
        let entry = archive.by_index_raw(i).map_err(|e| corrupt(e.to_string()))?;
        let name = entry.name().to_owned();
        let rel = safe_member_path(&name).ok_or_else(|| IngestError::UnsafeMemberPath(name.clone()))?;
        members.push((i, rel, entry.is_dir()));
    }

    fs::create_dir_all(work_dir)?;
    let mut wanted = Vec::new();
    for (i, rel, is_dir) in members {
        let dest = work_dir.join(&rel);
        if is_dir {
            fs::create_dir_all(&dest)?;
            continue;
        }
        if let Some(parent) = dest.parent() {
            fs::create_dir_all(parent)?;
        }
        let mut entry = archive.by_index(i).map_err(|e| corrupt(e.to_string()))?;
        let mut out = fs::File::create(&dest)?;
        io::copy(&mut entry, &mut out).map_err(|e| corrupt(format!("{}: {e}", rel.display())))?;
        if is_osu_file(&dest) || is_audio_file(&dest) {
            wanted.push(dest);
        }
    }
    wanted.sort();
    Ok(wanted)
}

fn contains_ignore_case(haystack: &str, needle: &str) -> bool {
    haystack.to_lowercase().contains(&needle.to_lowercase())
}

/// Picks one difficulty per referenced audio file and returns its index.
///
/// A version name containing "Insane" wins; otherwise the highest overall
/// difficulty; remaining ties go to the lexicographically smallest name.
pub fn select_difficulty_indices(difficulties: &[BeatmapDifficulty]) -> BTreeMap<String, usize> {
    let mut best: BTreeMap<String, usize> = BTreeMap::new();
    for (i, d) in difficulties.iter().enumerate() {
        let better = match best.get(&d.audio_filename) {
            None => true,
            Some(&j) => {
                let cur = &difficulties[j];
                let key = |x: &BeatmapDifficulty| contains_ignore_case(&x.version_name, "insane");
                key(d)
                    .cmp(&key(cur))
                    .then(d.overall_difficulty.total_cmp(&cur.overall_difficulty))
                    .then(cur.version_name.cmp(&d.version_name))
                    .is_gt()
            }
        };
        if better {
            best.insert(d.audio_filename.clone(), i);
        }
    }
    best
}

pub fn select_difficulty(difficulties: &[BeatmapDifficulty]) -> BTreeMap<String, BeatmapDifficulty> {
    select_difficulty_indices(difficulties)
        .into_iter()
        .map(|(audio, i)| (audio, difficulties[i].clone()))
        .collect()
}

/// One annotation-to-be: a beatmap set paired with one of its audio files.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusEntry {
    pub beatmapset_id: i64,
    pub audio_md5: String,
    pub audio_path: PathBuf,
    pub osu_path: PathBuf,
    pub chosen_difficulty: BeatmapDifficulty,
    /// Version names of every difficulty in the set.
    pub set_difficulty_names: Vec<String>,
    pub subset: Option<SubsetClass>,
    pub source_archive: PathBuf,
}

impl CorpusEntry {
    /// Re-hashes the audio file and compares with `audio_md5`.
    pub fn verify_audio(&self) -> io::Result<bool> {
        Ok(md5_hex(&fs::read(&self.audio_path)?) == self.audio_md5)
    }

    pub fn to_record(&self, base: &Path) -> CatalogRecord {
        let rel = |p: &Path| {
            p.strip_prefix(base)
                .unwrap_or(p)
                .to_string_lossy()
                .replace('\\', "/")
        };
        CatalogRecord {
            audio_md5: self.audio_md5.clone(),
            beatmapset_id: self.beatmapset_id,
            audio_relpath: rel(&self.audio_path),
            osu_relpath: rel(&self.osu_path),
            subset: self.subset.map(|s| s.kind),
        }
    }
}

/// A catalog line: `audio_md5<TAB>beatmapset_id<TAB>audio_relpath<TAB>osu_relpath<TAB>subset`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct CatalogRecord {
    pub audio_md5: String,
    pub beatmapset_id: i64,
    pub audio_relpath: String,
    pub osu_relpath: String,
    pub subset: Option<SubsetKind>,
}

pub const UNSET_SUBSET: &str = "unset";

impl CatalogRecord {
    pub fn to_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}",
            self.audio_md5,
            self.beatmapset_id,
            self.audio_relpath,
            self.osu_relpath,
            self.subset.map_or(UNSET_SUBSET, SubsetKind::label)
        )
    }
}

pub fn write_catalog(records: &[CatalogRecord]) -> String {
    records.iter().map(|r| r.to_line() + "\n").collect()
}

pub fn parse_catalog(text: &str) -> Result<Vec<CatalogRecord>, IngestError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = || IngestError::MalformedLine {
            what: "catalog",
            line: i + 1,
            text: line.to_owned(),
        };
        let fields: Vec<&str> = line.split('\t').collect();
        let [md5, set, audio, osu, subset] = fields[..] else {
            return Err(bad());
        };
        let subset = match subset {
            UNSET_SUBSET => None,
            s => Some(s.parse::<SubsetKind>().map_err(|_| bad())?),
        };
        out.push(CatalogRecord {
            audio_md5: md5.to_owned(),
            beatmapset_id: set.parse().map_err(|_| bad())?,
            audio_relpath: audio.to_owned(),
            osu_relpath: osu.to_owned(),
            subset,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SidecarRecord {
    pub favorites: u64,
    pub ranked: bool,
}

/// Per-set website metadata the archives do not carry.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SidecarMetadata(pub BTreeMap<i64, SidecarRecord>);

impl SidecarMetadata {
    pub fn get(&self, beatmapset_id: i64) -> Option<&SidecarRecord> {
        self.0.get(&beatmapset_id)
    }

    /// Reads `beatmapset_id<TAB>favorites<TAB>ranked(0|1)` lines. Blank lines
    /// and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, IngestError> {
        let mut map = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let bad = || IngestError::MalformedLine {
                what: "sidecar metadata",
                line: i + 1,
                text: line.to_owned(),
            };
            let fields: Vec<&str> = trimmed.split('\t').map(str::trim).collect();
            let [id, favorites, ranked] = fields[..] else {
                return Err(bad());
            };
            let id: i64 = id.parse().ok().filter(|&id| id > 0).ok_or_else(bad)?;
            let favorites: u64 = favorites.parse().map_err(|_| bad())?;
            let ranked = match ranked {
                "0" => false,
                "1" => true,
                _ => return Err(bad()),
            };
            map.insert(id, SidecarRecord { favorites, ranked });
        }
        Ok(SidecarMetadata(map))
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FilterCriteria {
    pub min_favorites: u64,
    /// `None` accepts every game mode.
    pub require_mode: Option<i32>,
    /// Matched case-insensitively against every difficulty name in the set;
    /// `None` disables the check.
    pub require_difficulty_substring: Option<String>,
    pub require_ranked: bool,
}

impl Default for FilterCriteria {
    fn default() -> Self {
        FilterCriteria {
            min_favorites: 200,
            require_mode: Some(0),
            require_difficulty_substring: Some("Insane".into()),
            require_ranked: true,
        }
    }
}

impl FilterCriteria {
    pub fn needs_sidecar(&self) -> bool {
        self.min_favorites > 0 || self.require_ranked
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FilterOutcome {
    pub kept: Vec<CorpusEntry>,
    pub dropped: Vec<(CorpusEntry, String)>,
}

fn rejection(entry: &CorpusEntry, meta: &SidecarMetadata, criteria: &FilterCriteria) -> Option<String> {
    if let Some(mode) = criteria.require_mode {
        if entry.chosen_difficulty.mode != mode {
            return Some(format!("mode {} != {mode}", entry.chosen_difficulty.mode));
        }
    }
    if let Some(sub) = &criteria.require_difficulty_substring {
        if !entry.set_difficulty_names.iter().any(|n| contains_ignore_case(n, sub)) {
            return Some(format!("no difficulty named like {sub:?}"));
        }
    }
    if criteria.needs_sidecar() {
        let Some(rec) = meta.get(entry.beatmapset_id) else {
            return Some("no metadata".into());
        };
        if criteria.require_ranked && !rec.ranked {
            return Some("not ranked".into());
        }
        if rec.favorites < criteria.min_favorites {
            return Some(format!("{} favorites < {}", rec.favorites, criteria.min_favorites));
        }
    }
    None
}

/// Keeps entries meeting every criterion; the rest come back with a reason.
pub fn filter_catalog(entries: Vec<CorpusEntry>, meta: &SidecarMetadata, criteria: &FilterCriteria) -> FilterOutcome {
    let mut out = FilterOutcome::default();
    for entry in entries {
        match rejection(&entry, meta, criteria) {
            None => out.kept.push(entry),
            Some(reason) => {
                log::info!("dropping set {} ({}): {reason}", entry.beatmapset_id, entry.audio_md5);
                out.dropped.push((entry, reason));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    #[test]
    fn md5_vectors() {
        assert_eq!(md5_hex(b""), "d41d8cd98f00b204e9800998ecf8427e");
        assert_eq!(md5_hex(b"abc"), "900150983cd24fb0d6963f7d28e17f72");
        assert_ne!(md5_hex(b"audio one"), md5_hex(b"audio two"));
    }

    #[test]
    fn unpack_examples() {
        let dir = tempfile::tempdir().unwrap();
        let osz = dir.path().join("set.osz");
        synth::write_zip(
            &osz,
            &[
                ("a.osu", b"x"),
                ("b.osu", b"y"),
                ("c.osu", b"z"),
                ("audio.mp3", b"mp3"),
                ("bg.jpg", b"jpg"),
            ],
        )
        .unwrap();
        let out = dir.path().join("out");
        let paths = unpack_osz(&osz, &out).unwrap();
        assert_eq!(paths.len(), 4);
        assert!(out.join("bg.jpg").exists());
        assert_eq!(paths.iter().filter(|p| is_osu_file(p)).count(), 3);

        synth::write_zip(&osz, &[("audio.mp3", b"mp3")]).unwrap();
        let paths = unpack_osz(&osz, &dir.path().join("out2")).unwrap();
        assert!(paths.iter().all(|p| !is_osu_file(p)));
    }

    #[test]
    fn unpack_rejects_traversal_and_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let osz = dir.path().join("evil.osz");
        synth::write_zip(&osz, &[("ok.osu", b"x"), ("../evil", b"y")]).unwrap();
        let out = dir.path().join("out");
        assert!(matches!(unpack_osz(&osz, &out), Err(IngestError::UnsafeMemberPath(n)) if n == "../evil"));
        assert!(!out.join("ok.osu").exists());
        assert!(!dir.path().join("evil").exists());

        let junk = dir.path().join("junk.osz");
        fs::write(&junk, b"definitely not a zip").unwrap();
        assert!(matches!(unpack_osz(&junk, &out), Err(IngestError::CorruptArchive { .. })));
    }

    #[test]
    fn member_path_rules() {
        assert_eq!(safe_member_path("a/b.osu"), Some(PathBuf::from("a/b.osu")));
        assert_eq!(safe_member_path("./a.osu"), Some(PathBuf::from("a.osu")));
        for bad in ["../x", "/etc/passwd", "a/../../x", "C:\\x", "..\\x", ""] {
            assert_eq!(safe_member_path(bad), None, "{bad}");
        }
    }

    fn diff(version: &str, od: f64, audio: &str) -> BeatmapDifficulty {
        BeatmapDifficulty {
            version_name: version.into(),
            overall_difficulty: od,
            audio_filename: audio.into(),
            ..Default::default()
        }
    }

    #[test]
    fn selection_rules() {
        let ds = [diff("Easy", 2.0, "audio.mp3"), diff("Insane", 7.0, "audio.mp3"), diff("Extra", 9.0, "audio.mp3")];
        assert_eq!(select_difficulty(&ds)["audio.mp3"].version_name, "Insane");

        let one = [diff("Normal", 4.0, "a.mp3")];
        assert_eq!(select_difficulty(&one)["a.mp3"], one[0]);

        let ds = [diff("Hard", 6.0, "a.mp3"), diff("Lunatic", 8.0, "a.mp3")];
        assert_eq!(select_difficulty(&ds)["a.mp3"].version_name, "Lunatic");

        let ds = [diff("B", 8.0, "a.mp3"), diff("A", 8.0, "a.mp3"), diff("x's insane", 5.0, "b.mp3")];
        let sel = select_difficulty(&ds);
        assert_eq!(sel.len(), 2);
        assert_eq!(sel["a.mp3"].version_name, "A");
        assert!(select_difficulty(&[]).is_empty());
    }

    fn entry(set: i64, mode: i32, names: &[&str]) -> CorpusEntry {
        CorpusEntry {
            beatmapset_id: set,
            audio_md5: md5_hex(set.to_string().as_bytes()),
            audio_path: "audio.mp3".into(),
            osu_path: "a.osu".into(),
            chosen_difficulty: BeatmapDifficulty {
                mode,
                ..Default::default()
            },
            set_difficulty_names: names.iter().map(|s| s.to_string()).collect(),
            subset: None,
            source_archive: "x.osz".into(),
        }
    }

    #[test]
    fn filtering() {
        let meta = SidecarMetadata::parse("1\t350\t1\n2\t150\t1\n4\t999\t0\n5\t999\t1\n").unwrap();
        let entries = vec![
            entry(1, 0, &["Insane"]),
            entry(2, 0, &["Insane"]),
            entry(3, 0, &["Insane"]),
            entry(4, 0, &["Insane"]),
            entry(5, 3, &["Insane"]),
            entry(1, 0, &["Hard"]),
        ];
        let out = filter_catalog(entries.clone(), &meta, &FilterCriteria::default());
        assert_eq!(out.kept, vec![entries[0].clone()]);
        let reasons: Vec<&str> = out.dropped.iter().map(|(_, r)| r.as_str()).collect();
        assert_eq!(reasons[0], "150 favorites < 200");
        assert_eq!(reasons[1], "no metadata");
        assert_eq!(reasons[2], "not ranked");

        let lax = FilterCriteria {
            min_favorites: 0,
            require_ranked: false,
            require_mode: None,
            require_difficulty_substring: None,
        };
        let out = filter_catalog(entries.clone(), &SidecarMetadata::default(), &lax);
        assert_eq!(out.kept.len(), entries.len());
    }

    #[test]
    fn sidecar_and_catalog_formats() {
        assert!(SidecarMetadata::parse("1\t2\n").is_err());
        assert!(SidecarMetadata::parse("0\t2\t1\n").is_err());
        assert!(SidecarMetadata::parse("1\t2\tyes\n").is_err());
        let rec = CatalogRecord {
            audio_md5: "d41d8cd98f00b204e9800998ecf8427e".into(),
            beatmapset_id: 7,
            audio_relpath: "7/audio.mp3".into(),
            osu_relpath: "7/x.osu".into(),
            subset: Some(SubsetKind::MultiNarrow),
        };
        let unset = CatalogRecord { subset: None, ..rec.clone() };
        let text = write_catalog(&[rec.clone(), unset.clone()]);
        assert_eq!(
            text.lines().next().unwrap(),
            "d41d8cd98f00b204e9800998ecf8427e\t7\t7/audio.mp3\t7/x.osu\tmulti_narrow"
        );
        assert_eq!(parse_catalog(&text).unwrap(), vec![rec, unset]);
        assert!(parse_catalog("a\tb\n").is_err());
    }
}
