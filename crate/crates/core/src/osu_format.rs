//! Parser for the `.osu` plain-text beatmap format.
//!
//! Only the sections needed to build beat grids are interpreted: `[General]`,
//! `[Metadata]`, `[Difficulty]`, `[TimingPoints]` and `[HitObjects]`. Everything
//! else is skipped.

use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OsuError {
    #[error("missing \"osu file format v<N>\" header")]
    MissingFormatHeader,
    #[error("missing [General] section")]
    MissingGeneralSection,
    #[error("no uninherited timing points")]
    MissingTimingPoints,
    #[error("malformed line {line}: {text:?}")]
    MalformedLine { line: usize, text: String },
}

impl OsuError {
    fn malformed(line: usize, text: &str) -> Self {
        OsuError::MalformedLine {
            line,
            text: text.to_owned(),
        }
    }

    fn at_line(self, line: usize) -> Self {
        match self {
            OsuError::MalformedLine { text, .. } => OsuError::MalformedLine { line, text },
            other => other,
        }
    }
}

/// One line of `[TimingPoints]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingPoint {
    pub time_ms: f64,
    /// Milliseconds per beat for uninherited points; a negative velocity
    /// multiplier placeholder for inherited ones.
    pub beat_length_ms: f64,
    pub meter: u32,
    pub sample_set: i32,
    pub sample_index: i32,
    pub volume: i32,
    pub uninherited: bool,
    pub effects: u32,
}

impl TimingPoint {
    pub const EFFECT_KIAI: u32 = 1;
    pub const EFFECT_OMIT_FIRST_BARLINE: u32 = 8;

    /// Convenience constructor for an uninherited point with default sample fields.
    pub fn uninherited(time_ms: f64, beat_length_ms: f64, meter: u32) -> Self {
        TimingPoint {
            time_ms,
            beat_length_ms,
            meter,
            sample_set: 0,
            sample_index: 0,
            volume: 100,
            uninherited: true,
            effects: 0,
        }
    }

    /// Convenience constructor for an inherited (velocity) point.
    pub fn inherited(time_ms: f64, multiplier_placeholder: f64) -> Self {
        TimingPoint {
            time_ms,
            beat_length_ms: multiplier_placeholder,
            meter: 4,
            sample_set: 0,
            sample_index: 0,
            volume: 100,
            uninherited: false,
            effects: 0,
        }
    }

    pub fn omits_first_barline(&self) -> bool {
        self.effects & Self::EFFECT_OMIT_FIRST_BARLINE != 0
    }

    pub fn bpm(&self) -> Option<f64> {
        (self.uninherited && self.beat_length_ms > 0.0).then(|| 60_000.0 / self.beat_length_ms)
    }
}

/// One parsed `.osu` difficulty.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BeatmapDifficulty {
    pub format_version: i32,
    pub audio_filename: String,
    pub mode: i32,
    pub version_name: String,
    /// `-1` when the file predates the `BeatmapSetID` key.
    pub beatmapset_id: i64,
    pub overall_difficulty: f64,
    pub timing_points: Vec<TimingPoint>,
    pub hit_object_times_ms: Vec<f64>,
    pub title: String,
    pub artist: String,
}

impl BeatmapDifficulty {
    pub fn uninherited_points(&self) -> impl Iterator<Item = &TimingPoint> {
        self.timing_points.iter().filter(|tp| tp.uninherited)
    }

    /// Time of the last hit object, in milliseconds.
    pub fn last_hit_ms(&self) -> Option<f64> {
        self.hit_object_times_ms.iter().copied().reduce(f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    None,
    General,
    Metadata,
    Difficulty,
    TimingPoints,
    HitObjects,
    Other,
}

impl Section {
    fn from_header(name: &str) -> Self {
        match name {
            "General" => Section::General,
            "Metadata" => Section::Metadata,
            "Difficulty" => Section::Difficulty,
            "TimingPoints" => Section::TimingPoints,
            "HitObjects" => Section::HitObjects,
            _ => Section::Other,
        }
    }
}

fn parse_format_header(line: &str) -> Option<i32> {
    line.trim()
        .strip_prefix("osu file format v")
        .and_then(|v| v.trim().parse().ok())
}

fn split_key_value(line: &str) -> Option<(&str, &str)> {
    line.split_once(':').map(|(k, v)| (k.trim(), v.trim()))
}

fn parse_num<T: std::str::FromStr>(field: &str) -> Option<T> {
    field.trim().parse().ok()
}

/// Parses the full text of one `.osu` file.
pub fn parse_osu(text: &str) -> Result<BeatmapDifficulty, OsuError> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));

    let format_version = loop {
        match lines.next() {
            Some((_, l)) if l.trim().is_empty() => continue,
            Some((_, l)) => break parse_format_header(l).ok_or(OsuError::MissingFormatHeader)?,
            None => return Err(OsuError::MissingFormatHeader),
        }
    };

    let mut map = BeatmapDifficulty {
        format_version,
        beatmapset_id: -1,
        ..Default::default()
    };
    let mut section = Section::None;
    let mut saw_general = false;

    for (line_no, raw) in lines {
        let line = raw.trim_end();
        let trimmed = line.trim_start();
        if trimmed.is_empty() || trimmed.starts_with("//") {
            continue;
        }
        if let Some(name) = trimmed.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            section = Section::from_header(name.trim());
            saw_general |= section == Section::General;
            continue;
        }
        match section {
            Section::General => {
                if let Some((key, value)) = split_key_value(trimmed) {
                    match key {
                        "AudioFilename" => map.audio_filename = value.to_owned(),
                        "Mode" => {
                            map.mode = parse_num(value)
                                .ok_or_else(|| OsuError::malformed(line_no, raw))?
                        }
                        _ => {}
                    }
                }
            }
            Section::Metadata => {
                if let Some((key, value)) = split_key_value(trimmed) {
                    match key {
                        "Title" => map.title = value.to_owned(),
                        "Artist" => map.artist = value.to_owned(),
                        "Version" => map.version_name = value.to_owned(),
                        "BeatmapSetID" => {
                            map.beatmapset_id = parse_num(value)
                                .ok_or_else(|| OsuError::malformed(line_no, raw))?
                        }
                        _ => {}
                    }
                }
            }
            Section::Difficulty => {
                if let Some(("OverallDifficulty", value)) = split_key_value(trimmed) {
                    map.overall_difficulty =
                        parse_num(value).ok_or_else(|| OsuError::malformed(line_no, raw))?;
                }
            }
            Section::TimingPoints => {
                let tp = parse_timing_point_line(trimmed, format_version)
                    .map_err(|e| e.at_line(line_no))?;
                map.timing_points.push(tp);
            }
            Section::HitObjects => {
                let t = parse_hit_object_line(trimmed).map_err(|e| e.at_line(line_no))?;
                map.hit_object_times_ms.push(t);
            }
            Section::None | Section::Other => {}
        }
    }

    if !saw_general {
        return Err(OsuError::MissingGeneralSection);
    }
    // Stable: equal times keep file order.
    map.timing_points
        .sort_by(|a, b| a.time_ms.total_cmp(&b.time_ms));
    if !map.timing_points.iter().any(|tp| tp.uninherited) {
        return Err(OsuError::MissingTimingPoints);
    }
    debug_assert!(map
        .timing_points
        .iter()
        .all(|tp| !tp.uninherited || tp.beat_length_ms > 0.0));
    Ok(map)
}

/// Parses one `[TimingPoints]` line.
///
/// Full lines are `time,beatLength,meter,sampleSet,sampleIndex,volume,uninherited,effects`.
/// Shorter lines from older format versions take `meter=4`, `volume=100`,
/// `effects=0`, and infer `uninherited` from the sign of `beatLength`. The flag
/// field is authoritative whenever it is present, whatever `format_version` says.
///
/// The returned `MalformedLine` carries line number 0; [`parse_osu`] fills in
/// the real one.
pub fn parse_timing_point_line(line: &str, _format_version: i32) -> Result<TimingPoint, OsuError> {
    let bad = || OsuError::malformed(0, line);
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() < 2 {
        return Err(bad());
    }

    let time_ms: f64 = parse_num(fields[0]).ok_or_else(bad)?;
    let beat_length_ms: f64 = parse_num(fields[1]).ok_or_else(bad)?;
    if !time_ms.is_finite() || !beat_length_ms.is_finite() {
        return Err(bad());
    }

    let int_field = |idx: usize, default: i64| -> Result<i64, OsuError> {
        match fields.get(idx) {
            None => Ok(default),
            Some(&"") => Ok(default),
            Some(f) => parse_num::<i64>(f).ok_or_else(bad),
        }
    };

    let meter = int_field(2, 4)?;
    // A handful of ranked maps carry meter 0 on inherited lines.
    let meter = if meter >= 1 { meter as u32 } else { 4 };
    let sample_set = int_field(3, 0)? as i32;
    let sample_index = int_field(4, 0)? as i32;
    let volume = int_field(5, 100)? as i32;
    let uninherited = match fields.get(6) {
        Some(f) if !f.is_empty() => parse_num::<i64>(f).ok_or_else(bad)? != 0,
        _ => beat_length_ms > 0.0,
    };
    let effects = int_field(7, 0)?;
    if effects < 0 {
        return Err(bad());
    }
    if uninherited && beat_length_ms <= 0.0 {
        return Err(bad());
    }

    Ok(TimingPoint {
        time_ms,
        beat_length_ms,
        meter,
        sample_set,
        sample_index,
        volume,
        uninherited,
        effects: effects as u32,
    })
}

fn parse_hit_object_line(line: &str) -> Result<f64, OsuError> {
    line.split(',')
        .nth(2)
        .and_then(parse_num::<f64>)
        .filter(|t| t.is_finite())
        .ok_or_else(|| OsuError::malformed(0, line))
}

/// Extracts hit-object times (third comma-separated field) in file order.
pub fn parse_hit_object_times<S: AsRef<str>>(section_lines: &[S]) -> Result<Vec<f64>, OsuError> {
    section_lines
        .iter()
        .enumerate()
        .filter(|(_, l)| {
            let l = l.as_ref().trim();
            !l.is_empty() && !l.starts_with("//")
        })
        .map(|(i, l)| parse_hit_object_line(l.as_ref().trim()).map_err(|e| e.at_line(i + 1)))
        .collect()
}

/// Renders a difficulty in the canonical `.osu` layout understood by [`parse_osu`].
///
/// Only the fields carried by [`BeatmapDifficulty`] are written; hit objects
/// become plain circles at the centre of the playfield.
pub fn write_osu(map: &BeatmapDifficulty) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "osu file format v{}", map.format_version);
    let _ = writeln!(out);
    let _ = writeln!(out, "[General]");
    let _ = writeln!(out, "AudioFilename: {}", map.audio_filename);
    let _ = writeln!(out, "Mode: {}", map.mode);
    let _ = writeln!(out);
    let _ = writeln!(out, "[Metadata]");
    let _ = writeln!(out, "Title:{}", map.title);
    let _ = writeln!(out, "Artist:{}", map.artist);
    let _ = writeln!(out, "Version:{}", map.version_name);
    let _ = writeln!(out, "BeatmapSetID:{}", map.beatmapset_id);
    let _ = writeln!(out);
    let _ = writeln!(out, "[Difficulty]");
    let _ = writeln!(out, "OverallDifficulty:{}", map.overall_difficulty);
    let _ = writeln!(out);
    let _ = writeln!(out, "[TimingPoints]");
    for tp in &map.timing_points {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            tp.time_ms,
            tp.beat_length_ms,
            tp.meter,
            tp.sample_set,
            tp.sample_index,
            tp.volume,
            u8::from(tp.uninherited),
            tp.effects
        );
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "[HitObjects]");
    for t in &map.hit_object_times_ms {
        let _ = writeln!(out, "256,192,{t},1,0");
    }
    out
}
