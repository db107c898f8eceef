//! Synthetic inputs: silent CBR MP3 streams and `.osz` archives.
//!
//! Used by the test suites and benchmarks, and handy for building small
//! reproducible corpora by hand.

use std::io::{self, Write};
use std::path::Path;

use crate::audio_probe::MpegVersion;
use crate::osu_format::{self, BeatmapDifficulty, TimingPoint};

#[derive(Debug, Clone)]
pub struct Mp3Spec {
    pub version: MpegVersion,
    pub sample_rate_hz: u32,
    pub bitrate_kbps: u32,
    pub mono: bool,
}

impl Default for Mp3Spec {
    fn default() -> Self {
        Mp3Spec {
            version: MpegVersion::Mpeg1,
            sample_rate_hz: 44100,
            bitrate_kbps: 128,
            mono: false,
        }
    }
}

impl Mp3Spec {
    fn header(&self, padding: bool) -> [u8; 4] {
        let (version_bits, base) = match self.version {
            MpegVersion::Mpeg1 => (0b11, self.sample_rate_hz),
            MpegVersion::Mpeg2 => (0b10, self.sample_rate_hz * 2),
            MpegVersion::Mpeg25 => (0b00, self.sample_rate_hz * 4),
        };
        let rate_idx = match base {
            44100 => 0,
            48000 => 1,
            32000 => 2,
            _ => panic!("unsupported sample rate {}", self.sample_rate_hz),
        };
        let table: &[u32] = match self.version {
            MpegVersion::Mpeg1 => &[0, 32, 40, 48, 56, 64, 80, 96, 112, 128, 160, 192, 224, 256, 320],
            _ => &[0, 8, 16, 24, 32, 40, 48, 56, 64, 80, 96, 112, 128, 144, 160],
        };
        let br_idx = table
            .iter()
            .position(|&b| b == self.bitrate_kbps && b != 0)
            .unwrap_or_else(|| panic!("unsupported bitrate {}", self.bitrate_kbps)) as u8;
        [
            0xFF,
            0xE0 | (version_bits << 3) | (0b01 << 1) | 1,
            (br_idx << 4) | (rate_idx << 2) | (u8::from(padding) << 1),
            if self.mono { 0b1100_0000 } else { 0 },
        ]
    }

    fn frame_len(&self, padding: bool) -> usize {
        let coeff = match self.version {
            MpegVersion::Mpeg1 => 144_000,
            _ => 72_000,
        };
        (coeff * self.bitrate_kbps / self.sample_rate_hz) as usize + usize::from(padding)
    }

    fn side_info_len(&self) -> usize {
        match (self.version, self.mono) {
            (MpegVersion::Mpeg1, false) => 32,
            (MpegVersion::Mpeg1, true) => 17,
            (_, false) => 17,
            (_, true) => 9,
        }
    }

    /// Padding follows the usual accumulator so the average frame length
    /// matches the nominal bitrate (relevant at 44.1 kHz).
    fn frames(&self, count: usize) -> Vec<u8> {
        let mut out = Vec::new();
        let coeff = match self.version {
            MpegVersion::Mpeg1 => 144_000u64,
            _ => 72_000,
        };
        let rem = (coeff * u64::from(self.bitrate_kbps)) % u64::from(self.sample_rate_hz);
        let mut acc = 0u64;
        for _ in 0..count {
            acc += rem;
            let padding = acc >= u64::from(self.sample_rate_hz);
            if padding {
                acc -= u64::from(self.sample_rate_hz);
            }
            out.extend_from_slice(&self.header(padding));
            out.resize(out.len() + self.frame_len(padding) - 4, 0);
        }
        out
    }
}

/// `frames` silent CBR frames.
pub fn mp3_cbr(spec: &Mp3Spec, frames: usize) -> Vec<u8> {
    spec.frames(frames)
}

/// A Xing tag frame announcing `frames` audio frames, followed by those frames.
pub fn mp3_with_xing(spec: &Mp3Spec, frames: u32) -> Vec<u8> {
    let mut tag = spec.header(false).to_vec();
    tag.resize(tag.len() + spec.side_info_len(), 0);
    tag.extend_from_slice(b"Xing");
    tag.extend_from_slice(&1u32.to_be_bytes());
    tag.extend_from_slice(&frames.to_be_bytes());
    tag.resize(spec.frame_len(false), 0);
    tag.extend(spec.frames(frames as usize));
    tag
}

/// An ID3v2.4 tag whose body is `body_len` zero bytes.
pub fn id3v2_tag(body_len: usize) -> Vec<u8> {
    assert!(body_len < 1 << 28);
    let mut out = b"ID3\x04\x00\x00".to_vec();
    for shift in [21, 14, 7, 0] {
        out.push(((body_len >> shift) & 0x7F) as u8);
    }
    out.resize(10 + body_len, 0);
    out
}

/// Writes a ZIP archive containing `members` (name, contents) to `path`.
pub fn write_zip(path: &Path, members: &[(&str, &[u8])]) -> io::Result<()> {
    let file = std::fs::File::create(path)?;
    let mut zip = zip::ZipWriter::new(file);
    let opts = zip::write::SimpleFileOptions::default()
        .compression_method(zip::CompressionMethod::Deflated)
        .last_modified_time(zip::DateTime::default());
    for (name, data) in members {
        zip.start_file(*name, opts).map_err(io::Error::other)?;
        zip.write_all(data)?;
    }
    zip.finish().map_err(io::Error::other)?;
    Ok(())
}

/// A standard-mode difficulty with the given timing points and one hit
/// object on each of the first few beats.
pub fn difficulty(beatmapset_id: i64, version_name: &str, audio_filename: &str, timing_points: Vec<TimingPoint>) -> BeatmapDifficulty {
    let hit_object_times_ms = timing_points
        .iter()
        .filter(|tp| tp.uninherited)
        .flat_map(|tp| (0..4).map(move |k| tp.time_ms + k as f64 * tp.beat_length_ms))
        .collect();
    BeatmapDifficulty {
        format_version: 14,
        audio_filename: audio_filename.to_owned(),
        mode: 0,
        version_name: version_name.to_owned(),
        beatmapset_id,
        overall_difficulty: 8.0,
        timing_points,
        hit_object_times_ms,
        title: format!("Synthetic {beatmapset_id}"),
        artist: "Nobody".to_owned(),
    }
}

/// Writes an `.osz` holding `audio` under its file name plus one `.osu`
/// per difficulty.
pub fn write_osz(path: &Path, audio_filename: &str, audio: &[u8], difficulties: &[BeatmapDifficulty]) -> io::Result<()> {
    let texts: Vec<(String, String)> = difficulties
        .iter()
        .map(|d| (format!("{} - {} [{}].osu", d.artist, d.title, d.version_name), osu_format::write_osu(d)))
        .collect();
    let mut members: Vec<(&str, &[u8])> = vec![(audio_filename, audio)];
    members.extend(texts.iter().map(|(n, t)| (n.as_str(), t.as_bytes())));
    write_zip(path, &members)
}
