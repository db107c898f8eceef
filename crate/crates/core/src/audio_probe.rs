//! MP3 duration from frame headers, without decoding.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// How far past the ID3v2 tag we look for the first frame sync.
const SYNC_SEARCH_LIMIT: usize = 64 * 1024;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProbeError {
    #[error("no valid MPEG Layer III frame found")]
    NotMp3,
    #[error("no duration available: audio could not be probed and no override was given")]
    NoDurationAvailable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeMethod {
    FrameWalk,
    XingHeader,
    Override,
}

impl ProbeMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            ProbeMethod::FrameWalk => "frame_walk",
            ProbeMethod::XingHeader => "xing_header",
            ProbeMethod::Override => "override",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeWarning {
    /// The final frame ran past the end of the buffer and was dropped.
    TruncatedStream,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AudioInfo {
    pub duration_s: f64,
    pub sample_rate_hz: u32,
    pub frame_count: u64,
    pub method: ProbeMethod,
    pub warnings: Vec<ProbeWarning>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MpegVersion {
    Mpeg1,
    Mpeg2,
    Mpeg25,
}

/// A decoded Layer III frame header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameHeader {
    pub version: MpegVersion,
    pub has_crc: bool,
    pub bitrate_kbps: u32,
    pub sample_rate_hz: u32,
    pub padding: bool,
    pub mono: bool,
}

const BITRATES_V1_L3: [u32; 15] = [0, 32, 40, 48, 56, 64, 80, 96, 112, 128, 160, 192, 224, 256, 320];
const BITRATES_V2_L3: [u32; 15] = [0, 8, 16, 24, 32, 40, 48, 56, 64, 80, 96, 112, 128, 144, 160];

impl FrameHeader {
    /// Decodes four header bytes. Returns `None` for anything that is not a
    /// Layer III header with a concrete bitrate and sample rate.
    pub fn parse(bytes: &[u8]) -> Option<FrameHeader> {
        let b: [u8; 4] = bytes.get(..4)?.try_into().ok()?;
        if b[0] != 0xFF || b[1] & 0xE0 != 0xE0 {
            return None;
        }
        let version = match (b[1] >> 3) & 0b11 {
            0b00 => MpegVersion::Mpeg25,
            0b10 => MpegVersion::Mpeg2,
            0b11 => MpegVersion::Mpeg1,
            _ => return None,
        };
        if (b[1] >> 1) & 0b11 != 0b01 {
            return None; // not Layer III
        }
        let has_crc = b[1] & 1 == 0;
        let bitrate_idx = (b[2] >> 4) as usize;
        // 0 is free format, 15 is reserved.
        if bitrate_idx == 0 || bitrate_idx == 15 {
            return None;
        }
        let bitrate_kbps = match version {
            MpegVersion::Mpeg1 => BITRATES_V1_L3[bitrate_idx],
            _ => BITRATES_V2_L3[bitrate_idx],
        };
        let base_rate = match (b[2] >> 2) & 0b11 {
            0 => 44100,
            1 => 48000,
            2 => 32000,
            _ => return None,
        };
        let sample_rate_hz = match version {
            MpegVersion::Mpeg1 => base_rate,
            MpegVersion::Mpeg2 => base_rate / 2,
            MpegVersion::Mpeg25 => base_rate / 4,
        };
        Some(FrameHeader {
            version,
            has_crc,
            bitrate_kbps,
            sample_rate_hz,
            padding: (b[2] >> 1) & 1 == 1,
            mono: b[3] >> 6 == 0b11,
        })
    }

    pub fn samples_per_frame(&self) -> u32 {
        match self.version {
            MpegVersion::Mpeg1 => 1152,
            _ => 576,
        }
    }

    pub fn frame_len(&self) -> usize {
        let coeff = match self.version {
            MpegVersion::Mpeg1 => 144_000,
            _ => 72_000,
        };
        (coeff * self.bitrate_kbps / self.sample_rate_hz) as usize + usize::from(self.padding)
    }

    fn side_info_len(&self) -> usize {
        match (self.version, self.mono) {
            (MpegVersion::Mpeg1, false) => 32,
            (MpegVersion::Mpeg1, true) => 17,
            (_, false) => 17,
            (_, true) => 9,
        }
    }

    fn same_stream(&self, other: &FrameHeader) -> bool {
        self.version == other.version && self.sample_rate_hz == other.sample_rate_hz
    }
}

/// Length of a leading ID3v2 tag (header, body and optional footer), or 0.
pub fn id3v2_len(bytes: &[u8]) -> usize {
    if bytes.len() < 10 || &bytes[..3] != b"ID3" {
        return 0;
    }
    let size = bytes[6..10]
        .iter()
        .fold(0usize, |acc, &b| (acc << 7) | (b & 0x7F) as usize);
    let footer = if bytes[5] & 0x10 != 0 { 10 } else { 0 };
    10 + size + footer
}

fn header_at(bytes: &[u8], pos: usize) -> Option<FrameHeader> {
    bytes.get(pos..).and_then(FrameHeader::parse)
}

/// A header is accepted as the stream start when the following frame also
/// decodes, or when the frame ends exactly at the end of the buffer.
fn plausible_start(bytes: &[u8], pos: usize) -> Option<FrameHeader> {
    let h = header_at(bytes, pos)?;
    let next = pos + h.frame_len();
    if next == bytes.len() {
        return Some(h);
    }
    match header_at(bytes, next) {
        Some(n) if n.same_stream(&h) => Some(h),
        _ => None,
    }
}

fn find_first_frame(bytes: &[u8], from: usize) -> Option<(usize, FrameHeader)> {
    let end = bytes.len().min(from.saturating_add(SYNC_SEARCH_LIMIT));
    (from..end).find_map(|pos| plausible_start(bytes, pos).map(|h| (pos, h)))
}

/// Frame count from a Xing/Info tag in the first frame, if there is one.
fn xing_frame_count(bytes: &[u8], pos: usize, h: &FrameHeader) -> Option<u32> {
    let off = pos + 4 + if h.has_crc { 2 } else { 0 } + h.side_info_len();
    let tag = bytes.get(off..off + 4)?;
    if tag != b"Xing" && tag != b"Info" {
        return None;
    }
    let flags = u32::from_be_bytes(bytes.get(off + 4..off + 8)?.try_into().ok()?);
    if flags & 1 == 0 {
        return None;
    }
    let count = u32::from_be_bytes(bytes.get(off + 8..off + 12)?.try_into().ok()?);
    (count > 0).then_some(count)
}

fn is_trailing_tag(rest: &[u8]) -> bool {
    rest.starts_with(b"TAG") || rest.starts_with(b"APETAGEX") || rest.starts_with(b"LYRICS")
}

struct Walk {
    first: FrameHeader,
    xing_frames: Option<u32>,
    audio_frames: u64,
    truncated: bool,
}

fn walk(bytes: &[u8]) -> Result<Walk, ProbeError> {
    let start = id3v2_len(bytes);
    if start >= bytes.len() {
        return Err(ProbeError::NotMp3);
    }
    let (first_pos, first) = find_first_frame(bytes, start).ok_or(ProbeError::NotMp3)?;
    let xing_frames = xing_frame_count(bytes, first_pos, &first);

    let mut pos = first_pos;
    let mut frames = 0u64;
    let mut truncated = false;
    while pos + 4 <= bytes.len() {
        match header_at(bytes, pos).filter(|h| h.same_stream(&first)) {
            Some(h) => {
                let len = h.frame_len();
                if pos + len > bytes.len() {
                    truncated = true;
                    break;
                }
                frames += 1;
                pos += len;
            }
            None => {
                if is_trailing_tag(&bytes[pos..]) {
                    break;
                }
                // Lost sync: skip to the next plausible frame, if any.
                match (pos + 1..bytes.len())
                    .find(|&p| plausible_start(bytes, p).is_some_and(|h| h.same_stream(&first)))
                {
                    Some(p) => pos = p,
                    None => break,
                }
            }
        }
    }
    if xing_frames.is_some() {
        // The tag frame carries no audio.
        frames = frames.saturating_sub(1);
    }
    Ok(Walk {
        first,
        xing_frames,
        audio_frames: frames,
        truncated,
    })
}

fn info(h: &FrameHeader, frames: u64, method: ProbeMethod, truncated: bool) -> AudioInfo {
    AudioInfo {
        duration_s: frames as f64 * h.samples_per_frame() as f64 / h.sample_rate_hz as f64,
        sample_rate_hz: h.sample_rate_hz,
        frame_count: frames,
        method,
        warnings: if truncated {
            vec![ProbeWarning::TruncatedStream]
        } else {
            Vec::new()
        },
    }
}

/// Duration by summing every audio frame in the stream.
pub fn mp3_duration_walk(bytes: &[u8]) -> Result<AudioInfo, ProbeError> {
    let w = walk(bytes)?;
    if w.audio_frames == 0 {
        return Err(ProbeError::NotMp3);
    }
    Ok(info(&w.first, w.audio_frames, ProbeMethod::FrameWalk, w.truncated))
}

/// Probes MP3 bytes for their duration.
///
/// A Xing/Info frame count in the first frame is used when present; otherwise
/// every frame header is walked.
pub fn mp3_duration(bytes: &[u8]) -> Result<AudioInfo, ProbeError> {
    let w = walk(bytes)?;
    if let Some(n) = w.xing_frames {
        return Ok(info(&w.first, u64::from(n), ProbeMethod::XingHeader, w.truncated));
    }
    if w.audio_frames == 0 {
        return Err(ProbeError::NotMp3);
    }
    Ok(info(&w.first, w.audio_frames, ProbeMethod::FrameWalk, w.truncated))
}

/// An override wins over the probe.
pub fn resolve_duration(info: Option<&AudioInfo>, override_s: Option<f64>) -> Result<f64, ProbeError> {
    match (override_s, info) {
        (Some(s), _) => Ok(s),
        (None, Some(i)) => Ok(i.duration_s),
        (None, None) => Err(ProbeError::NoDurationAvailable),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{self, Mp3Spec};

    #[test]
    fn cbr_44100_hundred_frames() {
        let bytes = synth::mp3_cbr(&Mp3Spec::default(), 100);
        let info = mp3_duration(&bytes).unwrap();
        assert_eq!(info.method, ProbeMethod::FrameWalk);
        assert_eq!(info.frame_count, 100);
        assert_eq!(info.sample_rate_hz, 44100);
        assert!((info.duration_s - 100.0 * 1152.0 / 44100.0).abs() < 1e-12);
        assert!((info.duration_s - 2.612).abs() < 1e-3);
    }

    #[test]
    fn xing_48000_two_hundred_frames() {
        let spec = Mp3Spec {
            sample_rate_hz: 48000,
            ..Default::default()
        };
        let bytes = synth::mp3_with_xing(&spec, 200);
        let info = mp3_duration(&bytes).unwrap();
        assert_eq!(info.method, ProbeMethod::XingHeader);
        assert!((info.duration_s - 4.8).abs() < 1e-12);
        let walked = mp3_duration_walk(&bytes).unwrap();
        assert_eq!(walked.frame_count, 200);
        assert!((walked.duration_s - info.duration_s).abs() < 0.03);
    }

    #[test]
    fn id3_only_is_not_mp3() {
        let mut bytes = synth::id3v2_tag(300);
        assert_eq!(mp3_duration(&bytes), Err(ProbeError::NotMp3));
        bytes.extend_from_slice(&[0u8; 50]);
        assert_eq!(mp3_duration(&bytes), Err(ProbeError::NotMp3));
    }

    #[test]
    fn skips_id3_and_trailing_tag() {
        let mut bytes = synth::id3v2_tag(1000);
        bytes.extend(synth::mp3_cbr(&Mp3Spec::default(), 10));
        let mut tail = b"TAG".to_vec();
        tail.resize(128, 0);
        bytes.extend(tail);
        let info = mp3_duration(&bytes).unwrap();
        assert_eq!(info.frame_count, 10);
        assert!(info.warnings.is_empty());
    }

    #[test]
    fn truncated_last_frame_is_dropped() {
        let bytes = synth::mp3_cbr(&Mp3Spec::default(), 10);
        let info = mp3_duration(&bytes[..bytes.len() - 5]).unwrap();
        assert_eq!(info.frame_count, 9);
        assert_eq!(info.warnings, vec![ProbeWarning::TruncatedStream]);
    }

    #[test]
    fn mpeg2_and_mono_frames() {
        let spec = Mp3Spec {
            version: MpegVersion::Mpeg2,
            sample_rate_hz: 22050,
            bitrate_kbps: 64,
            mono: true,
        };
        let bytes = synth::mp3_cbr(&spec, 50);
        let info = mp3_duration(&bytes).unwrap();
        assert_eq!(info.frame_count, 50);
        assert!((info.duration_s - 50.0 * 576.0 / 22050.0).abs() < 1e-12);

        let bytes = synth::mp3_with_xing(&spec, 40);
        let info = mp3_duration(&bytes).unwrap();
        assert_eq!((info.method, info.frame_count), (ProbeMethod::XingHeader, 40));
    }

    #[test]
    fn free_format_rejected() {
        let mut bytes = synth::mp3_cbr(&Mp3Spec::default(), 3);
        bytes[2] &= 0x0F;
        assert!(FrameHeader::parse(&bytes).is_none());
    }

    #[test]
    fn resolve() {
        let info = AudioInfo {
            duration_s: 180.0,
            sample_rate_hz: 44100,
            frame_count: 1,
            method: ProbeMethod::FrameWalk,
            warnings: vec![],
        };
        assert_eq!(resolve_duration(Some(&info), None), Ok(180.0));
        assert_eq!(resolve_duration(None, Some(95.5)), Ok(95.5));
        assert_eq!(resolve_duration(Some(&info), Some(95.5)), Ok(95.5));
        assert_eq!(resolve_duration(None, None), Err(ProbeError::NoDurationAvailable));
    }
}
