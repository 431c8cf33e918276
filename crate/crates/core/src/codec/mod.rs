//! Segment coding and the `.ultn` container.
//!
//! Container layout, all little-endian:
//!
//! ```text
//! "ULTR" | version u16 | flags u16 | segment-count u32 | segment records
//! ```
//!
//! `flags` has bit 0 set when every segment carries UVs, bit 1 for normals
//! and bit 2 for colors; the decoder checks them against the records.
//! Segment records are described in [`segment`]. Nothing may follow the
//! last record.

mod bits;
pub mod connectivity;
pub mod quantize;
pub(crate) mod rans;
pub mod segment;
pub mod stream;

use rayon::prelude::*;
use thiserror::Error;

use crate::pipeline::Segment;

pub use connectivity::{ConnectivityMode, ConnectivityStats};
pub use quantize::{dequantize, quantize, GridIndex, Quantized};
pub use segment::{decode_segment, encode_segment, DecodedSegment, EncodedSegment, SegmentStats};

pub const MAGIC: [u8; 4] = *b"ULTR";
pub const FORMAT_VERSION: u16 = 1;
const HEADER_LEN: usize = 12;
const KNOWN_FLAGS: u16 = 0b111;

/// Upper bound on decoded element counts, so corrupt lengths cannot
/// trigger huge allocations.
pub(crate) const MAX_ELEMENTS: usize = 1 << 28;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("truncated input at byte {offset}: expected {what}")]
    Truncated { offset: usize, what: &'static str },
    #[error("corrupt data at byte {offset}: {reason}")]
    Corrupt { offset: usize, reason: &'static str },
    #[error("unexpected bytes at {offset} after {what}")]
    TrailingBytes { offset: usize, what: &'static str },
    #[error("not a container (bad magic)")]
    BadMagic,
    #[error("unsupported container version {0} (this build reads {FORMAT_VERSION})")]
    UnsupportedVersion(u16),
    #[error("container flags {found:#06x} do not match the segments ({expected:#06x})")]
    Flags { found: u16, expected: u16 },
    #[error("segment {segment} fails its checksum (bytes {start}..{end})")]
    Checksum { segment: usize, start: usize, end: usize },
    #[error("invalid quantization parameters: {0}")]
    InvalidParams(String),
    #[error("segment {segment}: {reason}")]
    InvalidSegment { segment: usize, reason: String },
}

/// Quantization bit depths and normal handling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuantizationParams {
    /// Bits per position coordinate (qp).
    pub position_bits: u8,
    /// Bits per UV coordinate (qt).
    pub uv_bits: u8,
    /// Bits per normal component (qn).
    pub normal_bits: u8,
    /// Store normals; otherwise the decoder recomputes them from positions.
    pub store_normals: bool,
}

impl Default for QuantizationParams {
    fn default() -> Self {
        Self {
            position_bits: 10,
            uv_bits: 11,
            normal_bits: 8,
            store_normals: true,
        }
    }
}

impl QuantizationParams {
    pub fn validate(&self) -> Result<(), CodecError> {
        for (name, b) in [("qp", self.position_bits), ("qt", self.uv_bits), ("qn", self.normal_bits)] {
            if !(1..=30).contains(&b) {
                return Err(CodecError::InvalidParams(format!("{name} = {b} is outside 1..=30")));
            }
        }
        Ok(())
    }
}

/// Encoded container plus per-segment statistics.
#[derive(Debug, Clone)]
pub struct EncodedContainer {
    pub bytes: Vec<u8>,
    pub segments: Vec<SegmentStats>,
}

fn expected_flags<'a>(segments: impl IntoIterator<Item = &'a Segment>) -> u16 {
    let mut it = segments.into_iter().peekable();
    if it.peek().is_none() {
        return 0;
    }
    it.fold(KNOWN_FLAGS, |acc, s| acc & segment::container_flags(s))
}

/// Encodes segments in order; segments are coded in parallel.
pub fn encode_container_with_stats(
    segments: &[Segment],
    params: &QuantizationParams,
) -> Result<EncodedContainer, CodecError> {
    params.validate()?;
    let count = u32::try_from(segments.len()).map_err(|_| CodecError::InvalidParams("too many segments".into()))?;
    let encoded: Vec<EncodedSegment> = segments
        .par_iter()
        .enumerate()
        .map(|(i, s)| encode_segment(s, params, i))
        .collect::<Result<_, _>>()?;
    let mut bytes = Vec::with_capacity(HEADER_LEN + encoded.iter().map(|e| e.bytes.len()).sum::<usize>());
    bytes.extend_from_slice(&MAGIC);
    bytes.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&expected_flags(segments).to_le_bytes());
    bytes.extend_from_slice(&count.to_le_bytes());
    let mut stats = Vec::with_capacity(encoded.len());
    for e in encoded {
        bytes.extend_from_slice(&e.bytes);
        stats.push(e.stats);
    }
    Ok(EncodedContainer { bytes, segments: stats })
}

pub fn encode_container(segments: &[Segment], params: &QuantizationParams) -> Result<Vec<u8>, CodecError> {
    Ok(encode_container_with_stats(segments, params)?.bytes)
}

/// Decodes a whole container. Frames are numbered consecutively from 0
/// across segments.
pub fn decode_container(bytes: &[u8]) -> Result<Vec<DecodedSegment>, CodecError> {
    let mut r = bits::ByteReader::new(bytes, 0);
    if r.take(4, "magic").map_err(|_| CodecError::BadMagic)? != MAGIC {
        return Err(CodecError::BadMagic);
    }
    let version = r.u16("version")?;
    if version != FORMAT_VERSION {
        return Err(CodecError::UnsupportedVersion(version));
    }
    let flags = r.u16("flags")?;
    let count = r.u32("segment count")? as usize;
    if flags & !KNOWN_FLAGS != 0 {
        return Err(CodecError::Corrupt {
            offset: 6,
            reason: "unknown container flags",
        });
    }
    let mut out: Vec<DecodedSegment> = Vec::new();
    let mut first_frame = 0;
    for i in 0..count {
        let seg = segment::read_segment(&mut r, i, first_frame)?;
        first_frame += seg.segment.frame_count();
        out.push(seg);
    }
    r.finish("last segment")?;
    let expected = expected_flags(out.iter().map(|d| &d.segment));
    if flags != expected {
        return Err(CodecError::Flags { found: flags, expected });
    }
    Ok(out)
}
