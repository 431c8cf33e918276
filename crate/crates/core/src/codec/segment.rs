//! One segment record: header, connectivity, per-frame position streams,
//! attribute streams and a CRC-32 trailer.
//!
//! ```text
//! frame-count u32 | vertex-count u32 | qp u8 | qt u8 | qn u8 | grid 6×f32
//! connectivity-mode u8 | connectivity-length u64 | connectivity
//! frame-count × (length u64 | positions)
//! attributes u8 (bit 0 uv, bit 1 stored normals, bit 2 colors,
//!                bit 3 normals recomputed from positions)
//! [length u64 | uv grid 4×f32 | uv stream]
//! [frame-count × (length u64 | normal stream)]
//! [frame-count × (length u64 | color stream)]
//! crc32 u32 over everything above
//! ```
//!
//! Each stream interleaves the components of all vertices. Frame 0 stores
//! grid indices, later frames their difference to the previous frame.

use crate::mesh::{Aabb, Mesh, Triangle, Vec3};
use crate::pipeline::Segment;

use super::bits::{ByteReader, ByteWriter};
use super::connectivity::{read_connectivity, encode_connectivity, ConnectivityMode, ConnectivityStats};
use super::quantize::{
    cube_grid, dequantize, dequantize_scalar, f32_ceil, f32_floor, grid_box, quantize, quantize_scalar, GridIndex,
};
use super::{stream, CodecError, QuantizationParams, MAX_ELEMENTS};

const ATTR_UV: u8 = 1;
const ATTR_NORMALS: u8 = 1 << 1;
const ATTR_COLORS: u8 = 1 << 2;
const ATTR_NORMALS_RECOMPUTED: u8 = 1 << 3;
const COLOR_BITS: u8 = 8;

/// Byte breakdown of one encoded segment.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SegmentStats {
    pub connectivity_mode: Option<ConnectivityMode>,
    pub connectivity: ConnectivityStats,
    /// Position stream bytes per frame, length prefix included.
    pub position_bytes: Vec<usize>,
    pub attribute_bytes: usize,
    pub total_bytes: usize,
}

#[derive(Debug, Clone)]
pub struct EncodedSegment {
    pub bytes: Vec<u8>,
    pub stats: SegmentStats,
}

/// A decoded segment together with the integers it was stored as.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedSegment {
    /// Dequantized segment; frames are numbered from `first_frame`.
    pub segment: Segment,
    /// Grid indices per frame, exactly as stored.
    pub positions: Vec<Vec<GridIndex>>,
    pub grid: Aabb,
    pub params: QuantizationParams,
    pub connectivity: ConnectivityMode,
}

fn invalid(segment: usize, reason: impl Into<String>) -> CodecError {
    CodecError::InvalidSegment {
        segment,
        reason: reason.into(),
    }
}

/// Stream of frame `k`: absolute values for the first frame, differences to
/// the previous frame afterwards.
fn temporal_stream<const D: usize>(frames: &[Vec<[u32; D]>], k: usize) -> Vec<u8> {
    if k == 0 {
        let v: Vec<u64> = frames[0].iter().flatten().map(|&i| u64::from(i)).collect();
        stream::encode_unsigned(&v)
    } else {
        let d: Vec<i64> = frames[k]
            .iter()
            .flatten()
            .zip(frames[k - 1].iter().flatten())
            .map(|(&a, &b)| i64::from(a) - i64::from(b))
            .collect();
        stream::encode_signed(&d)
    }
}

fn read_temporal<const D: usize>(
    r: &mut ByteReader,
    previous: Option<&[[u32; D]]>,
    n: usize,
    bits: u8,
) -> Result<Vec<[u32; D]>, CodecError> {
    let offset = r.offset();
    let max = (1u64 << bits) - 1;
    let out_of_range = CodecError::Corrupt {
        offset,
        reason: "quantized value out of range",
    };
    let values: Vec<u64> = match previous {
        None => stream::read_unsigned(r, D * n)?,
        Some(prev) => {
            let d = stream::read_signed(r, D * n)?;
            prev.iter()
                .flatten()
                .zip(d)
                .map(|(&p, d)| {
                    i64::from(p)
                        .checked_add(d)
                        .and_then(|v| u64::try_from(v).ok())
                        .ok_or(out_of_range.clone())
                })
                .collect::<Result<_, _>>()?
        }
    };
    if values.iter().any(|&v| v > max) {
        return Err(out_of_range);
    }
    Ok(values
        .chunks_exact(D)
        .map(|c| std::array::from_fn(|k| c[k] as u32))
        .collect())
}

fn write_f32s(w: &mut ByteWriter, v: &[f32]) {
    for &x in v {
        w.f32(x);
    }
}

fn check_finite(segment: usize, what: &str, values: impl IntoIterator<Item = f64>) -> Result<(), CodecError> {
    if values.into_iter().all(f64::is_finite) {
        Ok(())
    } else {
        Err(invalid(segment, format!("non-finite {what}")))
    }
}

/// Encodes `seg`; `index` only labels errors.
pub fn encode_segment(seg: &Segment, params: &QuantizationParams, index: usize) -> Result<EncodedSegment, CodecError> {
    params.validate()?;
    seg.validate().map_err(|e| invalid(index, e.to_string()))?;
    seg.key.validate().map_err(|e| invalid(index, e.to_string()))?;
    let n = seg.vertex_count();
    let f = seg.frame_count();
    if n > MAX_ELEMENTS || f > u32::MAX as usize {
        return Err(invalid(index, "segment too large"));
    }
    check_finite(index, "position", seg.frames.iter().flatten().flat_map(|p| p.iter().copied()))?;

    let mut bounds = Aabb::empty();
    for p in seg.frames.iter().flatten() {
        bounds.extend(p);
    }
    let grid_f32 = if n == 0 { [0.0; 6] } else { cube_grid(&bounds) };
    let grid = grid_box(&grid_f32);
    let positions: Vec<Vec<GridIndex>> = seg
        .frames
        .iter()
        .map(|frame| quantize(frame, &grid, params.position_bits).indices)
        .collect();

    let conn = encode_connectivity(&seg.key.triangles, n);
    let mut w = ByteWriter::new();
    w.u32(f as u32);
    w.u32(n as u32);
    w.u8(params.position_bits);
    w.u8(params.uv_bits);
    w.u8(params.normal_bits);
    write_f32s(&mut w, &grid_f32);
    w.u8(conn.mode as u8);
    w.blob(&conn.bytes);

    let mut position_bytes = Vec::with_capacity(f);
    for k in 0..f {
        let blob = temporal_stream(&positions, k);
        w.blob(&blob);
        position_bytes.push(8 + blob.len());
    }

    let attributes_start = w.len();
    let mut mask = 0u8;
    if seg.key.uvs.is_some() {
        mask |= ATTR_UV;
    }
    if seg.normals.is_some() {
        mask |= if params.store_normals {
            ATTR_NORMALS
        } else {
            ATTR_NORMALS_RECOMPUTED
        };
    }
    if seg.colors.is_some() {
        mask |= ATTR_COLORS;
    }
    w.u8(mask);

    if let Some(uvs) = &seg.key.uvs {
        check_finite(index, "uv", uvs.iter().flatten().copied())?;
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for uv in uvs {
            for k in 0..2 {
                lo[k] = lo[k].min(uv[k]);
                hi[k] = hi[k].max(uv[k]);
            }
        }
        let uv_grid = if uvs.is_empty() {
            [0.0; 4]
        } else {
            [f32_floor(lo[0]), f32_floor(lo[1]), f32_ceil(hi[0]), f32_ceil(hi[1])]
        };
        let idx: Vec<[u32; 2]> = uvs
            .iter()
            .map(|uv| {
                std::array::from_fn(|k| {
                    quantize_scalar(uv[k], uv_grid[k].into(), uv_grid[k + 2].into(), params.uv_bits).0
                })
            })
            .collect();
        let mut blob = ByteWriter::new();
        write_f32s(&mut blob, &uv_grid);
        blob.bytes(&temporal_stream(&[idx], 0));
        w.blob(&blob.buf);
    }

    if let (Some(normals), true) = (&seg.normals, params.store_normals) {
        check_finite(index, "normal", normals.iter().flatten().flat_map(|p| p.iter().copied()))?;
        let unit = Aabb::new(Vec3::repeat(-1.0), Vec3::repeat(1.0));
        let q: Vec<Vec<GridIndex>> = normals
            .iter()
            .map(|frame| quantize(frame, &unit, params.normal_bits).indices)
            .collect();
        for k in 0..f {
            w.blob(&temporal_stream(&q, k));
        }
    }

    if let Some(colors) = &seg.colors {
        check_finite(index, "color", colors.iter().flatten().flat_map(|p| p.iter().copied()))?;
        let unit = Aabb::new(Vec3::zeros(), Vec3::repeat(1.0));
        let q: Vec<Vec<GridIndex>> = colors
            .iter()
            .map(|frame| quantize(frame, &unit, COLOR_BITS).indices)
            .collect();
        for k in 0..f {
            w.blob(&temporal_stream(&q, k));
        }
    }
    let attribute_bytes = w.len() - attributes_start;

    let crc = crc32fast::hash(&w.buf);
    w.u32(crc);
    let total_bytes = w.len();
    Ok(EncodedSegment {
        bytes: w.buf,
        stats: SegmentStats {
            connectivity_mode: Some(conn.mode),
            connectivity: conn.stats,
            position_bytes,
            attribute_bytes,
            total_bytes,
        },
    })
}

/// Record boundaries found by walking the length prefixes.
struct Layout<'a> {
    frame_count: usize,
    vertex_count: usize,
    params: QuantizationParams,
    grid: [f32; 6],
    mode: u8,
    mode_at: usize,
    connectivity: ByteReader<'a>,
    frames: Vec<ByteReader<'a>>,
    mask: u8,
    mask_at: usize,
    uv: Option<ByteReader<'a>>,
    normals: Vec<ByteReader<'a>>,
    colors: Vec<ByteReader<'a>>,
}

fn layout<'a>(r: &mut ByteReader<'a>, index: usize) -> Result<Layout<'a>, CodecError> {
    let start = r.offset();
    let record = r.clone();
    let frame_count = r.u32("segment frame count")? as usize;
    let vertex_count = r.u32("segment vertex count")? as usize;
    let params = QuantizationParams {
        position_bits: r.u8("position bits")?,
        uv_bits: r.u8("uv bits")?,
        normal_bits: r.u8("normal bits")?,
        store_normals: false,
    };
    let mut grid = [0f32; 6];
    for g in &mut grid {
        *g = r.f32("grid")?;
    }
    let mode_at = r.offset();
    let mode = r.u8("connectivity mode")?;
    let connectivity = r.blob("connectivity")?;
    let mut frames = Vec::new();
    for _ in 0..frame_count {
        frames.push(r.blob("position stream")?);
    }
    let mask_at = r.offset();
    let mask = r.u8("attribute flags")?;
    let uv = if mask & ATTR_UV != 0 {
        Some(r.blob("uv stream")?)
    } else {
        None
    };
    let mut normals = Vec::new();
    if mask & ATTR_NORMALS != 0 {
        for _ in 0..frame_count {
            normals.push(r.blob("normal stream")?);
        }
    }
    let mut colors = Vec::new();
    if mask & ATTR_COLORS != 0 {
        for _ in 0..frame_count {
            colors.push(r.blob("color stream")?);
        }
    }
    let len = r.offset() - start;
    let stored = r.u32("segment checksum")?;
    let mut whole = record;
    let bytes = whole.take(len, "segment")?;
    if crc32fast::hash(bytes) != stored {
        return Err(CodecError::Checksum {
            segment: index,
            start,
            end: start + len + 4,
        });
    }
    Ok(Layout {
        frame_count,
        vertex_count,
        params,
        grid,
        mode,
        mode_at,
        connectivity,
        frames,
        mask,
        mask_at,
        uv,
        normals,
        colors,
    })
}

/// Decodes a single segment record (as produced by [`encode_segment`]).
pub fn decode_segment(bytes: &[u8]) -> Result<DecodedSegment, CodecError> {
    let mut r = ByteReader::new(bytes, 0);
    let seg = read_segment(&mut r, 0, 0)?;
    r.finish("segment")?;
    Ok(seg)
}

/// Decodes one record starting at the reader position. Frame ids start at
/// `first_frame`.
pub(crate) fn read_segment(r: &mut ByteReader, index: usize, first_frame: usize) -> Result<DecodedSegment, CodecError> {
    let mut l = layout(r, index)?;
    let n = l.vertex_count;
    let corrupt = |offset, reason| CodecError::Corrupt { offset, reason };
    if l.frame_count == 0 {
        return Err(invalid(index, "no frames"));
    }
    if n > MAX_ELEMENTS {
        return Err(invalid(index, "vertex count out of range"));
    }
    if l.mask & !(ATTR_UV | ATTR_NORMALS | ATTR_COLORS | ATTR_NORMALS_RECOMPUTED) != 0
        || l.mask & ATTR_NORMALS != 0 && l.mask & ATTR_NORMALS_RECOMPUTED != 0
    {
        return Err(corrupt(l.mask_at, "unknown attribute flags"));
    }
    l.params.store_normals = l.mask & ATTR_NORMALS != 0;
    l.params.validate().map_err(|_| invalid(index, "quantization bits out of range"))?;
    if l.grid.iter().any(|g| !g.is_finite()) || (0..3).any(|k| l.grid[k] > l.grid[k + 3]) {
        return Err(invalid(index, "invalid quantization grid"));
    }
    let grid = grid_box(&l.grid);

    let mode = ConnectivityMode::from_byte(l.mode).ok_or(corrupt(l.mode_at, "unknown connectivity mode"))?;
    let triangles: Vec<Triangle> = read_connectivity(mode, &mut l.connectivity, n)?;

    let bits = l.params.position_bits;
    let mut positions: Vec<Vec<GridIndex>> = Vec::with_capacity(l.frame_count);
    for blob in &mut l.frames {
        let frame = read_temporal(blob, positions.last().map(Vec::as_slice), n, bits)?;
        blob.finish("position stream")?;
        positions.push(frame);
    }
    let frames: Vec<Vec<Vec3>> = positions.iter().map(|p| dequantize(p, &grid, bits)).collect();

    let mut key = Mesh {
        vertices: frames[0].clone(),
        triangles,
        ..Default::default()
    };

    if let Some(blob) = &mut l.uv {
        let mut g = [0f32; 4];
        for v in &mut g {
            *v = blob.f32("uv grid")?;
        }
        if g.iter().any(|v| !v.is_finite()) || g[0] > g[2] || g[1] > g[3] {
            return Err(invalid(index, "invalid uv grid"));
        }
        let idx = read_temporal::<2>(blob, None, n, l.params.uv_bits)?;
        blob.finish("uv stream")?;
        key.uvs = Some(
            idx.iter()
                .map(|i| {
                    std::array::from_fn(|k| dequantize_scalar(i[k], g[k].into(), g[k + 2].into(), l.params.uv_bits))
                })
                .collect(),
        );
    }

    let read_frames = |blobs: &mut [ByteReader], bits: u8, grid: &Aabb, what: &'static str| {
        let mut q: Vec<Vec<GridIndex>> = Vec::with_capacity(blobs.len());
        for blob in blobs.iter_mut() {
            let frame = read_temporal(blob, q.last().map(Vec::as_slice), n, bits)?;
            blob.finish(what)?;
            q.push(frame);
        }
        Ok::<_, CodecError>(q.iter().map(|f| dequantize(f, grid, bits)).collect::<Vec<_>>())
    };

    let normals = if l.mask & ATTR_NORMALS != 0 {
        let unit = Aabb::new(Vec3::repeat(-1.0), Vec3::repeat(1.0));
        Some(read_frames(&mut l.normals, l.params.normal_bits, &unit, "normal stream")?)
    } else if l.mask & ATTR_NORMALS_RECOMPUTED != 0 {
        Some(
            frames
                .iter()
                .map(|f| key.with_vertices(f.clone()).compute_vertex_normals())
                .collect(),
        )
    } else {
        None
    };
    let colors = if l.mask & ATTR_COLORS != 0 {
        let unit = Aabb::new(Vec3::zeros(), Vec3::repeat(1.0));
        Some(read_frames(&mut l.colors, COLOR_BITS, &unit, "color stream")?)
    } else {
        None
    };
    key.normals = normals.as_ref().map(|n| n[0].clone());
    key.colors = colors.as_ref().map(|c| c[0].clone());
    key.validate().map_err(|e| invalid(index, e.to_string()))?;

    let segment = Segment {
        key,
        frame_ids: (first_frame..first_frame + l.frame_count).collect(),
        frames,
        normals,
        colors,
    };
    Ok(DecodedSegment {
        segment,
        positions,
        grid,
        params: l.params,
        connectivity: mode,
    })
}

/// Attribute flags of an encoded record, as the container header reports
/// them: uv, normals (stored or recomputed), colors.
pub(crate) fn container_flags(seg: &Segment) -> u16 {
    let mut f = 0;
    if seg.key.uvs.is_some() {
        f |= 1;
    }
    if seg.normals.is_some() {
        f |= 2;
    }
    if seg.colors.is_some() {
        f |= 4;
    }
    f
}
