//! Uniform scalar quantization on an axis-aligned grid.

use crate::mesh::{Aabb, Vec3};

/// Quantized coordinate triple.
pub type GridIndex = [u32; 3];

#[derive(Debug, Clone, PartialEq)]
pub struct Quantized {
    pub indices: Vec<GridIndex>,
    /// Points that fell outside the grid and were clamped onto it.
    pub clamped: usize,
}

#[inline]
fn levels(bits: u8) -> f64 {
    ((1u64 << bits) - 1) as f64
}

/// Index of `x` on `bits` levels spanning `[min, max]`, rounding halves up.
#[inline]
pub(crate) fn quantize_scalar(x: f64, min: f64, max: f64, bits: u8) -> (u32, bool) {
    let ext = max - min;
    if ext <= 0.0 {
        return (0, x != min);
    }
    let s = levels(bits);
    let t = (x - min) / ext * s;
    let clamped = !(0.0..=s).contains(&t);
    ((t + 0.5).floor().clamp(0.0, s) as u32, clamped)
}

#[inline]
pub(crate) fn dequantize_scalar(i: u32, min: f64, max: f64, bits: u8) -> f64 {
    let ext = max - min;
    if ext <= 0.0 {
        return min;
    }
    min + f64::from(i) / levels(bits) * ext
}

/// Quantizes every coordinate to `bits` (1..=30) levels on `grid`.
pub fn quantize(points: &[Vec3], grid: &Aabb, bits: u8) -> Quantized {
    debug_assert!((1..=30).contains(&bits));
    let mut clamped = 0;
    let indices = points
        .iter()
        .map(|p| {
            let mut out = [0u32; 3];
            let mut outside = false;
            for k in 0..3 {
                let (i, c) = quantize_scalar(p[k], grid.min[k], grid.max[k], bits);
                out[k] = i;
                outside |= c;
            }
            clamped += usize::from(outside);
            out
        })
        .collect();
    if clamped > 0 {
        log::warn!("{clamped} points outside the quantization grid were clamped");
    }
    Quantized { indices, clamped }
}

pub fn dequantize(indices: &[GridIndex], grid: &Aabb, bits: u8) -> Vec<Vec3> {
    indices
        .iter()
        .map(|i| Vec3::from_fn(|k, _| dequantize_scalar(i[k], grid.min[k], grid.max[k], bits)))
        .collect()
}

/// Largest per-axis reconstruction error for in-grid points.
pub fn half_step(grid: &Aabb, bits: u8) -> Vec3 {
    grid.extent() / (2.0 * levels(bits))
}

/// Largest `f32` not above `x`.
pub(crate) fn f32_floor(x: f64) -> f32 {
    let f = x as f32;
    if f64::from(f) > x {
        f.next_down()
    } else {
        f
    }
}

/// Smallest `f32` not below `x`.
pub(crate) fn f32_ceil(x: f64) -> f32 {
    let f = x as f32;
    if f64::from(f) < x {
        f.next_up()
    } else {
        f
    }
}

/// A cube centred on `bounds` whose side equals the box diagonal, with its
/// corners rounded outwards to `f32`. Using the diagonal for every axis
/// ties the quantization step to the sequence scale rather than to the
/// thinnest axis.
pub fn cube_grid(bounds: &Aabb) -> [f32; 6] {
    let c = bounds.center();
    let h = bounds.diagonal() / 2.0;
    [
        f32_floor(c.x - h),
        f32_floor(c.y - h),
        f32_floor(c.z - h),
        f32_ceil(c.x + h),
        f32_ceil(c.y + h),
        f32_ceil(c.z + h),
    ]
}

/// The box spanned by stored `f32` corners.
pub fn grid_box(g: &[f32; 6]) -> Aabb {
    Aabb::new(
        Vec3::new(g[0].into(), g[1].into(), g[2].into()),
        Vec3::new(g[3].into(), g[4].into(), g[5].into()),
    )
}
