//! Synthetic animated mesh sequences with known per-vertex motion.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::mesh::{Aabb, Mesh, Triangle, Vec3};
use crate::tracking::TrackedVertex;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    /// Unit-radius icosphere.
    Sphere,
    /// Open tube, radius 0.5, height 2, along z.
    Cylinder,
    /// Flat unit square in the z = 0 plane.
    Slab,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Motion {
    /// Frame `i` is frame 0 shifted by `i·a/(f−1)` along x.
    Translate,
    /// Constant acceleration along x, starting at rest; total drift `a`.
    Accelerate,
    /// Sinusoidal bend across the shape's long axis.
    Bend,
    /// Sinusoidal twist about the shape's long axis, `a` radians at the top.
    Twist,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub shape: Shape,
    pub frames: usize,
    pub motion: Motion,
    pub amplitude: f64,
    /// Regenerate the tessellation every `k` frames.
    pub remesh_every: Option<usize>,
    pub seed: u64,
    /// Icosphere refinement level.
    pub subdivisions: u32,
    /// Attach per-vertex colors derived from the rest position.
    pub colors: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            shape: Shape::Sphere,
            frames: 1,
            motion: Motion::Translate,
            amplitude: 0.0,
            remesh_every: None,
            seed: 0,
            subdivisions: 3,
            colors: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSequence {
    pub frames: Vec<Mesh>,
    /// Ground-truth motion state per frame and vertex: position, one-frame
    /// velocity and acceleration, such that for [`Motion::Accelerate`]
    /// `p[i+1] = p[i] + v[i]` and `v[i+1] = v[i] + a[i]` hold exactly.
    pub motion: Vec<Vec<TrackedVertex>>,
}

impl SynthSequence {
    /// `frame,vertex,x,y,z,vx,vy,vz,ax,ay,az`, one row per frame and vertex.
    pub fn motion_csv(&self) -> String {
        let mut out = String::from("frame,vertex,x,y,z,vx,vy,vz,ax,ay,az\n");
        for (f, states) in self.motion.iter().enumerate() {
            for (v, s) in states.iter().enumerate() {
                let (p, r, a) = (s.position, s.velocity, s.acceleration);
                let _ = writeln!(
                    out,
                    "{f},{v},{},{},{},{},{},{},{},{},{}",
                    p.x, p.y, p.z, r.x, r.y, r.z, a.x, a.y, a.z
                );
            }
        }
        out
    }
}

/// Unit icosphere; level 0 is the icosahedron (12 vertices, 20 triangles),
/// each level quadruples the triangle count.
pub fn icosphere(subdivisions: u32) -> Mesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut triangles: Vec<Triangle> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoints: HashMap<(u32, u32), u32> = HashMap::new();
        let mut mid = |a: u32, b: u32, vertices: &mut Vec<Vec3>| {
            *midpoints.entry((a.min(b), a.max(b))).or_insert_with(|| {
                vertices.push(((vertices[a as usize] + vertices[b as usize]) * 0.5).normalize());
                vertices.len() as u32 - 1
            })
        };
        let mut next = Vec::with_capacity(triangles.len() * 4);
        for [a, b, c] in triangles {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        triangles = next;
    }
    Mesh {
        vertices,
        triangles,
        ..Default::default()
    }
}

/// Latitude/longitude sphere of unit radius with single-vertex poles.
pub fn uv_sphere(rings: usize, segments: usize) -> Mesh {
    let rings = rings.max(2);
    let segments = segments.max(3);
    let mut vertices = vec![Vec3::z()];
    for j in 1..rings {
        let theta = std::f64::consts::PI * j as f64 / rings as f64;
        for k in 0..segments {
            let phi = std::f64::consts::TAU * k as f64 / segments as f64;
            vertices.push(Vec3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()));
        }
    }
    vertices.push(-Vec3::z());
    let south = vertices.len() as u32 - 1;
    let at = |j: usize, k: usize| (1 + (j - 1) * segments + k % segments) as u32;
    let mut triangles = Vec::new();
    for k in 0..segments {
        triangles.push([0, at(1, k), at(1, k + 1)]);
    }
    for j in 1..rings - 1 {
        for k in 0..segments {
            let (a, b, c, d) = (at(j, k), at(j + 1, k), at(j + 1, k + 1), at(j, k + 1));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    for k in 0..segments {
        triangles.push([at(rings - 1, k), south, at(rings - 1, k + 1)]);
    }
    Mesh {
        vertices,
        triangles,
        ..Default::default()
    }
}

/// Open tube of radius 0.5 spanning `z ∈ [0, 2]`, outward-facing.
pub fn cylinder(segments: usize, rings: usize) -> Mesh {
    let segments = segments.max(3);
    let rings = rings.max(1);
    let mut vertices = Vec::with_capacity(segments * (rings + 1));
    for j in 0..=rings {
        let z = 2.0 * j as f64 / rings as f64;
        for k in 0..segments {
            let phi = std::f64::consts::TAU * k as f64 / segments as f64;
            vertices.push(Vec3::new(0.5 * phi.cos(), 0.5 * phi.sin(), z));
        }
    }
    let at = |j: usize, k: usize| (j * segments + k % segments) as u32;
    let mut triangles = Vec::with_capacity(2 * segments * rings);
    for j in 0..rings {
        for k in 0..segments {
            let (a, b, c, d) = (at(j, k), at(j, k + 1), at(j + 1, k + 1), at(j + 1, k));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    Mesh {
        vertices,
        triangles,
        ..Default::default()
    }
}

/// `[0, 1]²` grid at z = 0 with `nx × ny` cells, facing +z.
pub fn slab(nx: usize, ny: usize) -> Mesh {
    let (nx, ny) = (nx.max(1), ny.max(1));
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push(Vec3::new(i as f64 / nx as f64, j as f64 / ny as f64, 0.0));
        }
    }
    let at = |i: usize, j: usize| (j * (nx + 1) + i) as u32;
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    Mesh {
        vertices,
        triangles,
        ..Default::default()
    }
}

/// Axis the bend and twist are parameterized along, and the direction a
/// bend pushes vertices.
fn deformation_axes(shape: Shape) -> (usize, usize) {
    match shape {
        Shape::Sphere | Shape::Cylinder => (2, 0),
        Shape::Slab => (0, 2),
    }
}

/// Moves `points` by `amount · sin(π u)` along `direction`, where `u ∈ [0, 1]`
/// is the normalized coordinate along `axis` over `bounds`.
pub fn bend(points: &[Vec3], bounds: &Aabb, axis: usize, direction: usize, amount: f64) -> Vec<Vec3> {
    let (lo, span) = (bounds.min[axis], bounds.extent()[axis]);
    points
        .iter()
        .map(|p| {
            let u = if span > 0.0 { (p[axis] - lo) / span } else { 0.0 };
            let mut q = *p;
            q[direction] += amount * (std::f64::consts::PI * u).sin();
            q
        })
        .collect()
}

/// Rotates `points` about the line through the box centre along `axis` by
/// `angle · u`, `u` as in [`bend`].
pub fn twist(points: &[Vec3], bounds: &Aabb, axis: usize, angle: f64) -> Vec<Vec3> {
    let (lo, span) = (bounds.min[axis], bounds.extent()[axis]);
    let c = bounds.center();
    let (i, j) = ((axis + 1) % 3, (axis + 2) % 3);
    points
        .iter()
        .map(|p| {
            let u = if span > 0.0 { (p[axis] - lo) / span } else { 0.0 };
            let (s, co) = (angle * u).sin_cos();
            let (x, y) = (p[i] - c[i], p[j] - c[j]);
            let mut q = *p;
            q[i] = c[i] + co * x - s * y;
            q[j] = c[j] + s * x + co * y;
            q
        })
        .collect()
}

fn rest_mesh(cfg: &SynthConfig, epoch: usize) -> Mesh {
    if epoch == 0 {
        return match cfg.shape {
            Shape::Sphere => icosphere(cfg.subdivisions),
            Shape::Cylinder => cylinder(32, 16),
            Shape::Slab => slab(16, 16),
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (epoch as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    match cfg.shape {
        Shape::Sphere => {
            let rings = rng.gen_range(12..20);
            uv_sphere(rings, 2 * rings + rng.gen_range(0..5))
        }
        Shape::Cylinder => cylinder(rng.gen_range(24..40), rng.gen_range(12..20)),
        Shape::Slab => slab(rng.gen_range(12..20), rng.gen_range(12..20)),
    }
}

/// Position of a rest point at frame `t`.
fn displaced(cfg: &SynthConfig, bounds: &Aabb, rest: &[Vec3], t: usize) -> Vec<Vec3> {
    let f = cfg.frames;
    let phase = (std::f64::consts::TAU * t as f64 / f.max(2) as f64).sin();
    let (axis, dir) = deformation_axes(cfg.shape);
    match cfg.motion {
        Motion::Translate => {
            let dx = if f > 1 { t as f64 * cfg.amplitude / (f - 1) as f64 } else { 0.0 };
            rest.iter().map(|p| p + Vec3::new(dx, 0.0, 0.0)).collect()
        }
        Motion::Accelerate => {
            let (mut p, mut v) = (rest.to_vec(), accelerate_initial());
            let a = accelerate_rate(cfg);
            for _ in 0..t {
                for q in p.iter_mut() {
                    *q += v;
                }
                v += a;
            }
            p
        }
        Motion::Bend => bend(rest, bounds, axis, dir, cfg.amplitude * phase),
        Motion::Twist => twist(rest, bounds, axis, cfg.amplitude * phase),
    }
}

fn accelerate_initial() -> Vec3 {
    Vec3::zeros()
}

fn accelerate_rate(cfg: &SynthConfig) -> Vec3 {
    let f = cfg.frames.max(2) as f64;
    Vec3::new(2.0 * cfg.amplitude / ((f - 1.0) * (f - 1.0)), 0.0, 0.0)
}

fn rest_colors(rest: &[Vec3], bounds: &Aabb) -> Vec<Vec3> {
    let ext = bounds.extent();
    rest.iter()
        .map(|p| {
            Vec3::from_fn(|k, _| {
                if ext[k] > 0.0 {
                    ((p[k] - bounds.min[k]) / ext[k]).clamp(0.0, 1.0)
                } else {
                    0.5
                }
            })
        })
        .collect()
}

/// Generates the sequence described by `cfg`. Deterministic in `cfg`.
pub fn generate(cfg: &SynthConfig) -> SynthSequence {
    let mut frames = Vec::with_capacity(cfg.frames);
    let mut motion = Vec::with_capacity(cfg.frames);
    let mut epoch_mesh = rest_mesh(cfg, 0);
    for t in 0..cfg.frames {
        if let Some(k) = cfg.remesh_every {
            if k > 0 && t > 0 && t % k == 0 {
                epoch_mesh = rest_mesh(cfg, t / k);
            }
        }
        let bounds = epoch_mesh.bounding_box();
        let rest = &epoch_mesh.vertices;
        let positions = displaced(cfg, &bounds, rest, t);
        let states = match cfg.motion {
            Motion::Accelerate => {
                let a = accelerate_rate(cfg);
                let mut v = accelerate_initial();
                for _ in 0..t {
                    v += a;
                }
                positions
                    .iter()
                    .map(|&p| TrackedVertex {
                        position: p,
                        velocity: v,
                        acceleration: a,
                    })
                    .collect()
            }
            _ => {
                let p1 = displaced(cfg, &bounds, rest, t + 1);
                let p2 = displaced(cfg, &bounds, rest, t + 2);
                positions
                    .iter()
                    .zip(p1.iter().zip(&p2))
                    .map(|(&p, (&q, &r))| TrackedVertex {
                        position: p,
                        velocity: q - p,
                        acceleration: (r - q) - (q - p),
                    })
                    .collect()
            }
        };
        let mut mesh = epoch_mesh.with_vertices(positions);
        if cfg.colors {
            mesh.colors = Some(rest_colors(rest, &bounds));
        }
        frames.push(mesh);
        motion.push(states);
    }
    SynthSequence { frames, motion }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_corner_table;

    fn euler(m: &Mesh) -> i64 {
        m.vertex_count() as i64 - m.edges().len() as i64 + m.triangle_count() as i64
    }

    fn signed_volume(m: &Mesh) -> f64 {
        (0..m.triangle_count())
            .map(|t| {
                let [a, b, c] = m.triangle_points(t);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    #[test]
    fn icosphere_is_a_closed_outward_manifold() {
        for level in 0..4 {
            let m = icosphere(level);
            m.validate().unwrap();
            assert_eq!(m.triangle_count(), 20 * 4usize.pow(level));
            assert_eq!(euler(&m), 2);
            assert_eq!(build_corner_table(&m).unwrap().boundary_corner_count(), 0);
            assert!(signed_volume(&m) > 0.0);
            assert!(m.vertices.iter().all(|v| (v.norm() - 1.0).abs() < 1e-12));
        }
        assert_eq!(icosphere(3).vertex_count(), 642);
        assert_eq!(icosphere(4).triangle_count(), 5120);
    }

    #[test]
    fn uv_sphere_is_a_closed_outward_manifold() {
        let m = uv_sphere(13, 29);
        m.validate().unwrap();
        assert_eq!(euler(&m), 2);
        assert_eq!(build_corner_table(&m).unwrap().boundary_corner_count(), 0);
        assert!(signed_volume(&m) > 0.0);
    }

    #[test]
    fn tube_and_slab_face_outwards() {
        let tube = cylinder(16, 4);
        assert_eq!(euler(&tube), 0);
        for t in 0..tube.triangle_count() {
            let [a, b, c] = tube.triangle_points(t);
            let n = (b - a).cross(&(c - a));
            let radial = Vec3::new(a.x + b.x + c.x, a.y + b.y + c.y, 0.0);
            assert!(n.dot(&radial) > 0.0);
        }
        let s = slab(3, 2);
        assert_eq!(euler(&s), 1);
        for t in 0..s.triangle_count() {
            let [a, b, c] = s.triangle_points(t);
            assert!((b - a).cross(&(c - a)).z > 0.0);
        }
    }

    #[test]
    fn translate_is_exact() {
        let cfg = SynthConfig {
            frames: 7,
            amplitude: 0.3,
            ..Default::default()
        };
        let seq = generate(&cfg);
        for (i, f) in seq.frames.iter().enumerate() {
            let dx = i as f64 * 0.3 / 6.0;
            for (p, q) in f.vertices.iter().zip(&seq.frames[0].vertices) {
                assert_eq!(*p, q + Vec3::new(dx, 0.0, 0.0));
            }
        }
    }

    #[test]
    fn accelerate_satisfies_the_prediction_recurrence() {
        let cfg = SynthConfig {
            frames: 9,
            motion: Motion::Accelerate,
            amplitude: 0.5,
            subdivisions: 1,
            ..Default::default()
        };
        let seq = generate(&cfg);
        for w in seq.motion.windows(2) {
            for (s, n) in w[0].iter().zip(&w[1]) {
                let p = crate::tracking::predict(s, 1.0);
                assert_eq!(p.position, n.position);
                assert_eq!(p.velocity, n.velocity);
            }
        }
        let csv = seq.motion_csv();
        assert_eq!(csv.lines().count(), 1 + 9 * seq.frames[0].vertex_count());
    }

    #[test]
    fn remesh_changes_connectivity_on_schedule() {
        let cfg = SynthConfig {
            frames: 15,
            remesh_every: Some(7),
            seed: 5,
            ..Default::default()
        };
        let seq = generate(&cfg);
        for t in 1..15 {
            let same = seq.frames[t].triangles == seq.frames[t - 1].triangles;
            assert_eq!(same, t != 7 && t != 14, "frame {t}");
        }
        assert_eq!(generate(&cfg), seq);
    }
}
