//! Vertex tracking between consecutive frames.
//!
//! Each tracked vertex carries a position, a velocity and an acceleration.
//! Before matching, positions are pushed forward one frame with the velocity
//! held constant (and the velocity with the acceleration held constant).
//! Matching then pairs predicted sources with target vertices by mutual
//! nearest neighbour in descriptor space.

use rayon::prelude::*;

use crate::mesh::{KdTree, Mesh, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackedVertex {
    pub position: Vec3,
    /// Units per frame.
    pub velocity: Vec3,
    /// Units per frame squared.
    pub acceleration: Vec3,
}

impl TrackedVertex {
    /// A vertex seen for the first time: no motion information yet.
    pub fn at_rest(position: Vec3) -> Self {
        Self {
            position,
            velocity: Vec3::zeros(),
            acceleration: Vec3::zeros(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().chain(self.velocity.iter()).chain(self.acceleration.iter()).all(|v| v.is_finite())
    }
}

impl std::ops::Add for TrackedVertex {
    type Output = TrackedVertex;
    fn add(self, o: TrackedVertex) -> TrackedVertex {
        TrackedVertex {
            position: self.position + o.position,
            velocity: self.velocity + o.velocity,
            acceleration: self.acceleration + o.acceleration,
        }
    }
}

/// Advances a state by `dt` frames: `v + r·dt`, `r + a·dt`, `a`.
pub fn predict(state: &TrackedVertex, dt: f64) -> TrackedVertex {
    debug_assert!(dt > 0.0);
    TrackedVertex {
        position: state.position + state.velocity * dt,
        velocity: state.velocity + state.acceleration * dt,
        acceleration: state.acceleration,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DescriptorKind {
    /// Raw coordinates.
    #[default]
    Identity,
    /// Coordinates, plus a veto on pairs whose vertex normals disagree.
    NormalGated,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescriptorConfig {
    pub kind: DescriptorKind,
    /// Degrees, in `(0, 180]`. Only read by [`DescriptorKind::NormalGated`].
    pub normal_angle_limit: f64,
}

impl Default for DescriptorConfig {
    fn default() -> Self {
        Self {
            kind: DescriptorKind::Identity,
            normal_angle_limit: 60.0,
        }
    }
}

impl DescriptorConfig {
    pub fn is_valid(&self) -> bool {
        self.normal_angle_limit > 0.0 && self.normal_angle_limit <= 180.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub source: u32,
    pub target: u32,
    pub residual: f64,
}

/// Injective partial matching between two frames' vertex sets.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorrespondenceSet {
    pub pairs: Vec<Correspondence>,
    pub source_frame: usize,
    pub target_frame: usize,
}

impl CorrespondenceSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// `i -> i` for every vertex, zero residuals.
    pub fn identity(n: usize) -> Self {
        Self {
            pairs: (0..n as u32)
                .map(|i| Correspondence {
                    source: i,
                    target: i,
                    residual: 0.0,
                })
                .collect(),
            ..Default::default()
        }
    }

    /// True when no source and no target index repeats and residuals are
    /// non-negative.
    pub fn is_injective(&self) -> bool {
        let mut s: Vec<u32> = self.pairs.iter().map(|p| p.source).collect();
        let mut t: Vec<u32> = self.pairs.iter().map(|p| p.target).collect();
        s.sort_unstable();
        t.sort_unstable();
        s.windows(2).all(|w| w[0] != w[1])
            && t.windows(2).all(|w| w[0] != w[1])
            && self.pairs.iter().all(|p| p.residual >= 0.0)
    }
}

/// Mutual-nearest-neighbour matching of one-frame-ahead predicted sources
/// against the target's vertices.
///
/// A pair `(i, j)` is kept when `j` is the target nearest to `i`'s predicted
/// position, `i` is the predicted source nearest to `j`, the distance is at
/// most `max_residual`, and (normal-gated descriptor only) the normals lie
/// within the configured angle. `source_normals` feeds the normal gate; the
/// gate is skipped when they are absent.
pub fn match_frames(
    source: &[TrackedVertex],
    source_normals: Option<&[Vec3]>,
    target: &Mesh,
    cfg: &DescriptorConfig,
    max_residual: f64,
) -> CorrespondenceSet {
    if source.is_empty() || target.vertices.is_empty() {
        return CorrespondenceSet::default();
    }
    let predicted: Vec<Vec3> = source.iter().map(|s| predict(s, 1.0).position).collect();
    let target_tree = KdTree::new(&target.vertices);
    let source_tree = KdTree::new(&predicted);

    let gate = match (cfg.kind, source_normals) {
        (DescriptorKind::NormalGated, Some(sn)) => {
            let tn = target.normals.clone().unwrap_or_else(|| target.compute_vertex_normals());
            Some((sn, tn, cfg.normal_angle_limit.to_radians().cos()))
        }
        _ => None,
    };

    let pairs = predicted
        .par_iter()
        .enumerate()
        .filter_map(|(i, p)| {
            let (j, d2) = target_tree.nearest(p)?;
            let (back, _) = source_tree.nearest(&target.vertices[j as usize])?;
            if back as usize != i {
                return None;
            }
            let residual = d2.sqrt();
            if residual > max_residual {
                return None;
            }
            if let Some((sn, tn, cos_limit)) = &gate {
                let (a, b) = (sn[i], tn[j as usize]);
                let denom = a.norm() * b.norm();
                if denom > 0.0 && a.dot(&b) / denom < *cos_limit {
                    return None;
                }
            }
            Some(Correspondence {
                source: i as u32,
                target: j,
                residual,
            })
        })
        .collect();
    CorrespondenceSet {
        pairs,
        ..Default::default()
    }
}

/// Folds a frame's correspondences into the motion state.
///
/// Matched vertices jump to their target and get finite-difference velocity
/// and acceleration; unmatched ones coast: predicted position, half the
/// velocity, no acceleration.
pub fn update_motion_state(
    prev: &[TrackedVertex],
    matches: &CorrespondenceSet,
    target: &Mesh,
    dt: f64,
) -> Vec<TrackedVertex> {
    let mut next: Vec<TrackedVertex> = prev
        .iter()
        .map(|s| TrackedVertex {
            position: predict(s, dt).position,
            velocity: s.velocity * 0.5,
            acceleration: Vec3::zeros(),
        })
        .collect();
    for m in &matches.pairs {
        let old = &prev[m.source as usize];
        let position = target.vertices[m.target as usize];
        let velocity = (position - old.position) / dt;
        let acceleration = (velocity - old.velocity) / dt;
        next[m.source as usize] = TrackedVertex {
            position,
            velocity,
            acceleration,
        };
    }
    next
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud(points: Vec<Vec3>) -> Mesh {
        Mesh {
            vertices: points,
            ..Default::default()
        }
    }

    #[test]
    fn predict_examples() {
        let z = predict(&TrackedVertex::at_rest(Vec3::zeros()), 1.0);
        assert_eq!(z.position, Vec3::zeros());

        let s = TrackedVertex {
            position: Vec3::zeros(),
            velocity: Vec3::new(1.0, 0.0, 0.0),
            acceleration: Vec3::new(0.0, 2.0, 0.0),
        };
        let p = predict(&s, 1.0);
        assert_eq!(p.position, Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(p.velocity, Vec3::new(1.0, 2.0, 0.0));
        assert_eq!(p.acceleration, s.acceleration);

        let s = TrackedVertex {
            position: Vec3::new(1.0, 1.0, 1.0),
            velocity: Vec3::new(0.5, 0.0, -0.5),
            acceleration: Vec3::zeros(),
        };
        assert_eq!(predict(&s, 2.0).position, Vec3::new(2.0, 1.0, 0.0));
    }

    #[test]
    fn self_match_is_identity() {
        let pts: Vec<Vec3> = (0..30).map(|i| Vec3::new(i as f64, (i % 7) as f64, (i % 3) as f64 * 0.5)).collect();
        let src: Vec<_> = pts.iter().map(|&p| TrackedVertex::at_rest(p)).collect();
        let m = match_frames(&src, None, &cloud(pts), &DescriptorConfig::default(), f64::INFINITY);
        assert_eq!(m.len(), 30);
        for (k, p) in m.pairs.iter().enumerate() {
            assert_eq!((p.source, p.target, p.residual), (k as u32, k as u32, 0.0));
        }
    }

    #[test]
    fn prediction_lands_on_shifted_targets() {
        let delta = 0.25;
        let base: Vec<Vec3> = (0..20).map(|i| Vec3::new((i * 3) as f64, (i % 4) as f64, 0.0)).collect();
        // Source sits at base + delta with velocity delta; the target frame is
        // base + 2 delta, exactly where prediction puts it.
        let src: Vec<_> = base
            .iter()
            .map(|p| TrackedVertex {
                position: p + Vec3::new(delta, 0.0, 0.0),
                velocity: Vec3::new(delta, 0.0, 0.0),
                acceleration: Vec3::zeros(),
            })
            .collect();
        let target = cloud(base.iter().map(|p| p + Vec3::new(2.0 * delta, 0.0, 0.0)).collect());
        let m = match_frames(&src, None, &target, &DescriptorConfig::default(), 1e-9);
        assert_eq!(m.len(), 20);
        assert!(m.pairs.iter().all(|p| p.source == p.target && p.residual == 0.0));
    }

    #[test]
    fn residual_cap_and_normal_gate() {
        let src = vec![TrackedVertex::at_rest(Vec3::zeros()), TrackedVertex::at_rest(Vec3::new(10.0, 0.0, 0.0))];
        let mut target = cloud(vec![Vec3::new(0.1, 0.0, 0.0), Vec3::new(10.0, 0.0, 0.0)]);
        let m = match_frames(&src, None, &target, &DescriptorConfig::default(), 0.05);
        assert_eq!(m.pairs.len(), 1);
        assert_eq!(m.pairs[0].source, 1);

        target.normals = Some(vec![Vec3::z(), -Vec3::z()]);
        let cfg = DescriptorConfig {
            kind: DescriptorKind::NormalGated,
            normal_angle_limit: 90.0,
        };
        let sn = vec![Vec3::z(), Vec3::z()];
        let m = match_frames(&src, Some(&sn), &target, &cfg, f64::INFINITY);
        assert_eq!(m.pairs.iter().map(|p| p.source).collect::<Vec<_>>(), vec![0]);
    }

    #[test]
    fn motion_update_finite_differences() {
        let prev = vec![TrackedVertex::at_rest(Vec3::zeros()), TrackedVertex::at_rest(Vec3::new(5.0, 0.0, 0.0))];
        let target = cloud(vec![Vec3::new(1.0, 0.0, 0.0), Vec3::new(5.0, 0.0, 0.0)]);
        let matches = CorrespondenceSet {
            pairs: vec![
                Correspondence { source: 0, target: 0, residual: 0.0 },
                Correspondence { source: 1, target: 1, residual: 0.0 },
            ],
            ..Default::default()
        };
        let next = update_motion_state(&prev, &matches, &target, 1.0);
        assert_eq!(next[0].velocity, Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(next[0].acceleration, Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(next[1].velocity, Vec3::zeros());
        assert_eq!(next[1].acceleration, Vec3::zeros());
    }

    #[test]
    fn unmatched_vertices_coast_with_damping() {
        let prev = vec![TrackedVertex {
            position: Vec3::zeros(),
            velocity: Vec3::new(2.0, 0.0, 0.0),
            acceleration: Vec3::new(1.0, 0.0, 0.0),
        }];
        let next = update_motion_state(&prev, &CorrespondenceSet::default(), &cloud(vec![]), 1.0);
        assert_eq!(next[0].position, Vec3::new(2.0, 0.0, 0.0));
        assert_eq!(next[0].velocity, Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(next[0].acceleration, Vec3::zeros());
    }

    #[test]
    fn constant_velocity_track_settles() {
        let step = Vec3::new(0.5, -0.25, 0.125);
        let mut state = vec![TrackedVertex::at_rest(Vec3::zeros())];
        for f in 1..5 {
            let target = cloud(vec![step * f as f64]);
            let m = CorrespondenceSet::identity(1);
            state = update_motion_state(&state, &m, &target, 1.0);
            assert_eq!(state[0].velocity, step);
            if f >= 2 {
                assert_eq!(state[0].acceleration, Vec3::zeros());
            }
        }
    }
}
