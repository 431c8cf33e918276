//! The per-frame loop: track, register, assess, then either fold the frame
//! into the current segment as a deformed keyframe or start a new segment.

use std::fmt::Write as _;

use rayon::join;
use thiserror::Error;

use crate::mesh::{KdTree, Mesh, MeshError, TriangleBvh, Vec3};
use crate::registration::{register, RegistrationConfig, RegistrationError};
use crate::tracking::{match_frames, update_motion_state, CorrespondenceSet, DescriptorConfig, TrackedVertex};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityThresholds {
    /// Largest accepted RMS point-to-surface distance, as a fraction of the
    /// original frame's bounding-box diagonal.
    pub geometry_tol: f64,
    /// Largest accepted RMS RGB distance over matched vertices.
    pub color_tol: f64,
}

impl Default for QualityThresholds {
    fn default() -> Self {
        Self {
            geometry_tol: 0.002,
            color_tol: 0.02,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityReport {
    pub e_d_rms: f64,
    /// Absent unless both meshes carry colors and some vertices matched.
    pub e_c_rms: Option<f64>,
    pub pass: bool,
}

/// Squared distances from `points` to the surface of `mesh` (to its vertices
/// when it has no triangles).
fn squared_distances(points: &[Vec3], mesh: &Mesh) -> Vec<f64> {
    use rayon::prelude::*;
    match TriangleBvh::new(mesh) {
        Ok(bvh) => points.par_iter().map(|p| bvh.closest_point(p).distance.powi(2)).collect(),
        Err(_) => {
            let tree = KdTree::new(&mesh.vertices);
            points
                .par_iter()
                .map(|p| tree.nearest(p).map_or(f64::INFINITY, |(_, d2)| d2))
                .collect()
        }
    }
}

fn rms(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    (values.iter().sum::<f64>() / values.len() as f64).sqrt()
}

/// Symmetric RMS point-to-surface distance between two meshes, in model
/// units: the larger of the two one-sided values.
pub fn symmetric_rms_distance(a: &Mesh, b: &Mesh) -> f64 {
    let (ab, ba) = join(
        || rms(&squared_distances(&a.vertices, b)),
        || rms(&squared_distances(&b.vertices, a)),
    );
    ab.max(ba)
}

/// Compares a deformed keyframe against the frame it stands in for.
/// `matches` pairs deformed vertices (source) with original vertices
/// (target) for the color term.
pub fn assess_quality(
    deformed: &Mesh,
    original: &Mesh,
    matches: &CorrespondenceSet,
    thresholds: &QualityThresholds,
) -> QualityReport {
    let diag = original.bounding_box().diagonal();
    let dist = symmetric_rms_distance(deformed, original);
    let e_d_rms = if dist == 0.0 {
        0.0
    } else if diag > 0.0 {
        dist / diag
    } else {
        f64::INFINITY
    };
    let e_c_rms = match (&deformed.colors, &original.colors) {
        (Some(dc), Some(oc)) if !matches.is_empty() => {
            let sq: Vec<f64> = matches
                .pairs
                .iter()
                .map(|m| (dc[m.source as usize] - oc[m.target as usize]).norm_squared())
                .collect();
            Some(rms(&sq))
        }
        _ => None,
    };
    let pass = e_d_rms <= thresholds.geometry_tol && e_c_rms.is_none_or(|c| c <= thresholds.color_tol);
    QualityReport { e_d_rms, e_c_rms, pass }
}

/// A keyframe and every frame represented by deforming it.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    /// Connectivity, UVs and frame-0 attributes for the whole segment.
    pub key: Mesh,
    /// Vertex positions per frame; `frames[0]` is the key's own.
    pub frames: Vec<Vec<Vec3>>,
    /// Original sequence index of every frame.
    pub frame_ids: Vec<usize>,
    /// Per-frame vertex normals, when the key has normals.
    pub normals: Option<Vec<Vec<Vec3>>>,
    /// Per-frame vertex colors, when the key has colors.
    pub colors: Option<Vec<Vec<Vec3>>>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SegmentError {
    #[error("segment has no frames")]
    Empty,
    #[error("frame {frame} has {len} vertices, key has {expected}")]
    FrameLength { frame: usize, len: usize, expected: usize },
    #[error("frame ids are not consecutive at position {0}")]
    FrameIds(usize),
    #[error("{0} arrays do not cover every frame")]
    Attribute(&'static str),
}

impl Segment {
    /// One-frame segment keyed by `key`.
    pub fn new(key: Mesh, frame_id: usize) -> Self {
        Self {
            frames: vec![key.vertices.clone()],
            frame_ids: vec![frame_id],
            normals: key.normals.clone().map(|n| vec![n]),
            colors: key.colors.clone().map(|c| vec![c]),
            key,
        }
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn vertex_count(&self) -> usize {
        self.key.vertex_count()
    }

    /// Appends a frame given as the key connectivity with new positions.
    pub fn push(&mut self, frame_id: usize, positions: Vec<Vec3>) {
        if let Some(normals) = &mut self.normals {
            normals.push(self.key.with_vertices(positions.clone()).compute_vertex_normals());
        }
        if let (Some(colors), Some(key_colors)) = (&mut self.colors, &self.key.colors) {
            colors.push(key_colors.clone());
        }
        self.frames.push(positions);
        self.frame_ids.push(frame_id);
    }

    /// Frame `k` as a standalone mesh.
    pub fn frame_mesh(&self, k: usize) -> Mesh {
        let mut m = self.key.with_vertices(self.frames[k].clone());
        if let Some(n) = &self.normals {
            m.normals = Some(n[k].clone());
        }
        if let Some(c) = &self.colors {
            m.colors = Some(c[k].clone());
        }
        m
    }

    pub fn validate(&self) -> Result<(), SegmentError> {
        if self.frames.is_empty() {
            return Err(SegmentError::Empty);
        }
        let n = self.vertex_count();
        for (frame, f) in self.frames.iter().enumerate() {
            if f.len() != n {
                return Err(SegmentError::FrameLength {
                    frame,
                    len: f.len(),
                    expected: n,
                });
            }
        }
        if self.frame_ids.len() != self.frames.len() {
            return Err(SegmentError::FrameIds(self.frame_ids.len()));
        }
        if let Some(i) = self.frame_ids.windows(2).position(|w| w[1] != w[0] + 1) {
            return Err(SegmentError::FrameIds(i + 1));
        }
        let covers = |a: &Option<Vec<Vec<Vec3>>>| {
            a.as_ref()
                .is_none_or(|a| a.len() == self.frames.len() && a.iter().all(|v| v.len() == n))
        };
        if !covers(&self.normals) {
            return Err(SegmentError::Attribute("normal"));
        }
        if !covers(&self.colors) {
            return Err(SegmentError::Attribute("color"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeyframeReason {
    /// Frame 0.
    First,
    /// Registration ran but the result failed the quality gate.
    Quality,
    /// Registration diverged or could not run.
    Solver,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameStats {
    pub frame_id: usize,
    pub segment_id: usize,
    pub keyframe: Option<KeyframeReason>,
    /// Quality of the registration attempt; 0 for frame 0.
    pub e_d_rms: f64,
    pub e_c_rms: Option<f64>,
    pub registration_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PipelineStats {
    pub frames: Vec<FrameStats>,
}

impl PipelineStats {
    pub fn keyframes(&self) -> Vec<usize> {
        self.frames
            .iter()
            .filter(|f| f.keyframe.is_some())
            .map(|f| f.frame_id)
            .collect()
    }

    pub fn segment_count(&self) -> usize {
        self.keyframes().len()
    }

    /// One row per frame. Keyframe rows carry the quality of the rejected
    /// registration attempt; `solver-diverged` marks keyframes forced by
    /// the solver rather than the quality gate.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("frame-id,segment-id,is-keyframe,E_d_rms,E_c_rms,registration-iterations,solver-diverged\n");
        for f in &self.frames {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                f.frame_id,
                f.segment_id,
                u8::from(f.keyframe.is_some()),
                f.e_d_rms,
                f.e_c_rms.map(|c| c.to_string()).unwrap_or_default(),
                f.registration_iterations,
                u8::from(f.keyframe == Some(KeyframeReason::Solver)),
            );
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub thresholds: QualityThresholds,
    pub descriptor: DescriptorConfig,
    /// Tracking residual cap as a fraction of the target frame's diagonal.
    pub max_residual: f64,
    pub registration: RegistrationConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            thresholds: QualityThresholds::default(),
            descriptor: DescriptorConfig::default(),
            max_residual: 0.02,
            registration: RegistrationConfig::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("the sequence has no frames")]
    NoFrames,
    #[error("frame {frame} is not a valid mesh")]
    Frame { frame: usize, source: MeshError },
    #[error("registration failed on frame {frame}")]
    Registration { frame: usize, source: RegistrationError },
    #[error("invalid pipeline config: {0}")]
    InvalidConfig(&'static str),
}

/// Open segment plus the motion state of its deformed keyframe.
struct Open {
    segment: Segment,
    state: Vec<TrackedVertex>,
}

impl Open {
    fn new(key: Mesh, frame_id: usize) -> Self {
        let state = key.vertices.iter().map(|&p| TrackedVertex::at_rest(p)).collect();
        Self {
            segment: Segment::new(key, frame_id),
            state,
        }
    }

    fn latest(&self) -> Mesh {
        self.segment.key.with_vertices(self.state.iter().map(|s| s.position).collect())
    }
}

/// Mutual nearest neighbours between two vertex sets, no residual cap.
fn nearest_pairs(from: &Mesh, to: &Mesh) -> CorrespondenceSet {
    let rest: Vec<TrackedVertex> = from.vertices.iter().map(|&p| TrackedVertex::at_rest(p)).collect();
    match_frames(&rest, None, to, &DescriptorConfig::default(), f64::INFINITY)
}

/// Runs the keyframe loop over `frames` and returns the segments with
/// per-frame statistics. Deterministic in its inputs.
pub fn run_pipeline<I>(frames: I, cfg: &PipelineConfig) -> Result<(Vec<Segment>, PipelineStats), PipelineError>
where
    I: IntoIterator<Item = Result<Mesh, MeshError>>,
{
    if !(cfg.thresholds.geometry_tol >= 0.0 && cfg.thresholds.color_tol >= 0.0) {
        return Err(PipelineError::InvalidConfig("tolerances must be >= 0"));
    }
    if !cfg.descriptor.is_valid() {
        return Err(PipelineError::InvalidConfig("normal angle limit must lie in (0, 180]"));
    }
    if !(cfg.max_residual >= 0.0) {
        return Err(PipelineError::InvalidConfig("max residual must be >= 0"));
    }
    cfg.registration
        .validate()
        .map_err(|source| PipelineError::Registration { frame: 0, source })?;

    let mut segments = Vec::new();
    let mut stats = PipelineStats::default();
    let mut open: Option<Open> = None;

    for (frame_id, frame) in frames.into_iter().enumerate() {
        let frame = frame.map_err(|source| PipelineError::Frame { frame: frame_id, source })?;
        frame
            .validate()
            .map_err(|source| PipelineError::Frame { frame: frame_id, source })?;

        let Some(current) = open.as_mut() else {
            stats.frames.push(FrameStats {
                frame_id,
                segment_id: 0,
                keyframe: Some(KeyframeReason::First),
                e_d_rms: 0.0,
                e_c_rms: None,
                registration_iterations: 0,
            });
            open = Some(Open::new(frame, frame_id));
            continue;
        };

        let source = current.latest();
        let normals = (cfg.descriptor.kind == crate::tracking::DescriptorKind::NormalGated)
            .then(|| source.compute_vertex_normals());
        let max_residual = cfg.max_residual * frame.bounding_box().diagonal();
        let matches = match_frames(&current.state, normals.as_deref(), &frame, &cfg.descriptor, max_residual);

        let attempt = match register(&source, &frame, &matches, &cfg.registration) {
            Ok(reg) => Some(reg),
            Err(RegistrationError::EmptyTarget) => None,
            Err(source) => return Err(PipelineError::Registration { frame: frame_id, source }),
        };

        let segment_id = segments.len();
        let (outcome, quality, iterations): (Result<Mesh, KeyframeReason>, _, _) = match attempt {
            Some(reg) if !reg.report.diverged => {
                let pairs = nearest_pairs(&reg.deformed, &frame);
                let q = assess_quality(&reg.deformed, &frame, &pairs, &cfg.thresholds);
                let iterations = reg.report.iterations;
                let outcome = if q.pass { Ok(reg.deformed) } else { Err(KeyframeReason::Quality) };
                (outcome, Some(q), iterations)
            }
            Some(reg) => (Err(KeyframeReason::Solver), None, reg.report.iterations),
            None => (Err(KeyframeReason::Solver), None, 0),
        };

        match outcome {
            Ok(deformed) => {
                current.state = update_motion_state(
                    &current.state,
                    &CorrespondenceSet::identity(deformed.vertex_count()),
                    &deformed,
                    1.0,
                );
                current.segment.push(frame_id, deformed.vertices);
                stats.frames.push(FrameStats {
                    frame_id,
                    segment_id,
                    keyframe: None,
                    e_d_rms: quality.map_or(0.0, |q| q.e_d_rms),
                    e_c_rms: quality.and_then(|q| q.e_c_rms),
                    registration_iterations: iterations,
                });
            }
            Err(reason) => {
                let closed = open.take().expect("segment is open");
                segments.push(closed.segment);
                stats.frames.push(FrameStats {
                    frame_id,
                    segment_id: segment_id + 1,
                    keyframe: Some(reason),
                    e_d_rms: quality.map_or(f64::NAN, |q| q.e_d_rms),
                    e_c_rms: quality.and_then(|q| q.e_c_rms),
                    registration_iterations: iterations,
                });
                open = Some(Open::new(frame, frame_id));
            }
        }
    }
    match open {
        Some(o) => segments.push(o.segment),
        None => return Err(PipelineError::NoFrames),
    }
    Ok((segments, stats))
}
