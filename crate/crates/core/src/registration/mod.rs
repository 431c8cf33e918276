//! Non-rigid registration of a keyframe onto a target frame.
//!
//! Every key vertex gets its own affine transform. The objective is
//! `E_d + α E_s + β E_m`: squared distance of the deformed vertices to the
//! target surface, squared differences of neighbouring transforms, and
//! squared distance of matched vertices to their tracked targets. Closest
//! points are frozen each outer iteration, which leaves a linear least-squares
//! problem solved by conjugate gradient; β then decays so the (possibly noisy)
//! matches guide early iterations only.
//!
//! The problem is solved on a copy of the data centred on the key's bounding
//! box and scaled to unit diagonal, so the default weights behave the same on
//! any model size. Reported energies are in that normalized frame; the
//! returned field and mesh are in model units.

mod energy;
mod solver;

pub use energy::{apply, energy_data, energy_data_mesh, energy_match, energy_smooth, Affine, AffineField, QuadraticObjective};
pub use solver::{solve, CgOutcome};

use nalgebra::{Matrix3, Matrix4x3};
use rayon::prelude::*;
use thiserror::Error;

use crate::mesh::{Mesh, MeshError, TriangleBvh, Vec3};
use crate::tracking::CorrespondenceSet;

/// Pull towards the previous iterate, relative to unit data weights.
const REGULARIZATION: f64 = 1e-8;
/// Closest-point pruning never drops distances below this (normalized units).
const PRUNE_FLOOR: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum RegistrationError {
    #[error("key mesh has no vertices")]
    EmptyKey,
    #[error("target mesh has no triangles")]
    EmptyTarget,
    #[error("match {index} pairs source {from} with target {to}, out of range")]
    InvalidMatch { index: usize, from: u32, to: u32 },
    #[error("invalid registration config: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegistrationConfig {
    /// Smoothness weight.
    pub alpha: f64,
    /// Initial match weight.
    pub beta: f64,
    /// Weight of translation differences inside the smoothness term.
    pub gamma: f64,
    pub outer_iterations: usize,
    /// β is multiplied by this after every outer iteration.
    pub beta_decay: f64,
    /// Stop once the relative change of the total energy falls below this.
    pub convergence_tol: f64,
    pub cg_tol: f64,
    pub cg_max_iters: usize,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self {
            alpha: 10.0,
            beta: 1.0,
            gamma: 1.0,
            outer_iterations: 30,
            beta_decay: 0.7,
            convergence_tol: 1e-5,
            cg_tol: 1e-8,
            cg_max_iters: 2000,
        }
    }
}

impl RegistrationConfig {
    pub fn validate(&self) -> Result<(), RegistrationError> {
        let bad = |m| Err(RegistrationError::InvalidConfig(m));
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be finite and >= 0");
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad("beta must be finite and >= 0");
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad("gamma must be finite and > 0");
        }
        if !(self.beta_decay > 0.0 && self.beta_decay <= 1.0) {
            return bad("beta decay must lie in (0, 1]");
        }
        if !(self.convergence_tol >= 0.0 && self.cg_tol >= 0.0) {
            return bad("tolerances must be >= 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RegistrationReport {
    pub e_data: f64,
    pub e_smooth: f64,
    pub e_match: f64,
    /// `e_data + α e_smooth + β e_match` with `β` as below.
    pub total: f64,
    /// Match weight in effect at the returned field.
    pub beta: f64,
    pub iterations: usize,
    pub converged: bool,
    /// The energy rose on two consecutive iterations; the field returned is
    /// the last one before the rise.
    pub diverged: bool,
    /// Vertices with no edge, no match and no data term in some iteration,
    /// held in place only by the regularizer.
    pub regularized_vertices: usize,
}

#[derive(Debug, Clone)]
pub struct Registration {
    /// Key connectivity and attributes with deformed positions.
    pub deformed: Mesh,
    pub field: AffineField,
    pub report: RegistrationReport,
}

#[derive(Debug, Clone, Copy)]
struct Energies {
    data: f64,
    smooth: f64,
    matched: f64,
}

impl Energies {
    fn total(&self, alpha: f64, beta: f64) -> f64 {
        self.data + alpha * self.smooth + beta * self.matched
    }
}

struct Problem<'a> {
    key: Vec<Vec3>,
    edges: Vec<(u32, u32)>,
    bvh: TriangleBvh,
    matches: &'a CorrespondenceSet,
    target: Vec<Vec3>,
    matched: Vec<Option<Vec3>>,
    cfg: &'a RegistrationConfig,
}

impl Problem<'_> {
    fn closest(&self, deformed: &[Vec3]) -> Vec<(Vec3, f64)> {
        deformed
            .par_iter()
            .map(|p| {
                let cp = self.bvh.closest_point(p);
                (cp.point, cp.distance)
            })
            .collect()
    }

    fn energies(&self, field: &AffineField, deformed: &[Vec3]) -> Energies {
        self.energies_from(field, &self.closest(deformed))
    }

    fn energies_from(&self, field: &AffineField, closest: &[(Vec3, f64)]) -> Energies {
        Energies {
            data: closest.iter().map(|(_, d)| d * d).sum(),
            smooth: energy_smooth(field, &self.edges, self.cfg.gamma),
            matched: energy_match(field, self.matches, &self.key, &self.target),
        }
    }
}

fn median(values: &mut [f64]) -> f64 {
    let mid = values.len() / 2;
    let (_, m, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    *m
}

/// Deforms `key` onto `target`, guided by `matches` (key vertex → target
/// vertex). The deformed mesh keeps the key's triangles untouched.
pub fn register(
    key: &Mesh,
    target: &Mesh,
    matches: &CorrespondenceSet,
    cfg: &RegistrationConfig,
) -> Result<Registration, RegistrationError> {
    cfg.validate()?;
    key.validate()?;
    if key.vertices.is_empty() {
        return Err(RegistrationError::EmptyKey);
    }
    if target.triangles.is_empty() {
        return Err(RegistrationError::EmptyTarget);
    }
    for (index, m) in matches.pairs.iter().enumerate() {
        if m.source as usize >= key.vertex_count() || m.target as usize >= target.vertex_count() {
            return Err(RegistrationError::InvalidMatch {
                index,
                from: m.source,
                to: m.target,
            });
        }
    }

    let bbox = key.bounding_box();
    let center = bbox.center();
    let diag = bbox.diagonal();
    let scale = if diag > 0.0 { 1.0 / diag } else { 1.0 };
    let normalize = |p: &Vec3| (p - center) * scale;

    let key_n: Vec<Vec3> = key.vertices.iter().map(normalize).collect();
    let target_n = target.with_vertices(target.vertices.iter().map(normalize).collect());
    let mut matched = vec![None; key_n.len()];
    for m in &matches.pairs {
        matched[m.source as usize] = Some(target_n.vertices[m.target as usize]);
    }
    let problem = Problem {
        key: key_n,
        edges: key.edges(),
        bvh: TriangleBvh::new(&target_n)?,
        matches,
        target: target_n.vertices,
        matched,
        cfg,
    };
    let n = problem.key.len();

    let mut field = AffineField::identity(n);
    let mut deformed = problem.key.clone();
    let mut energies = problem.energies(&field, &deformed);
    if let Some(init) = rigid_fit(&problem.key, &problem.matched) {
        let candidate = AffineField {
            transforms: vec![init; n],
        };
        let moved = candidate.apply(&problem.key);
        let e = problem.energies(&candidate, &moved);
        if e.total(cfg.alpha, cfg.beta) < energies.total(cfg.alpha, cfg.beta) {
            field = candidate;
            deformed = moved;
            energies = e;
        }
    }
    let mut beta = cfg.beta;
    let mut report = RegistrationReport {
        beta,
        ..Default::default()
    };

    if energies.total(cfg.alpha, beta) == 0.0 {
        report.converged = true;
        return Ok(finish(key, field, energies, report, cfg.alpha, center, scale));
    }

    let mut degree = vec![0u32; n];
    for &(i, j) in &problem.edges {
        degree[i as usize] += 1;
        degree[j as usize] += 1;
    }

    // Field and energies from before the current run of increases.
    let mut fallback: Option<(AffineField, Energies, f64)> = None;
    let mut rises = 0;

    for iteration in 1..=cfg.outer_iterations {
        let closest = problem.closest(&deformed);
        let mut dists: Vec<f64> = closest.iter().map(|c| c.1).collect();
        let cutoff = (3.0 * median(&mut dists)).max(PRUNE_FLOOR);
        let data: Vec<Option<Vec3>> = closest.iter().map(|&(p, d)| (d <= cutoff).then_some(p)).collect();

        let isolated = (0..n)
            .filter(|&i| degree[i] == 0 && problem.matched[i].is_none() && data[i].is_none())
            .count();
        report.regularized_vertices = report.regularized_vertices.max(isolated);

        // Progress is judged on the vertices that keep a data term this
        // iteration: on that set each solve provably does not increase the
        // energy, while pruned vertices may legitimately drift.
        let kept = |c: &[(Vec3, f64)]| -> f64 {
            c.iter().zip(&data).filter(|(_, d)| d.is_some()).map(|((_, d), _)| d * d).sum()
        };
        let before = kept(&closest) + cfg.alpha * energies.smooth + beta * energies.matched;

        let quad = QuadraticObjective::new(
            &problem.key,
            &problem.edges,
            cfg.alpha,
            cfg.gamma,
            data.clone(),
            beta,
            problem.matched.clone(),
            REGULARIZATION,
            &field,
        );
        let mut x: Vec<Matrix4x3<f64>> = field.transforms.iter().map(|a| a.transpose()).collect();
        let cg = solve(&quad, &mut x, cfg.cg_tol, cfg.cg_max_iters);
        if !cg.converged {
            log::debug!("inner solve stopped at relative residual {:.3e}", cg.relative_residual);
        }
        let next = AffineField {
            transforms: x.iter().map(|m| m.transpose()).collect(),
        };
        let next_deformed = next.apply(&problem.key);
        let next_closest = problem.closest(&next_deformed);
        let next_energies = problem.energies_from(&next, &next_closest);
        let after = kept(&next_closest) + cfg.alpha * next_energies.smooth + beta * next_energies.matched;
        report.iterations = iteration;

        if !next.is_finite() || !after.is_finite() {
            rises = 2;
        } else if after > before * (1.0 + 1e-9) {
            if rises == 0 {
                fallback = Some((field.clone(), energies, beta));
            }
            rises += 1;
        } else {
            rises = 0;
            fallback = None;
        }
        if rises >= 2 {
            let (f, e, b) = fallback.unwrap_or((field, energies, beta));
            report.diverged = true;
            report.beta = b;
            return Ok(finish(key, f, e, report, cfg.alpha, center, scale));
        }

        field = next;
        deformed = next_deformed;
        energies = next_energies;
        report.beta = beta;

        let change = (before - after).abs() / before.max(f64::MIN_POSITIVE);
        if change < cfg.convergence_tol || energies.total(cfg.alpha, beta) == 0.0 {
            report.converged = true;
            break;
        }
        beta *= cfg.beta_decay;
    }
    Ok(finish(key, field, energies, report, cfg.alpha, center, scale))
}

/// Least-squares rigid motion taking the matched key points onto their
/// targets. Needs three matches that are not collinear.
fn rigid_fit(key: &[Vec3], matched: &[Option<Vec3>]) -> Option<Affine> {
    let pairs: Vec<(Vec3, Vec3)> = key
        .iter()
        .zip(matched)
        .filter_map(|(k, t)| t.map(|t| (*k, t)))
        .collect();
    if pairs.len() < 3 {
        return None;
    }
    let inv = 1.0 / pairs.len() as f64;
    let ck = pairs.iter().map(|p| p.0).sum::<Vec3>() * inv;
    let ct = pairs.iter().map(|p| p.1).sum::<Vec3>() * inv;
    let mut cov = Matrix3::zeros();
    for (k, t) in &pairs {
        cov += (t - ct) * (k - ck).transpose();
    }
    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u?, svd.v_t?);
    let mut s = svd.singular_values;
    s.as_mut_slice().sort_by(|a, b| b.total_cmp(a));
    if !(s[1] > 1e-12 * s[0].max(f64::MIN_POSITIVE)) {
        return None;
    }
    let mut fix = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        fix[(2, 2)] = -1.0;
    }
    let r = u * fix * v_t;
    let mut a = Affine::zeros();
    a.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
    a.set_column(3, &(ct - r * ck));
    Some(a)
}

/// Maps the normalized-frame field back to model units and assembles the
/// result.
fn finish(
    key: &Mesh,
    field: AffineField,
    energies: Energies,
    mut report: RegistrationReport,
    alpha: f64,
    center: Vec3,
    scale: f64,
) -> Registration {
    report.e_data = energies.data;
    report.e_smooth = energies.smooth;
    report.e_match = energies.matched;
    report.total = energies.total(alpha, report.beta);

    let identity = field.transforms.iter().all(|a| *a == Affine::identity());
    if identity {
        return Registration {
            deformed: key.clone(),
            field,
            report,
        };
    }
    // p = c + (B s (v - c) + t) / s  =  B v + (c - B c + t / s)
    let transforms: Vec<Affine> = field
        .transforms
        .iter()
        .map(|a| {
            let b = a.fixed_view::<3, 3>(0, 0).into_owned();
            let t = a.column(3).into_owned();
            let mut out = *a;
            out.set_column(3, &(center - b * center + t / scale));
            out
        })
        .collect();
    let field = AffineField { transforms };
    let deformed = key.with_vertices(field.apply(&key.vertices));
    Registration {
        deformed,
        field,
        report,
    }
}
