//! Preconditioned conjugate gradient on the normal equations `K X = B`.
//!
//! `K` is 4n×4n, symmetric positive definite, shared by the three columns of
//! `X`; each column runs its own CG recurrence (its own step lengths) over the
//! same matrix-vector products. The preconditioner inverts each vertex's 4×4
//! diagonal block.

use nalgebra::{Matrix4, Matrix4x3, Vector3};
use rayon::prelude::*;

use super::energy::{QuadraticObjective, PAR_CHUNK};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOutcome {
    pub iterations: usize,
    /// Largest per-column `‖r‖ / ‖b‖` at exit.
    pub relative_residual: f64,
    pub converged: bool,
}

/// Column-wise dot products. Partial sums run over fixed chunks and are
/// added in order, so the result does not depend on the thread count.
fn dot(a: &[Matrix4x3<f64>], b: &[Matrix4x3<f64>]) -> Vector3<f64> {
    let partial: Vec<Vector3<f64>> = a
        .par_chunks(PAR_CHUNK)
        .zip(b.par_chunks(PAR_CHUNK))
        .map(|(xs, ys)| {
            xs.iter().zip(ys).fold(Vector3::zeros(), |acc, (x, y)| {
                let p = x.component_mul(y);
                acc + Vector3::new(p.column(0).sum(), p.column(1).sum(), p.column(2).sum())
            })
        })
        .collect();
    partial.iter().fold(Vector3::zeros(), |acc, p| acc + p)
}

/// Scales column `c` of every block by `s[c]`.
fn scale_columns(m: &Matrix4x3<f64>, s: &Vector3<f64>) -> Matrix4x3<f64> {
    let mut out = *m;
    for c in 0..3 {
        out.column_mut(c).scale_mut(s[c]);
    }
    out
}

/// Solves `K X = B` in place, starting from the given `x`.
pub fn solve(problem: &QuadraticObjective, x: &mut [Matrix4x3<f64>], tol: f64, max_iters: usize) -> CgOutcome {
    let n = problem.len();
    let b = problem.rhs();
    let precond: Vec<Matrix4<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let d = problem.diagonal_block(i);
            d.try_inverse().unwrap_or_else(|| {
                Matrix4::from_diagonal(&d.diagonal().map(|v| if v > 0.0 { 1.0 / v } else { 0.0 }))
            })
        })
        .collect();

    let mut r = vec![Matrix4x3::zeros(); n];
    problem.apply_system(x, &mut r);
    r.par_iter_mut().zip(b.par_iter()).for_each(|(r, b)| *r = b - *r);

    let b_norm = dot(&b, &b).map(f64::sqrt);
    let threshold = b_norm.map(|v| if v > 0.0 { tol * v } else { tol });
    let rel = |rr: &Vector3<f64>| {
        (0..3)
            .map(|c| rr[c].sqrt() / if b_norm[c] > 0.0 { b_norm[c] } else { 1.0 })
            .fold(0.0, f64::max)
    };

    let mut z: Vec<Matrix4x3<f64>> = precond.par_iter().zip(r.par_iter()).map(|(m, r)| m * r).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut rr = dot(&r, &r);
    let mut kp = vec![Matrix4x3::zeros(); n];
    let done = |rr: &Vector3<f64>| (0..3).all(|c| rr[c].sqrt() <= threshold[c]);

    let mut iterations = 0;
    while !done(&rr) && iterations < max_iters {
        problem.apply_system(&p, &mut kp);
        let pkp = dot(&p, &kp);
        // Columns that have already converged (or have nothing left to
        // reduce) take a zero step.
        let step = Vector3::from_fn(|c, _| {
            if rr[c].sqrt() <= threshold[c] || pkp[c] <= 0.0 {
                0.0
            } else {
                rz[c] / pkp[c]
            }
        });
        x.par_iter_mut().zip(p.par_iter()).for_each(|(x, p)| *x += scale_columns(p, &step));
        r.par_iter_mut().zip(kp.par_iter()).for_each(|(r, kp)| *r -= scale_columns(kp, &step));
        z.par_iter_mut()
            .zip(precond.par_iter().zip(r.par_iter()))
            .for_each(|(z, (m, r))| *z = m * r);
        let rz_new = dot(&r, &z);
        let mix = Vector3::from_fn(|c, _| if rz[c] > 0.0 { rz_new[c] / rz[c] } else { 0.0 });
        p.par_iter_mut()
            .zip(z.par_iter())
            .for_each(|(p, z)| *p = z + scale_columns(p, &mix));
        rz = rz_new;
        rr = dot(&r, &r);
        iterations += 1;
    }
    CgOutcome {
        iterations,
        relative_residual: rel(&rr),
        converged: done(&rr),
    }
}
