//! The three registration energies and the quadratic they form once closest
//! points are frozen.

use nalgebra::{Matrix3x4, Matrix4, Matrix4x3, Vector4};

use crate::mesh::{Mesh, MeshError, TriangleBvh, Vec3};
use crate::tracking::CorrespondenceSet;

pub type Affine = Matrix3x4<f64>;

/// Smallest per-task slice for the parallel vertex loops.
pub(crate) const PAR_CHUNK: usize = 512;

/// One 3×4 affine transform per keyframe vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineField {
    pub transforms: Vec<Affine>,
}

impl AffineField {
    pub fn identity(n: usize) -> Self {
        Self {
            transforms: vec![Affine::identity(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.transforms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transforms.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.transforms.iter().all(|a| a.iter().all(|v| v.is_finite()))
    }

    /// `A_i · (v_i, 1)` for every vertex.
    pub fn apply(&self, points: &[Vec3]) -> Vec<Vec3> {
        self.transforms.iter().zip(points).map(|(a, p)| apply(a, p)).collect()
    }
}

#[inline]
pub fn apply(a: &Affine, p: &Vec3) -> Vec3 {
    a * homogeneous(p)
}

#[inline]
pub(crate) fn homogeneous(p: &Vec3) -> Vector4<f64> {
    Vector4::new(p.x, p.y, p.z, 1.0)
}

/// `Σ dist²(target, p)` over the deformed points.
pub fn energy_data(deformed: &[Vec3], target: &TriangleBvh) -> f64 {
    deformed.iter().map(|p| target.closest_point(p).distance.powi(2)).sum()
}

/// [`energy_data`] against a mesh, building the acceleration structure.
pub fn energy_data_mesh(deformed: &[Vec3], target: &Mesh) -> Result<f64, MeshError> {
    Ok(energy_data(deformed, &TriangleBvh::new(target)?))
}

/// `Σ_{(i,j)} ‖(A_i − A_j) · diag(1, 1, 1, γ)‖²_F`.
pub fn energy_smooth(field: &AffineField, edges: &[(u32, u32)], gamma: f64) -> f64 {
    let g2 = gamma * gamma;
    edges
        .iter()
        .map(|&(i, j)| {
            let d = field.transforms[i as usize] - field.transforms[j as usize];
            let mut s = 0.0;
            for r in 0..3 {
                for c in 0..3 {
                    s += d[(r, c)] * d[(r, c)];
                }
                s += g2 * d[(r, 3)] * d[(r, 3)];
            }
            s
        })
        .sum()
}

/// `Σ_{(i,j)∈M} ‖A_i · (k_i, 1) − t_j‖²`.
pub fn energy_match(field: &AffineField, matches: &CorrespondenceSet, key: &[Vec3], target: &[Vec3]) -> f64 {
    matches
        .pairs
        .iter()
        .map(|m| {
            let i = m.source as usize;
            (apply(&field.transforms[i], &key[i]) - target[m.target as usize]).norm_squared()
        })
        .sum()
}

/// Registration objective with data correspondences frozen:
///
/// `Σ w_i ‖A_i k_i − d_i‖² + α Σ_edges ‖(A_i − A_j)G‖² + β Σ_M ‖A_i k_i − t_i‖²
///  + ε Σ ‖A_i − Â_i‖²_F`
///
/// The last term is a tiny pull towards the previous iterate `Â` that keeps
/// the normal equations positive definite when the other terms leave some
/// transform directions free (planar patches, isolated vertices).
///
/// Internally each transform is stored transposed, `X_i = A_iᵀ` (4×3), so the
/// three output coordinates share one 4n×4n system matrix.
#[derive(Debug, Clone)]
pub struct QuadraticObjective {
    pub(crate) points: Vec<Vector4<f64>>,
    /// CSR adjacency.
    pub(crate) adj_start: Vec<u32>,
    pub(crate) adj: Vec<u32>,
    pub(crate) alpha: f64,
    pub(crate) g2: Matrix4<f64>,
    pub(crate) data: Vec<Option<Vec3>>,
    pub(crate) beta: f64,
    pub(crate) matched: Vec<Option<Vec3>>,
    pub(crate) eps: f64,
    pub(crate) anchor: Vec<Matrix4x3<f64>>,
    diagonal: Vec<Matrix4<f64>>,
}

impl QuadraticObjective {
    /// `data[i]`: frozen closest point for vertex `i`, `None` if pruned.
    /// `matched[i]`: match target for vertex `i`, if any.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        key: &[Vec3],
        edges: &[(u32, u32)],
        alpha: f64,
        gamma: f64,
        data: Vec<Option<Vec3>>,
        beta: f64,
        matched: Vec<Option<Vec3>>,
        eps: f64,
        anchor: &AffineField,
    ) -> Self {
        let n = key.len();
        let mut degree = vec![0u32; n + 1];
        for &(i, j) in edges {
            degree[i as usize] += 1;
            degree[j as usize] += 1;
        }
        let mut adj_start = vec![0u32; n + 1];
        for i in 0..n {
            adj_start[i + 1] = adj_start[i] + degree[i];
        }
        let mut fill = adj_start.clone();
        let mut adj = vec![0u32; adj_start[n] as usize];
        for &(i, j) in edges {
            adj[fill[i as usize] as usize] = j;
            fill[i as usize] += 1;
            adj[fill[j as usize] as usize] = i;
            fill[j as usize] += 1;
        }
        let mut q = Self {
            points: key.iter().map(homogeneous).collect(),
            adj_start,
            adj,
            alpha,
            g2: Matrix4::from_diagonal(&Vector4::new(1.0, 1.0, 1.0, gamma * gamma)),
            data,
            beta,
            matched,
            eps,
            anchor: anchor.transforms.iter().map(|a| a.transpose()).collect(),
            diagonal: Vec::new(),
        };
        q.diagonal = (0..n).map(|i| q.build_diagonal_block(i)).collect();
        q
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub(crate) fn neighbors(&self, i: usize) -> &[u32] {
        &self.adj[self.adj_start[i] as usize..self.adj_start[i + 1] as usize]
    }

    /// Diagonal 4×4 block of the system matrix for vertex `i`.
    pub(crate) fn diagonal_block(&self, i: usize) -> Matrix4<f64> {
        self.diagonal[i]
    }

    fn build_diagonal_block(&self, i: usize) -> Matrix4<f64> {
        let v = &self.points[i];
        let vvt = v * v.transpose();
        let mut w = 0.0;
        if self.data[i].is_some() {
            w += 1.0;
        }
        if self.matched[i].is_some() {
            w += self.beta;
        }
        self.g2 * (self.alpha * self.neighbors(i).len() as f64) + vvt * w + Matrix4::identity() * self.eps
    }

    /// `K X`.
    pub(crate) fn apply_system(&self, x: &[Matrix4x3<f64>], out: &mut [Matrix4x3<f64>]) {
        use rayon::prelude::*;
        out.par_iter_mut().with_min_len(PAR_CHUNK).enumerate().for_each(|(i, y)| {
            let mut acc = self.diagonal[i] * x[i];
            let mut nsum = Matrix4x3::zeros();
            for &j in self.neighbors(i) {
                nsum += x[j as usize];
            }
            acc -= self.g2 * nsum * self.alpha;
            *y = acc;
        });
    }

    /// Right-hand side `B` of `K X = B`.
    pub(crate) fn rhs(&self) -> Vec<Matrix4x3<f64>> {
        (0..self.len())
            .map(|i| {
                let v = &self.points[i];
                let mut b = self.anchor[i] * self.eps;
                if let Some(d) = &self.data[i] {
                    b += v * d.transpose();
                }
                if let Some(t) = &self.matched[i] {
                    b += v * t.transpose() * self.beta;
                }
                b
            })
            .collect()
    }

    /// Objective value at `field`.
    pub fn value(&self, field: &AffineField) -> f64 {
        let mut total = 0.0;
        for i in 0..self.len() {
            let a = &field.transforms[i];
            let p = a * self.points[i];
            if let Some(d) = &self.data[i] {
                total += (p - d).norm_squared();
            }
            if let Some(t) = &self.matched[i] {
                total += self.beta * (p - t).norm_squared();
            }
            total += self.eps * (a.transpose() - self.anchor[i]).norm_squared();
            for &j in self.neighbors(i) {
                if (j as usize) > i {
                    let d = (a - field.transforms[j as usize]).transpose();
                    total += self.alpha * (self.g2 * d).component_mul(&d).sum();
                }
            }
        }
        total
    }

    /// Gradient with respect to the entries of every `A_i`: `2 (K X − B)ᵀ`.
    pub fn gradient(&self, field: &AffineField) -> Vec<Affine> {
        let x: Vec<Matrix4x3<f64>> = field.transforms.iter().map(|a| a.transpose()).collect();
        let mut kx = vec![Matrix4x3::zeros(); x.len()];
        self.apply_system(&x, &mut kx);
        kx.iter().zip(self.rhs()).map(|(k, b)| ((k - b) * 2.0).transpose()).collect()
    }
}
