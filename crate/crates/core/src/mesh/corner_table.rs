use std::collections::{BTreeSet, HashMap};

use super::Mesh;

/// Opposite-corner value for corners whose opposite edge is on the boundary.
pub const BOUNDARY: u32 = u32::MAX;

/// Corner table: `V[c]` is the vertex at corner `c`, `O[c]` the corner facing
/// it across the edge opposite `c`. Corner `c` lives in triangle `c / 3`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CornerTable {
    v: Vec<u32>,
    o: Vec<u32>,
}

/// Why a mesh is not an orientable 2-manifold with boundary.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NonManifoldReport {
    /// Undirected edges with more than two incident triangles.
    pub overshared_edges: Vec<[u32; 2]>,
    /// Edges shared by two triangles that traverse them in the same direction.
    pub inconsistent_edges: Vec<[u32; 2]>,
}

impl CornerTable {
    #[inline]
    pub fn next(c: u32) -> u32 {
        if c % 3 == 2 {
            c - 2
        } else {
            c + 1
        }
    }

    #[inline]
    pub fn prev(c: u32) -> u32 {
        if c.is_multiple_of(3) {
            c + 2
        } else {
            c - 1
        }
    }

    #[inline]
    pub fn triangle(c: u32) -> u32 {
        c / 3
    }

    #[inline]
    pub fn vertex(&self, c: u32) -> u32 {
        self.v[c as usize]
    }

    /// Opposite corner, or [`BOUNDARY`].
    #[inline]
    pub fn opposite(&self, c: u32) -> u32 {
        self.o[c as usize]
    }

    pub fn corner_count(&self) -> usize {
        self.v.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.v.len() / 3
    }

    pub fn vertices(&self) -> &[u32] {
        &self.v
    }

    pub fn opposites(&self) -> &[u32] {
        &self.o
    }

    pub fn boundary_corner_count(&self) -> usize {
        self.o.iter().filter(|&&o| o == BOUNDARY).count()
    }
}

/// Builds the corner table, or reports the offending edges when the mesh is
/// not an orientable manifold (with boundary).
pub fn build_corner_table(mesh: &Mesh) -> Result<CornerTable, NonManifoldReport> {
    let nt = mesh.triangles.len();
    let v: Vec<u32> = mesh.triangles.iter().flatten().copied().collect();
    let mut o = vec![BOUNDARY; 3 * nt];

    // Directed edge (from, to) -> corner opposite it.
    let mut directed: HashMap<(u32, u32), u32> = HashMap::with_capacity(3 * nt);
    let mut undirected_count: HashMap<(u32, u32), u32> = HashMap::with_capacity(3 * nt);
    let mut overshared = BTreeSet::new();
    let mut inconsistent = BTreeSet::new();

    for c in 0..(3 * nt) as u32 {
        let a = v[CornerTable::next(c) as usize];
        let b = v[CornerTable::prev(c) as usize];
        let key = (a.min(b), a.max(b));
        let n = undirected_count.entry(key).or_insert(0);
        *n += 1;
        if *n > 2 {
            overshared.insert([key.0, key.1]);
        }
        if directed.insert((a, b), c).is_some() {
            inconsistent.insert([key.0, key.1]);
        }
    }
    // An edge used three times also shows up as a repeated direction; keep it
    // in one list only.
    for e in &overshared {
        inconsistent.remove(e);
    }
    if !overshared.is_empty() || !inconsistent.is_empty() {
        return Err(NonManifoldReport {
            overshared_edges: overshared.into_iter().collect(),
            inconsistent_edges: inconsistent.into_iter().collect(),
        });
    }

    for c in 0..(3 * nt) as u32 {
        let a = v[CornerTable::next(c) as usize];
        let b = v[CornerTable::prev(c) as usize];
        if let Some(&oc) = directed.get(&(b, a)) {
            o[c as usize] = oc;
        }
    }
    Ok(CornerTable { v, o })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Vec3;

    fn mesh(n: usize, tris: Vec<[u32; 3]>) -> Mesh {
        Mesh::new((0..n).map(|i| Vec3::new(i as f64, (i * i) as f64, 0.0)).collect(), tris).unwrap()
    }

    #[test]
    fn single_triangle_is_all_boundary() {
        let ct = build_corner_table(&mesh(3, vec![[0, 1, 2]])).unwrap();
        assert_eq!(ct.vertices(), &[0, 1, 2]);
        assert!(ct.opposites().iter().all(|&o| o == BOUNDARY));
    }

    #[test]
    fn tetrahedron_opposites_match_brute_force() {
        let tris = vec![[0, 2, 1], [0, 1, 3], [1, 2, 3], [0, 3, 2]];
        let ct = build_corner_table(&mesh(4, tris.clone())).unwrap();
        // Oracle: for every pair of corners, they are opposite iff their
        // opposite edges are the same undirected edge in different triangles.
        let flat: Vec<u32> = tris.iter().flatten().copied().collect();
        let edge = |c: usize| {
            let t = c / 3 * 3;
            let a = flat[t + (c + 1) % 3];
            let b = flat[t + (c + 2) % 3];
            (a.min(b), a.max(b))
        };
        for c in 0..12 {
            let expected: Vec<usize> = (0..12).filter(|&d| d / 3 != c / 3 && edge(d) == edge(c)).collect();
            assert_eq!(expected.len(), 1);
            assert_eq!(ct.opposite(c as u32) as usize, expected[0]);
            assert_eq!(ct.opposite(ct.opposite(c as u32)), c as u32);
        }
        assert_eq!(ct.boundary_corner_count(), 0);
    }

    #[test]
    fn inconsistent_winding_is_reported() {
        // Both triangles traverse 1 -> 2.
        let report = build_corner_table(&mesh(4, vec![[0, 1, 2], [3, 1, 2]])).unwrap_err();
        assert_eq!(report.inconsistent_edges, vec![[1, 2]]);
        assert!(report.overshared_edges.is_empty());
    }

    #[test]
    fn fin_edge_is_reported() {
        let report = build_corner_table(&mesh(5, vec![[0, 1, 2], [1, 0, 3], [0, 1, 4]])).unwrap_err();
        assert_eq!(report.overshared_edges, vec![[0, 1]]);
    }
}
