use super::{Aabb, Mesh, MeshError, Result, Vec3};

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosestPoint {
    pub point: Vec3,
    pub distance: f64,
    pub triangle: u32,
}

/// Closest point to `p` on the closed triangle `(a, b, c)`.
///
/// Voronoi-region walk: vertex and edge regions return points built from the
/// vertices directly, so a query sitting on a vertex gets that vertex back
/// exactly.
pub fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

#[derive(Debug, Clone)]
struct Node {
    bounds: Aabb,
    /// Leaf: `start..start + count` into `order`. Interior: `count == 0`,
    /// children at `start` and `start + 1`.
    start: u32,
    count: u32,
}

/// Bounding-volume hierarchy over a mesh's triangles for exact closest-point
/// queries. Holds copies of the triangle corners, so it does not borrow the
/// mesh.
#[derive(Debug, Clone)]
pub struct TriangleBvh {
    nodes: Vec<Node>,
    order: Vec<u32>,
    corners: Vec<[Vec3; 3]>,
}

impl TriangleBvh {
    pub fn new(mesh: &Mesh) -> Result<Self> {
        if mesh.triangles.is_empty() {
            return Err(MeshError::EmptyMesh);
        }
        let corners: Vec<[Vec3; 3]> = (0..mesh.triangles.len()).map(|t| mesh.triangle_points(t)).collect();
        let centroids: Vec<Vec3> = corners.iter().map(|c| (c[0] + c[1] + c[2]) / 3.0).collect();
        let mut order: Vec<u32> = (0..corners.len() as u32).collect();
        let mut bvh = TriangleBvh {
            nodes: Vec::with_capacity(2 * corners.len() / LEAF_SIZE + 1),
            order: Vec::new(),
            corners,
        };
        bvh.nodes.push(Node {
            bounds: Aabb::empty(),
            start: 0,
            count: 0,
        });
        bvh.build(0, &mut order, 0, &centroids);
        bvh.order = order;
        Ok(bvh)
    }

    fn tri_bounds(&self, t: u32) -> Aabb {
        Aabb::from_points(&self.corners[t as usize])
    }

    fn build(&mut self, node: usize, order: &mut [u32], offset: u32, centroids: &[Vec3]) {
        let mut bounds = Aabb::empty();
        let mut cbounds = Aabb::empty();
        for &t in order.iter() {
            bounds = bounds.union(&self.tri_bounds(t));
            cbounds.extend(&centroids[t as usize]);
        }
        self.nodes[node].bounds = bounds;
        if order.len() <= LEAF_SIZE {
            self.nodes[node].start = offset;
            self.nodes[node].count = order.len() as u32;
            return;
        }
        let ext = cbounds.extent();
        let axis = if ext.x >= ext.y && ext.x >= ext.z {
            0
        } else if ext.y >= ext.z {
            1
        } else {
            2
        };
        let mid = order.len() / 2;
        order.select_nth_unstable_by(mid, |&a, &b| {
            centroids[a as usize][axis]
                .total_cmp(&centroids[b as usize][axis])
                .then(a.cmp(&b))
        });
        let left = self.nodes.len();
        for _ in 0..2 {
            self.nodes.push(Node {
                bounds: Aabb::empty(),
                start: 0,
                count: 0,
            });
        }
        self.nodes[node].start = left as u32;
        self.nodes[node].count = 0;
        let (lo, hi) = order.split_at_mut(mid);
        self.build(left, lo, offset, centroids);
        self.build(left + 1, hi, offset + mid as u32, centroids);
    }

    pub fn triangle_count(&self) -> usize {
        self.corners.len()
    }

    /// Exact closest point on the mesh surface. Ties keep the
    /// lowest-numbered triangle.
    pub fn closest_point(&self, q: &Vec3) -> ClosestPoint {
        let mut best_d2 = f64::INFINITY;
        let mut best = ClosestPoint {
            point: *q,
            distance: f64::INFINITY,
            triangle: u32::MAX,
        };
        let mut stack: Vec<(usize, f64)> = Vec::with_capacity(64);
        stack.push((0, self.nodes[0].bounds.distance_squared(q)));
        while let Some((n, box_d2)) = stack.pop() {
            if box_d2 > best_d2 {
                continue;
            }
            let node = &self.nodes[n];
            if node.count > 0 {
                let range = node.start as usize..(node.start + node.count) as usize;
                for &t in &self.order[range] {
                    let [a, b, c] = &self.corners[t as usize];
                    let p = closest_point_on_triangle(q, a, b, c);
                    let d2 = (p - q).norm_squared();
                    if d2 < best_d2 || (d2 == best_d2 && t < best.triangle) {
                        best_d2 = d2;
                        best.point = p;
                        best.triangle = t;
                    }
                }
            } else {
                let l = node.start as usize;
                let dl = self.nodes[l].bounds.distance_squared(q);
                let dr = self.nodes[l + 1].bounds.distance_squared(q);
                // Push the farther child first so the nearer one is popped next.
                if dl <= dr {
                    stack.push((l + 1, dr));
                    stack.push((l, dl));
                } else {
                    stack.push((l, dl));
                    stack.push((l + 1, dr));
                }
            }
        }
        best.distance = best_d2.sqrt();
        best
    }
}

/// One-shot closest-point query. Build a [`TriangleBvh`] instead when
/// querying the same mesh repeatedly.
pub fn closest_point_on_mesh(mesh: &Mesh, query: &Vec3) -> Result<ClosestPoint> {
    Ok(TriangleBvh::new(mesh)?.closest_point(query))
}
