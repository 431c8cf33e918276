use super::Vec3;

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
enum KdNode {
    Leaf { start: u32, end: u32 },
    Split { axis: u8, value: f64, left: u32, right: u32 },
}

/// Static 3-d tree for nearest-neighbour lookups over a point set.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Vec3>,
    order: Vec<u32>,
    nodes: Vec<KdNode>,
}

impl KdTree {
    pub fn new(points: &[Vec3]) -> Self {
        let mut tree = KdTree {
            points: points.to_vec(),
            order: (0..points.len() as u32).collect(),
            nodes: Vec::new(),
        };
        if !points.is_empty() {
            let mut order = std::mem::take(&mut tree.order);
            tree.build(&mut order, 0);
            tree.order = order;
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn build(&mut self, idx: &mut [u32], offset: u32) -> u32 {
        let id = self.nodes.len() as u32;
        if idx.len() <= LEAF_SIZE {
            self.nodes.push(KdNode::Leaf {
                start: offset,
                end: offset + idx.len() as u32,
            });
            return id;
        }
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for &i in idx.iter() {
            lo = lo.inf(&self.points[i as usize]);
            hi = hi.sup(&self.points[i as usize]);
        }
        let spread = hi - lo;
        let axis = spread.imax();
        let mid = idx.len() / 2;
        let pts = &self.points;
        idx.select_nth_unstable_by(mid, |&a, &b| pts[a as usize][axis].total_cmp(&pts[b as usize][axis]));
        let value = self.points[idx[mid] as usize][axis];
        self.nodes.push(KdNode::Leaf { start: 0, end: 0 });
        let (l, r) = idx.split_at_mut(mid);
        let left = self.build(l, offset);
        let right = self.build(r, offset + mid as u32);
        self.nodes[id as usize] = KdNode::Split {
            axis: axis as u8,
            value,
            left,
            right,
        };
        id
    }

    /// Index and squared distance of the point nearest to `q`; ties go to the
    /// lowest index. `None` for an empty tree.
    pub fn nearest(&self, q: &Vec3) -> Option<(u32, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let mut best = (u32::MAX, f64::INFINITY);
        self.search(0, q, &mut best);
        Some(best)
    }

    fn search(&self, node: u32, q: &Vec3, best: &mut (u32, f64)) {
        match self.nodes[node as usize] {
            KdNode::Leaf { start, end } => {
                for &i in &self.order[start as usize..end as usize] {
                    let d = (self.points[i as usize] - q).norm_squared();
                    if d < best.1 || (d == best.1 && i < best.0) {
                        *best = (i, d);
                    }
                }
            }
            KdNode::Split { axis, value, left, right } => {
                let diff = q[axis as usize] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, best);
                // `<=` keeps equal-distance candidates reachable for the
                // lowest-index tie break.
                if diff * diff <= best.1 {
                    self.search(far, q, best);
                }
            }
        }
    }
}
