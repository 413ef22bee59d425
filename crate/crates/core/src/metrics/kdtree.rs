//! Static 3-d tree for exact nearest-neighbor distance queries.

use alloc::vec::Vec;

const LEAF_SIZE: usize = 8;

#[inline]
pub(crate) fn squared_distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// Exact: queries return the same minimum squared distance a linear scan
/// with [`squared_distance`] would.
pub struct KdTree<'a> {
    points: &'a [[f64; 3]],
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl<'a> KdTree<'a> {
    pub fn build(points: &'a [[f64; 3]]) -> Self {
        let mut tree = Self {
            points,
            order: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        if !points.is_empty() {
            tree.build_node(0, points.len());
        }
        tree
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let axis = self.widest_axis(start, end);
        let mid = start + (end - start) / 2;
        let points = self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| points[a][axis].total_cmp(&points[b][axis]));
        let value = points[self.order[mid]][axis];
        self.nodes.push(Node::Split { axis, value, left: 0, right: 0 });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id] = Node::Split { axis, value, left, right };
        id
    }

    fn widest_axis(&self, start: usize, end: usize) -> usize {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in &self.order[start..end] {
            for a in 0..3 {
                lo[a] = lo[a].min(self.points[i][a]);
                hi[a] = hi[a].max(self.points[i][a]);
            }
        }
        let spread = [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]];
        (0..3).fold(0, |best, a| if spread[a] > spread[best] { a } else { best })
    }

    /// Smallest squared distance from `query` to any point; `None` when the
    /// tree is empty.
    pub fn nearest_squared(&self, query: &[f64; 3]) -> Option<f64> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best = f64::INFINITY;
        self.search(0, query, &mut best);
        Some(best)
    }

    fn search(&self, node: usize, q: &[f64; 3], best: &mut f64) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let d = squared_distance(q, &self.points[i]);
                    if d < *best {
                        *best = d;
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, best);
                // Every point beyond the plane is at least |diff| away.
                if diff * diff < *best {
                    self.search(far, q, best);
                }
            }
        }
    }
}
