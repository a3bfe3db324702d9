//! Exact nearest-neighbour search with a balanced k-d tree.
//!
//! Points live in `D >= 3` dimensions and every coordinate takes part in
//! splitting, so extra channels (e.g. a target-indicator weight) are searched
//! exactly like positions. Duplicate points are fine: leaves hold buckets.

pub(crate) fn squared_distance<const D: usize>(a: &[f64; D], b: &[f64; D]) -> f64 {
    let mut s = 0.0;
    for k in 0..D {
        let d = a[k] - b[k];
        s += d * d;
    }
    s
}

const LEAF_SIZE: usize = 12;

enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        dim: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

pub(crate) struct KdIndex<'a, const D: usize> {
    points: &'a [[f64; D]],
    order: Vec<u32>,
    nodes: Vec<Node>,
}

impl<'a, const D: usize> KdIndex<'a, D> {
    pub fn new(points: &'a [[f64; D]]) -> Self {
        assert!(!points.is_empty());
        let mut index = KdIndex {
            points,
            order: (0..points.len() as u32).collect(),
            nodes: Vec::new(),
        };
        index.build(0, points.len());
        index
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mut lo = [f64::INFINITY; D];
        let mut hi = [f64::NEG_INFINITY; D];
        for &i in &self.order[start..end] {
            let p = &self.points[i as usize];
            for k in 0..D {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let dim = (0..D)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
            .unwrap_or(0);
        if hi[dim] - lo[dim] <= 0.0 {
            // all points coincide
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mid = start + (end - start) / 2;
        let pts = self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            pts[a as usize][dim].total_cmp(&pts[b as usize][dim])
        });
        let value = pts[self.order[mid] as usize][dim];
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = Node::Split {
            dim,
            value,
            left,
            right,
        };
        id
    }

    /// Index and squared distance of the nearest stored point. Ties resolve
    /// to the lowest index.
    pub fn nearest(&self, q: &[f64; D]) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(0, q, &mut best);
        best
    }

    fn search(&self, node: usize, q: &[f64; D], best: &mut (usize, f64)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let i = i as usize;
                    let d = squared_distance(&self.points[i], q);
                    if d < best.1 || (d == best.1 && i < best.0) {
                        *best = (i, d);
                    }
                }
            }
            Node::Split {
                dim,
                value,
                left,
                right,
            } => {
                // left holds coordinates <= value, right holds >= value
                let diff = q[dim] - value;
                let (near, far) = if diff < 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.search(near, q, best);
                if diff * diff <= best.1 {
                    self.search(far, q, best);
                }
            }
        }
    }
}
