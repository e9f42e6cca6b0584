use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::Vec3;

const LEAF_SIZE: usize = 16;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { dim: usize, value: f64, left: usize, right: usize },
}

/// Static kd-tree over a point set. Ids are positions in the build slice.
///
/// Results are ordered by distance, ties by id, so queries are
/// reproducible across runs and platforms.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    points: Vec<Vec3>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

#[derive(PartialEq)]
struct Candidate {
    d2: f64,
    id: usize,
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2.total_cmp(&other.d2).then(self.id.cmp(&other.id))
    }
}

impl SpatialIndex {
    pub fn build(points: &[Vec3]) -> Self {
        let mut index = SpatialIndex {
            points: points.to_vec(),
            order: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        if !points.is_empty() {
            index.build_range(0, points.len());
        }
        index
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, id: usize) -> &Vec3 {
        &self.points[id]
    }

    fn build_range(&mut self, start: usize, end: usize) -> usize {
        let slot = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return slot;
        }
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for &i in &self.order[start..end] {
            lo = lo.inf(&self.points[i]);
            hi = hi.sup(&self.points[i]);
        }
        let dim = (hi - lo).imax();
        if hi[dim] - lo[dim] <= 0.0 {
            // all coincident
            self.nodes.push(Node::Leaf { start, end });
            return slot;
        }
        let mid = start + (end - start) / 2;
        let pts = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            pts[a][dim].total_cmp(&pts[b][dim]).then(a.cmp(&b))
        });
        let value = self.points[self.order[mid]][dim];
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.build_range(start, mid);
        let right = self.build_range(mid, end);
        self.nodes[slot] = Node::Split { dim, value, left, right };
        slot
    }

    /// The `k` nearest entries as `(id, distance)`, ascending.
    pub fn knn(&self, query: &Vec3, k: usize) -> Vec<(usize, f64)> {
        if k == 0 || self.points.is_empty() {
            return Vec::new();
        }
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        self.search(0, query, k, &mut heap);
        let mut out: Vec<Candidate> = heap.into_vec();
        out.sort();
        out.into_iter().map(|c| (c.id, c.d2.sqrt())).collect()
    }

    pub fn nearest(&self, query: &Vec3) -> Option<(usize, f64)> {
        self.knn(query, 1).into_iter().next()
    }

    fn search(&self, node: usize, q: &Vec3, k: usize, heap: &mut BinaryHeap<Candidate>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &id in &self.order[start..end] {
                    let c = Candidate {
                        d2: (self.points[id] - q).norm_squared(),
                        id,
                    };
                    if heap.len() < k {
                        heap.push(c);
                    } else if heap.peek().is_some_and(|worst| c < *worst) {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            Node::Split { dim, value, left, right } => {
                let diff = q[dim] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, k, heap);
                let bound = heap.peek().map_or(f64::INFINITY, |w| w.d2);
                // `<=` keeps equal-distance candidates with smaller ids reachable
                if heap.len() < k || diff * diff <= bound {
                    self.search(far, q, k, heap);
                }
            }
        }
    }
}
