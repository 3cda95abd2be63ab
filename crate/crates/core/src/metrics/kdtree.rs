//! Exact nearest-neighbour search over 3-D points.
//!
//! Distances compare lexicographically as `(squared distance, index)`, so
//! ties resolve to the smallest point index, matching a brute-force scan.

use std::collections::BinaryHeap;

#[derive(Clone, Debug)]
pub struct KdTree {
    points: Vec<[f64; 3]>,
    /// Point indices permuted into implicit tree order: the median of each
    /// range is the node, its halves are the subtrees.
    order: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Candidate {
    d2: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.d2.total_cmp(&other.d2).then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

pub fn squared_distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|i| (a[i] - b[i]).powi(2)).sum()
}

impl KdTree {
    pub fn new(points: Vec<[f64; 3]>) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        build(&points, &mut order, 0);
        KdTree { points, order }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    /// Index and squared distance of the nearest point, or `None` for an
    /// empty tree.
    pub fn nearest(&self, q: &[f64; 3]) -> Option<(usize, f64)> {
        let mut heap = BinaryHeap::with_capacity(2);
        self.search(q, 1, 0, self.order.len(), 0, &mut heap);
        heap.pop().map(|c| (c.index, c.d2))
    }

    /// The `k` nearest points sorted by `(distance, index)`.
    pub fn knn(&self, q: &[f64; 3], k: usize) -> Vec<(usize, f64)> {
        if k == 0 {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.search(q, k, 0, self.order.len(), 0, &mut heap);
        heap.into_sorted_vec().into_iter().map(|c| (c.index, c.d2)).collect()
    }

    fn search(&self, q: &[f64; 3], k: usize, lo: usize, hi: usize, axis: usize, heap: &mut BinaryHeap<Candidate>) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let idx = self.order[mid];
        let p = &self.points[idx];
        let cand = Candidate { d2: squared_distance(p, q), index: idx };
        if heap.len() < k {
            heap.push(cand);
        } else if cand < *heap.peek().expect("heap is full") {
            heap.pop();
            heap.push(cand);
        }
        let diff = q[axis] - p[axis];
        let next = (axis + 1) % 3;
        let (near, far) = if diff < 0.0 { ((lo, mid), (mid + 1, hi)) } else { ((mid + 1, hi), (lo, mid)) };
        self.search(q, k, near.0, near.1, next, heap);
        // Equal distances must still be visited for the index tie-break.
        if heap.len() < k || diff * diff <= heap.peek().expect("heap is nonempty").d2 {
            self.search(q, k, far.0, far.1, next, heap);
        }
    }
}

fn build(points: &[[f64; 3]], order: &mut [usize], axis: usize) {
    if order.len() <= 1 {
        return;
    }
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b)));
    let (left, right) = order.split_at_mut(mid);
    build(points, left, (axis + 1) % 3);
    build(points, &mut right[1..], (axis + 1) % 3);
}
