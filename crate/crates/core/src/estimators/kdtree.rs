//! KD-tree under the max (Chebyshev) norm, for k-th neighbour distances and
//! fixed-radius counts.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

const LEAF_SIZE: usize = 16;

struct Node {
    start: usize,
    end: usize,
    /// Bounding box, `dim` entries each.
    lo: Vec<f64>,
    hi: Vec<f64>,
    children: Option<(usize, usize)>,
}

pub struct KdTree {
    dim: usize,
    /// Points in tree order, row-major.
    points: Vec<f64>,
    /// Original index of each point in tree order.
    index: Vec<usize>,
    nodes: Vec<Node>,
}

#[derive(PartialEq)]
struct HeapItem(f64);

impl Eq for HeapItem {}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

#[inline]
fn cheb(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

impl KdTree {
    /// Builds a tree over `n = values.len() / dim` points stored row-major.
    pub fn new(values: &[f64], dim: usize) -> Self {
        assert!(dim > 0 && values.len().is_multiple_of(dim), "kd-tree input must be n x dim");
        let n = values.len() / dim;
        let mut index: Vec<usize> = (0..n).collect();
        let mut nodes = Vec::new();
        build(values, dim, &mut index, 0, n, &mut nodes);
        let mut points = Vec::with_capacity(values.len());
        for &i in &index {
            points.extend_from_slice(&values[i * dim..(i + 1) * dim]);
        }
        Self {
            dim,
            points,
            index,
            nodes,
        }
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    fn point(&self, pos: usize) -> &[f64] {
        &self.points[pos * self.dim..(pos + 1) * self.dim]
    }

    fn min_dist(&self, node: &Node, q: &[f64]) -> f64 {
        q.iter()
            .zip(node.lo.iter().zip(&node.hi))
            .fold(0.0, |m, (&x, (&lo, &hi))| m.max(lo - x).max(x - hi))
    }

    fn max_dist(&self, node: &Node, q: &[f64]) -> f64 {
        q.iter()
            .zip(node.lo.iter().zip(&node.hi))
            .fold(0.0, |m, (&x, (&lo, &hi))| m.max(x - lo).max(hi - x))
    }

    /// Distance from `q` to its `k`-th nearest tree point, skipping the point
    /// whose original index is `exclude`.
    pub fn kth_distance(&self, q: &[f64], k: usize, exclude: Option<usize>) -> f64 {
        assert!(k >= 1, "k must be positive");
        let mut heap: BinaryHeap<HeapItem> = BinaryHeap::with_capacity(k + 1);
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            if heap.len() == k && self.min_dist(node, q) > heap.peek().map_or(f64::INFINITY, |h| h.0) {
                continue;
            }
            match node.children {
                Some((l, r)) => {
                    let dl = self.min_dist(&self.nodes[l], q);
                    let dr = self.min_dist(&self.nodes[r], q);
                    // Visit the nearer child first (pushed last).
                    if dl <= dr {
                        stack.push(r);
                        stack.push(l);
                    } else {
                        stack.push(l);
                        stack.push(r);
                    }
                }
                None => {
                    for pos in node.start..node.end {
                        if Some(self.index[pos]) == exclude {
                            continue;
                        }
                        let d = cheb(q, self.point(pos));
                        if heap.len() < k {
                            heap.push(HeapItem(d));
                        } else if d < heap.peek().map_or(f64::INFINITY, |h| h.0) {
                            heap.pop();
                            heap.push(HeapItem(d));
                        }
                    }
                }
            }
        }
        assert!(heap.len() == k, "not enough points for the k-th neighbour");
        heap.peek().map_or(f64::INFINITY, |h| h.0)
    }

    /// Number of tree points with distance `<= r` (or `< r` when `strict`).
    pub fn count_within(&self, q: &[f64], r: f64, strict: bool) -> usize {
        let inside = |d: f64| if strict { d < r } else { d <= r };
        let mut count = 0;
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            let lo = self.min_dist(node, q);
            if !inside(lo) {
                continue;
            }
            if inside(self.max_dist(node, q)) {
                count += node.end - node.start;
                continue;
            }
            match node.children {
                Some((l, r)) => {
                    stack.push(l);
                    stack.push(r);
                }
                None => {
                    count += (node.start..node.end)
                        .filter(|&pos| inside(cheb(q, self.point(pos))))
                        .count();
                }
            }
        }
        count
    }
}

fn build(values: &[f64], dim: usize, index: &mut [usize], start: usize, end: usize, nodes: &mut Vec<Node>) -> usize {
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for &i in &index[start..end] {
        for (d, v) in values[i * dim..(i + 1) * dim].iter().enumerate() {
            lo[d] = lo[d].min(*v);
            hi[d] = hi[d].max(*v);
        }
    }
    let id = nodes.len();
    let split_dim = (0..dim)
        .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
        .unwrap_or(0);
    let spread = hi[split_dim] - lo[split_dim];
    nodes.push(Node {
        start,
        end,
        lo,
        hi,
        children: None,
    });
    if end - start <= LEAF_SIZE || spread <= 0.0 {
        return id;
    }
    let mid = start + (end - start) / 2;
    index[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
        values[a * dim + split_dim].total_cmp(&values[b * dim + split_dim])
    });
    let l = build(values, dim, index, start, mid, nodes);
    let r = build(values, dim, index, mid, end, nodes);
    nodes[id].children = Some((l, r));
    id
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn brute_kth(values: &[f64], dim: usize, q: &[f64], k: usize, exclude: Option<usize>) -> f64 {
        let mut d: Vec<f64> = values
            .chunks_exact(dim)
            .enumerate()
            .filter(|(i, _)| Some(*i) != exclude)
            .map(|(_, p)| cheb(q, p))
            .collect();
        d.sort_by(f64::total_cmp);
        d[k - 1]
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = RngStream::new(3, 0);
        for dim in [1, 2, 5] {
            // Rounded values create ties and duplicate points.
            let values: Vec<f64> = (0..300 * dim).map(|_| (rng.normal() * 4.0).round() / 4.0).collect();
            let tree = KdTree::new(&values, dim);
            for i in (0..300).step_by(7) {
                let q = &values[i * dim..(i + 1) * dim];
                for k in [1, 3, 10] {
                    assert_eq!(tree.kth_distance(q, k, Some(i)), brute_kth(&values, dim, q, k, Some(i)));
                }
                for r in [0.0, 0.25, 0.6, 2.0] {
                    for strict in [false, true] {
                        let brute = values
                            .chunks_exact(dim)
                            .filter(|p| if strict { cheb(q, p) < r } else { cheb(q, p) <= r })
                            .count();
                        assert_eq!(tree.count_within(q, r, strict), brute);
                    }
                }
            }
        }
    }
}
