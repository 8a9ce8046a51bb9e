//! Static kd-tree over a point slice with support for removing points.
//!
//! Neighbors are ranked by squared distance, then by the spatial (Z, Y, X)
//! order, then by index, so queries are fully deterministic even with
//! duplicate coordinates. Squared distances are computed with
//! [`Point::distance_sq`], which makes results bit-identical to a brute-force
//! scan.

use std::cmp::Ordering;

use crate::cloud::Point;

const LEAF_SIZE: usize = 12;
const NONE: u32 = u32::MAX;

#[derive(Debug, Clone)]
struct Node {
    lo: [f64; 3],
    hi: [f64; 3],
    start: u32,
    end: u32,
    left: u32,
    right: u32,
    parent: u32,
    alive: u32,
}

impl Node {
    fn is_leaf(&self) -> bool {
        self.left == NONE
    }

    fn box_distance_sq(&self, q: &Point) -> f64 {
        let mut acc = 0.0;
        for (axis, v) in q.position().into_iter().enumerate() {
            let d = if v < self.lo[axis] {
                self.lo[axis] - v
            } else if v > self.hi[axis] {
                v - self.hi[axis]
            } else {
                0.0
            };
            acc += d * d;
        }
        acc
    }
}

#[derive(Debug, Clone)]
pub struct KdTree<'a> {
    points: &'a [Point],
    nodes: Vec<Node>,
    order: Vec<u32>,
    leaf_of: Vec<u32>,
    alive: Vec<bool>,
}

impl<'a> KdTree<'a> {
    pub fn new(points: &'a [Point]) -> Self {
        assert!(
            points.len() < NONE as usize,
            "too many points for the index"
        );
        let mut tree = KdTree {
            points,
            nodes: Vec::with_capacity(2 * points.len() / LEAF_SIZE + 1),
            order: (0..points.len() as u32).collect(),
            leaf_of: vec![NONE; points.len()],
            alive: vec![true; points.len()],
        };
        if !points.is_empty() {
            tree.build(0, points.len(), NONE);
        }
        tree
    }

    fn build(&mut self, start: usize, end: usize, parent: u32) -> u32 {
        let (lo, hi) = bounds(self.points, &self.order[start..end]);
        let id = self.nodes.len() as u32;
        self.nodes.push(Node {
            lo,
            hi,
            start: start as u32,
            end: end as u32,
            left: NONE,
            right: NONE,
            parent,
            alive: (end - start) as u32,
        });
        let spread = [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]];
        if end - start <= LEAF_SIZE || spread.iter().all(|&s| s == 0.0) {
            for &i in &self.order[start..end] {
                self.leaf_of[i as usize] = id;
            }
            return id;
        }
        let axis = (0..3)
            .max_by(|&a, &b| spread[a].total_cmp(&spread[b]).then(b.cmp(&a)))
            .unwrap();
        let mid = start + (end - start) / 2;
        let points = self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a as usize].position()[axis].total_cmp(&points[b as usize].position()[axis])
        });
        let left = self.build(start, mid, id);
        let right = self.build(mid, end, id);
        let node = &mut self.nodes[id as usize];
        node.left = left;
        node.right = right;
        id
    }

    pub fn len(&self) -> usize {
        self.nodes.first().map_or(0, |n| n.alive as usize)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, index: usize) -> bool {
        self.alive[index]
    }

    /// Removes a point from future query results. Returns `false` if it was
    /// already removed.
    pub fn remove(&mut self, index: usize) -> bool {
        if !std::mem::replace(&mut self.alive[index], false) {
            return false;
        }
        let mut node = self.leaf_of[index];
        while node != NONE {
            let n = &mut self.nodes[node as usize];
            n.alive -= 1;
            node = n.parent;
        }
        true
    }

    fn rank(&self, a: (f64, usize), b: (f64, usize)) -> Ordering {
        a.0.total_cmp(&b.0)
            .then_with(|| self.points[a.1].spatial_cmp(&self.points[b.1]))
            .then(a.1.cmp(&b.1))
    }

    /// The `k` nearest remaining points to `query`, skipping `exclude`,
    /// closest first. Returns `(squared distance, index)` pairs.
    pub fn nearest_k(&self, query: &Point, k: usize, exclude: Option<usize>) -> Vec<(f64, usize)> {
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        if k == 0 || self.is_empty() {
            return best;
        }
        let mut stack = vec![0u32];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id as usize];
            if node.alive == 0 {
                continue;
            }
            if best.len() == k && node.box_distance_sq(query) > best[k - 1].0 {
                continue;
            }
            if node.is_leaf() {
                for &i in &self.order[node.start as usize..node.end as usize] {
                    let i = i as usize;
                    if !self.alive[i] || Some(i) == exclude {
                        continue;
                    }
                    let cand = (query.distance_sq(&self.points[i]), i);
                    if best.len() == k && self.rank(cand, best[k - 1]) != Ordering::Less {
                        continue;
                    }
                    let pos = best
                        .binary_search_by(|probe| self.rank(*probe, cand))
                        .unwrap_or_else(|p| p);
                    best.insert(pos, cand);
                    best.truncate(k);
                }
                continue;
            }
            let (l, r) = (
                &self.nodes[node.left as usize],
                &self.nodes[node.right as usize],
            );
            let (near, far) = if l.box_distance_sq(query) <= r.box_distance_sq(query) {
                (node.left, node.right)
            } else {
                (node.right, node.left)
            };
            stack.push(far);
            stack.push(near);
        }
        best
    }

    /// Squared distance from `query` to its nearest remaining point.
    pub fn nearest_distance_sq(&self, query: &Point) -> Option<f64> {
        self.nearest_k(query, 1, None).first().map(|&(d, _)| d)
    }
}

fn bounds(points: &[Point], idx: &[u32]) -> ([f64; 3], [f64; 3]) {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in idx {
        for (axis, v) in points[i as usize].position().into_iter().enumerate() {
            lo[axis] = lo[axis].min(v);
            hi[axis] = hi[axis].max(v);
        }
    }
    (lo, hi)
}
