//! Low-resolution density tree: a G×G×G histogram over the bounding box whose
//! over-full cells are split into octants until each leaf holds at most `m`
//! points. With `G = 1, m = 1` it degenerates into a complete octree.

use std::collections::BTreeMap;

use crate::cloud::{BoundingBox, Point, PointCloud};

use super::SubsampleError;

/// Split recursion stops at this depth even if a leaf still exceeds the
/// threshold, which only happens for (near-)duplicate coordinates.
pub const MAX_DEPTH: u8 = 21;

/// Largest accepted grid resolution; keeps cell keys inside a `u64`.
pub const MAX_GRID: u32 = 1 << 20;

#[derive(Debug, Clone)]
pub struct TreeNode {
    pub bounds: BoundingBox,
    pub depth: u8,
    /// Non-empty children as `(octant, node id)`, octant-ordered. Octant bits
    /// are `x << 2 | y << 1 | z`, a set bit meaning the upper half.
    pub children: Vec<(u8, usize)>,
    /// Point indices, in input order. Empty for internal nodes.
    pub points: Vec<usize>,
    /// Number of points in the subtree.
    pub count: usize,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct DensityTree {
    nodes: Vec<TreeNode>,
    /// Non-empty level-0 cells in row-major (x, y, z) order.
    roots: Vec<usize>,
    grid: u32,
    leaf_threshold: usize,
    bbox: BoundingBox,
    point_count: usize,
}

/// Bounds of octant `k` of `cell`.
pub fn octant_bounds(cell: &BoundingBox, k: u8) -> BoundingBox {
    let mid = cell.center();
    let mut b = *cell;
    for (axis, &m) in mid.iter().enumerate() {
        if k >> (2 - axis) & 1 == 1 {
            b.min[axis] = m;
        } else {
            b.max[axis] = m;
        }
    }
    b
}

fn octant_of(p: &Point, mid: &[f64; 3]) -> u8 {
    let pos = p.position();
    ((pos[0] >= mid[0]) as u8) << 2 | ((pos[1] >= mid[1]) as u8) << 1 | (pos[2] >= mid[2]) as u8
}

/// Level-0 cell index along one axis.
fn cell_index(v: f64, min: f64, max: f64, grid: u32) -> u32 {
    let extent = max - min;
    if extent <= 0.0 {
        return 0;
    }
    let i = (grid as f64 * (v - min) / extent).floor();
    i.clamp(0.0, (grid - 1) as f64) as u32
}

impl DensityTree {
    pub fn build(
        cloud: &PointCloud,
        grid: u32,
        leaf_threshold: usize,
    ) -> Result<Self, SubsampleError> {
        if !(1..=MAX_GRID).contains(&grid) {
            return Err(SubsampleError::InvalidGrid(grid));
        }
        if leaf_threshold == 0 {
            return Err(SubsampleError::InvalidLeafThreshold);
        }
        let bbox = *cloud.bbox().ok_or(SubsampleError::EmptyCloud)?;
        let points = cloud.points();

        let mut cells: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        let g = grid as u64;
        for (i, p) in points.iter().enumerate() {
            let pos = p.position();
            let [ix, iy, iz] =
                [0, 1, 2].map(|a| cell_index(pos[a], bbox.min[a], bbox.max[a], grid) as u64);
            cells.entry((ix * g + iy) * g + iz).or_default().push(i);
        }

        let mut tree = DensityTree {
            nodes: Vec::new(),
            roots: Vec::with_capacity(cells.len()),
            grid,
            leaf_threshold,
            bbox,
            point_count: points.len(),
        };
        let ext = bbox.extents();
        for (key, indices) in cells {
            let idx = [key / (g * g), (key / g) % g, key % g];
            let mut bounds = bbox;
            for a in 0..3 {
                if ext[a] > 0.0 {
                    bounds.min[a] = bbox.min[a] + ext[a] * idx[a] as f64 / grid as f64;
                    bounds.max[a] = if idx[a] + 1 == g {
                        bbox.max[a]
                    } else {
                        bbox.min[a] + ext[a] * (idx[a] + 1) as f64 / grid as f64
                    };
                }
            }
            let id = tree.split(points, bounds, indices, 0);
            tree.roots.push(id);
        }
        Ok(tree)
    }

    fn split(
        &mut self,
        points: &[Point],
        bounds: BoundingBox,
        indices: Vec<usize>,
        depth: u8,
    ) -> usize {
        let id = self.nodes.len();
        let count = indices.len();
        self.nodes.push(TreeNode {
            bounds,
            depth,
            children: Vec::new(),
            points: Vec::new(),
            count,
        });
        if count <= self.leaf_threshold || depth >= MAX_DEPTH {
            self.nodes[id].points = indices;
            return id;
        }
        let mid = bounds.center();
        let mut parts: [Vec<usize>; 8] = Default::default();
        for i in indices {
            parts[octant_of(&points[i], &mid) as usize].push(i);
        }
        let mut children = Vec::new();
        for (k, part) in parts.into_iter().enumerate() {
            if !part.is_empty() {
                let child = self.split(points, octant_bounds(&bounds, k as u8), part, depth + 1);
                children.push((k as u8, child));
            }
        }
        self.nodes[id].children = children;
        id
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &TreeNode {
        &self.nodes[id]
    }

    pub fn roots(&self) -> &[usize] {
        &self.roots
    }

    pub fn grid(&self) -> u32 {
        self.grid
    }

    pub fn leaf_threshold(&self) -> usize {
        self.leaf_threshold
    }

    pub fn bbox(&self) -> &BoundingBox {
        &self.bbox
    }

    pub fn point_count(&self) -> usize {
        self.point_count
    }

    pub fn max_depth(&self) -> u8 {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    /// All nodes in depth-first pre-order (roots row-major, children by octant).
    pub fn preorder(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack: Vec<usize> = self.roots.iter().rev().copied().collect();
        while let Some(id) = stack.pop() {
            out.push(id);
            stack.extend(self.nodes[id].children.iter().rev().map(|&(_, c)| c));
        }
        out
    }

    /// Leaves ordered deepest level first, left-most first within a level.
    pub fn leaves_in_visit_order(&self) -> Vec<usize> {
        let mut leaves: Vec<usize> = self
            .preorder()
            .into_iter()
            .filter(|&id| self.nodes[id].is_leaf())
            .collect();
        leaves.sort_by_key(|&id| std::cmp::Reverse(self.nodes[id].depth));
        leaves
    }

    /// Every node grouped by depth, deepest level first, left-most first.
    pub fn levels_bottom_up(&self) -> Vec<Vec<usize>> {
        let mut levels = vec![Vec::new(); self.max_depth() as usize + 1];
        for id in self.preorder() {
            levels[self.nodes[id].depth as usize].push(id);
        }
        levels.reverse();
        levels
    }
}
