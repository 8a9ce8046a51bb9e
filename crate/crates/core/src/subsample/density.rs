use crate::cloud::{sort_indices_spatial, Point, PointCloud};

use super::tree::DensityTree;
use super::{stride_indices, target_keep_count, Ratio, SubsampleError};

/// Density-tree sub-sampling.
///
/// Nodes are visited level by level from the deepest one up, left-most first.
/// Each visited node is a cluster made of its surviving points; it keeps
/// `ceil(size / R)` of them by the sorted stride (for a leaf this is exactly
/// the sorted-cluster rule applied to the leaf). After level 0 the whole
/// cloud is treated as one final cluster, so the output always lands on
/// `ceil(n / R)` points. Visiting stops as soon as the removal budget is
/// spent; a cluster that would overshoot keeps just enough extra points.
///
/// Output order: leaves in visit order, each leaf's survivors in input order.
pub fn subsample_density_tree(
    cloud: &PointCloud,
    ratio: Ratio,
    grid: u32,
    leaf_threshold: usize,
) -> Result<PointCloud, SubsampleError> {
    let tree = DensityTree::build(cloud, grid, leaf_threshold)?;
    let points = cloud.points();
    let n = points.len();
    let mut budget = n - target_keep_count(n, ratio);
    let mut alive = vec![true; n];

    // Surviving indices per node, filled in as levels are processed.
    let mut survivors: Vec<Vec<usize>> = vec![Vec::new(); tree.nodes().len()];

    'levels: for level in tree.levels_bottom_up() {
        for id in level {
            if budget == 0 {
                break 'levels;
            }
            let node = tree.node(id);
            let members = if node.is_leaf() {
                node.points.clone()
            } else {
                node.children
                    .iter()
                    .flat_map(|&(_, c)| std::mem::take(&mut survivors[c]))
                    .collect()
            };
            survivors[id] =
                thin_cluster(points, members, node.count, ratio, &mut budget, &mut alive);
        }
    }
    if budget > 0 {
        let members: Vec<usize> = (0..n).filter(|&i| alive[i]).collect();
        thin_cluster(points, members, n, ratio, &mut budget, &mut alive);
    }
    debug_assert_eq!(budget, 0);

    let kept: Vec<Point> = tree
        .leaves_in_visit_order()
        .into_iter()
        .flat_map(|id| tree.node(id).points.iter().copied())
        .filter(|&i| alive[i])
        .map(|i| points[i])
        .collect();
    Ok(PointCloud::from_valid(kept))
}

/// Thins one cluster in place and returns its survivors (sorted spatially if
/// anything was removed). `original` is the cluster's size before any
/// thinning happened below it.
fn thin_cluster(
    points: &[Point],
    mut members: Vec<usize>,
    original: usize,
    ratio: Ratio,
    budget: &mut usize,
    alive: &mut [bool],
) -> Vec<usize> {
    let target = target_keep_count(original, ratio);
    let excess = members.len().saturating_sub(target);
    let remove = excess.min(*budget);
    if remove == 0 {
        return members;
    }
    let keep = members.len() - remove;
    let stride = if members.len() == original && keep == target {
        ratio.get()
    } else {
        members.len() as f64 / keep as f64
    };
    sort_indices_spatial(points, &mut members);
    let picks = stride_indices(members.len(), keep, stride);
    let mut kept = Vec::with_capacity(keep);
    let mut next = picks.iter().peekable();
    for (pos, &i) in members.iter().enumerate() {
        if next.peek() == Some(&&pos) {
            next.next();
            kept.push(i);
        } else {
            alive[i] = false;
        }
    }
    *budget -= remove;
    kept
}
