use crate::cloud::{sort_indices_spatial, Point, PointCloud};
use crate::spatial::KdTree;

use super::tree::DensityTree;
use super::{target_keep_count, Ratio, SubsampleError};

/// One nearest-neighbor cluster. Indices refer to the input cloud.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cluster {
    /// Seed leaf point first, then its neighbors closest first.
    pub members: Vec<usize>,
    pub representative: usize,
}

/// Record of one clustering sweep over the surviving points.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NeighborPass {
    pub clusters: Vec<Cluster>,
    /// Points assigned to some cluster (each at most once).
    pub processed: usize,
    /// Points the sweep started with.
    pub input: usize,
}

#[derive(Debug, Clone)]
pub struct NeighborTrace {
    pub output: PointCloud,
    pub passes: Vec<NeighborPass>,
}

/// Octree nearest-neighbor sub-sampling; see [`trace_octree_neighbors`].
pub fn subsample_octree_neighbors(
    cloud: &PointCloud,
    ratio: Ratio,
    cluster_size: usize,
) -> Result<PointCloud, SubsampleError> {
    trace_octree_neighbors(cloud, ratio, cluster_size).map(|t| t.output)
}

/// Builds a complete octree, then walks its leaves deepest first. Each
/// unprocessed leaf point seeds a cluster with its `c - 1` nearest
/// unprocessed neighbors; the cluster is sorted spatially and only its middle
/// point survives. Sweeping stops once `n - ceil(n / R)` points are gone; the
/// last cluster is shrunk so the count lands exactly.
///
/// When `c` is smaller than `R` one sweep cannot reach the budget, so further
/// sweeps run over the survivors until it does.
///
/// Output order: surviving points in octree leaf visit order of the last
/// sweep.
pub fn trace_octree_neighbors(
    cloud: &PointCloud,
    ratio: Ratio,
    cluster_size: usize,
) -> Result<NeighborTrace, SubsampleError> {
    if cluster_size < 2 {
        return Err(SubsampleError::InvalidClusterSize(cluster_size));
    }
    if cloud.is_empty() {
        return Err(SubsampleError::EmptyCloud);
    }
    let n = cloud.len();
    let mut budget = n - target_keep_count(n, ratio);
    // Maps positions in `current` back to input indices.
    let mut origin: Vec<usize> = (0..n).collect();
    let mut current = cloud.clone();
    let mut passes = Vec::new();

    loop {
        let (order, pass) = sweep(&current, cluster_size, &mut budget);
        let pass = NeighborPass {
            clusters: pass
                .clusters
                .into_iter()
                .map(|c| Cluster {
                    members: c.members.iter().map(|&i| origin[i]).collect(),
                    representative: origin[c.representative],
                })
                .collect(),
            ..pass
        };
        passes.push(pass);
        origin = order.iter().map(|&i| origin[i]).collect();
        current = PointCloud::from_valid(order.iter().map(|&i| current.points()[i]).collect());
        if budget == 0 {
            break;
        }
    }
    Ok(NeighborTrace {
        output: current,
        passes,
    })
}

/// One sweep. Returns the survivors in leaf visit order.
fn sweep(
    cloud: &PointCloud,
    cluster_size: usize,
    budget: &mut usize,
) -> (Vec<usize>, NeighborPass) {
    let points = cloud.points();
    let octree = DensityTree::build(cloud, 1, 1).expect("non-empty cloud, valid parameters");
    let visit: Vec<usize> = octree
        .leaves_in_visit_order()
        .into_iter()
        .flat_map(|id| octree.node(id).points.iter().copied())
        .collect();

    let mut index = KdTree::new(points);
    let mut removed = vec![false; points.len()];
    let mut pass = NeighborPass {
        input: points.len(),
        ..Default::default()
    };
    for &seed in &visit {
        if *budget == 0 {
            break;
        }
        if !index.contains(seed) {
            continue;
        }
        let want = cluster_size.min(*budget + 1);
        let mut members = vec![seed];
        members.extend(
            index
                .nearest_k(&points[seed], want - 1, Some(seed))
                .into_iter()
                .map(|(_, i)| i),
        );
        for &m in &members {
            index.remove(m);
        }
        pass.processed += members.len();
        let representative = middle_point(points, &members);
        for &m in &members {
            if m != representative {
                removed[m] = true;
            }
        }
        *budget -= members.len() - 1;
        pass.clusters.push(Cluster {
            members,
            representative,
        });
    }
    let order = visit.into_iter().filter(|&i| !removed[i]).collect();
    (order, pass)
}

/// Middle element (`floor(len / 2)`) of the cluster in spatial order.
pub(crate) fn middle_point(points: &[Point], members: &[usize]) -> usize {
    let mut sorted = members.to_vec();
    sort_indices_spatial(points, &mut sorted);
    sorted[sorted.len() / 2]
}
