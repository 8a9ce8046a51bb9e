use std::cmp::Ordering;
use std::collections::HashMap;

use dashpc_core::subsample::{
    subsample_sorted, target_keep_count, trace_octree_neighbors, DensityTree, Method, Ratio,
    SamplingSpec,
};
use dashpc_core::{Point, PointCloud};
use proptest::prelude::*;

/// Coordinates on a coarse lattice so duplicates and distance ties are common.
fn cloud(max: usize) -> impl Strategy<Value = PointCloud> {
    prop::collection::vec((0u8..12, 0u8..12, 0u8..12, any::<u8>()), 1..max).prop_map(|v| {
        PointCloud::new(
            v.into_iter()
                .map(|(x, y, z, c)| {
                    Point::new(x as f64 * 0.5, y as f64, z as f64 * 2.0, c, c / 2, 7)
                })
                .collect(),
        )
        .unwrap()
    })
}

fn ratio() -> impl Strategy<Value = Ratio> {
    prop_oneof![
        prop::sample::select(vec![1.0, 2.0, 3.0, 5.0, 7.0, 35.0]),
        1.0f64..40.0,
        (1u32..=100).prop_map(|p| 100.0 / p as f64),
    ]
    .prop_map(|r| Ratio::new(r).unwrap())
}

fn key(p: &Point) -> [u64; 4] {
    [
        p.x.to_bits(),
        p.y.to_bits(),
        p.z.to_bits(),
        u64::from_le_bytes([p.r, p.g, p.b, 0, 0, 0, 0, 0]),
    ]
}

fn multiset(points: &[Point]) -> HashMap<[u64; 4], usize> {
    let mut m = HashMap::new();
    for p in points {
        *m.entry(key(p)).or_default() += 1;
    }
    m
}

fn is_sub_multiset(sub: &[Point], of: &[Point]) -> bool {
    let have = multiset(of);
    multiset(sub)
        .into_iter()
        .all(|(k, c)| have.get(&k).copied().unwrap_or(0) >= c)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn every_method_hits_the_exact_count(
        c in cloud(400),
        r in ratio(),
        grid in 1u32..9,
        leaf in 1usize..20,
        cluster in prop::option::of(2usize..7),
    ) {
        let want = target_keep_count(c.len(), r);
        prop_assert_eq!(want, ((c.len() as f64 / r.get()) - 1e-9).ceil().max(1.0) as usize);
        for method in Method::ALL {
            let spec = SamplingSpec { method, ratio: r, grid, leaf_threshold: leaf, cluster_size: cluster };
            let out = spec.apply(&c).unwrap();
            prop_assert_eq!(out.len(), want, "{:?}", spec);
            prop_assert!(is_sub_multiset(out.points(), c.points()));
            prop_assert_eq!(spec.apply(&c).unwrap(), out);
        }
    }

    #[test]
    fn sorted_cluster_nests(c in cloud(300), r in 1u32..5) {
        let coarse = subsample_sorted(&c, Ratio::new(2.0 * r as f64).unwrap()).unwrap();
        let fine = subsample_sorted(&c, Ratio::new(r as f64).unwrap()).unwrap();
        prop_assert!(is_sub_multiset(coarse.points(), fine.points()));
    }

    #[test]
    fn sort_is_an_idempotent_permutation(c in cloud(300)) {
        let sorted = c.sort_spatial();
        prop_assert_eq!(multiset(sorted.points()), multiset(c.points()));
        prop_assert!(sorted.points().windows(2).all(|w| w[0].spatial_cmp(&w[1]) != Ordering::Greater));
        prop_assert_eq!(sorted.sort_spatial(), sorted);
    }

    #[test]
    fn scale_round_trips(c in cloud(200), a in 0.05f64..20.0) {
        let there = c.scale(a).unwrap();
        let back = there.scale(1.0 / a).unwrap();
        for (p, q) in c.points().iter().zip(back.points()) {
            for (u, v) in p.position().into_iter().zip(q.position()) {
                prop_assert!((u - v).abs() <= 1e-9 * u.abs().max(1.0));
            }
        }
        let d0 = c.bbox().unwrap().diagonal();
        let d1 = there.bbox().unwrap().diagonal();
        prop_assert!((d1 - a * d0).abs() <= 1e-9 * d1.max(1e-300));
    }

    #[test]
    fn density_tree_partitions_the_cloud(c in cloud(500), grid in 1u32..9, leaf in 1usize..30) {
        let tree = DensityTree::build(&c, grid, leaf).unwrap();
        let mut seen = vec![0u8; c.len()];
        for id in tree.leaves_in_visit_order() {
            let node = tree.node(id);
            prop_assert!(node.points.len() <= leaf || node.depth >= dashpc_core::subsample::MAX_DEPTH);
            for &i in &node.points {
                seen[i] += 1;
                prop_assert!(node.bounds.contains(&c.points()[i]));
            }
        }
        prop_assert!(seen.iter().all(|&s| s == 1));
    }

    #[test]
    fn octree_neighbors_match_brute_force(c in cloud(200), r in ratio(), cluster in 2usize..7) {
        let trace = trace_octree_neighbors(&c, r, cluster).unwrap();
        let expected = brute_force_neighbors(&c, r, cluster);
        prop_assert_eq!(trace.output, expected);
        // Clusters within one sweep are disjoint.
        for pass in &trace.passes {
            let mut seen = std::collections::HashSet::new();
            for cl in &pass.clusters {
                for &m in &cl.members {
                    prop_assert!(seen.insert(m));
                }
            }
        }
    }
}

/// Same clustering as the library, with every neighbor query answered by a
/// full scan. Only the leaf visit order is taken from the octree.
fn brute_force_neighbors(cloud: &PointCloud, r: Ratio, c: usize) -> PointCloud {
    let n = cloud.len();
    let mut budget = n - target_keep_count(n, r);
    let mut current: Vec<Point> = cloud.points().to_vec();
    loop {
        let pc = PointCloud::new(current.clone()).unwrap();
        let tree = DensityTree::build(&pc, 1, 1).unwrap();
        let visit: Vec<usize> = tree
            .leaves_in_visit_order()
            .into_iter()
            .flat_map(|id| tree.node(id).points.clone())
            .collect();
        let pts = &current;
        let mut taken = vec![false; pts.len()];
        let mut removed = vec![false; pts.len()];
        for &seed in &visit {
            if budget == 0 {
                break;
            }
            if taken[seed] {
                continue;
            }
            let want = c.min(budget + 1);
            let mut others: Vec<usize> =
                (0..pts.len()).filter(|&j| j != seed && !taken[j]).collect();
            let d = |j: usize| {
                let (a, b) = (&pts[seed], &pts[j]);
                let (dx, dy, dz) = (a.x - b.x, a.y - b.y, a.z - b.z);
                dx * dx + dy * dy + dz * dz
            };
            others.sort_by(|&i, &j| {
                d(i).total_cmp(&d(j))
                    .then(pts[i].z.total_cmp(&pts[j].z))
                    .then(pts[i].y.total_cmp(&pts[j].y))
                    .then(pts[i].x.total_cmp(&pts[j].x))
                    .then(i.cmp(&j))
            });
            let mut members = vec![seed];
            members.extend(others.into_iter().take(want - 1));
            let mut by_pos = members.clone();
            by_pos.sort_by(|&i, &j| pts[i].spatial_cmp(&pts[j]).then(i.cmp(&j)));
            let keep = by_pos[by_pos.len() / 2];
            for &m in &members {
                taken[m] = true;
                if m != keep {
                    removed[m] = true;
                }
            }
            budget -= members.len() - 1;
        }
        current = visit
            .into_iter()
            .filter(|&i| !removed[i])
            .map(|i| pts[i])
            .collect();
        if budget == 0 {
            return PointCloud::new(current).unwrap();
        }
    }
}

#[test]
fn million_point_counts() {
    assert_eq!(
        target_keep_count(1_060_464, Ratio::new(7.0).unwrap()),
        151_495
    );
    assert_eq!(
        target_keep_count(1_060_464, Ratio::new(35.0).unwrap()),
        30_299
    );
    assert_eq!(target_keep_count(10, Ratio::ONE), 10);
    assert_eq!(
        target_keep_count(1001, Ratio::from_percentage(50.0).unwrap()),
        501
    );
    // 100 / 30 is not exact in binary; 30% of 1000 is still 300.
    assert_eq!(
        target_keep_count(1000, Ratio::from_percentage(30.0).unwrap()),
        300
    );
}

#[test]
fn sorted_cluster_picks_even_indices() {
    let pts: Vec<Point> = (0..10)
        .rev()
        .map(|i| Point::new(0.0, 0.0, i as f64, i as u8, 0, 0))
        .collect();
    let out = subsample_sorted(&PointCloud::new(pts).unwrap(), Ratio::new(2.0).unwrap()).unwrap();
    let zs: Vec<f64> = out.points().iter().map(|p| p.z).collect();
    assert_eq!(zs, vec![0.0, 2.0, 4.0, 6.0, 8.0]);
}

#[test]
fn hundred_points_ratio_four_cluster_four() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(100);
    let pts: Vec<Point> = (0..100)
        .map(|_| Point::new(rng.gen(), rng.gen(), rng.gen(), 0, 0, 0))
        .collect();
    let cloud = PointCloud::new(pts).unwrap();
    let r = Ratio::new(4.0).unwrap();
    let trace = trace_octree_neighbors(&cloud, r, 4).unwrap();
    assert_eq!(trace.output.len(), 25);
    assert_eq!(trace.output, brute_force_neighbors(&cloud, r, 4));
    assert_eq!(trace.passes.len(), 1);
    assert_eq!(trace.passes[0].processed, 100);
}
