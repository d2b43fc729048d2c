use std::collections::VecDeque;

use super::{PointCloud, VoxelGrid};

/// Connected components under the "within `tol`" relation, filtered to
/// `min_size..=max_size`. Each component lists point indices ascending;
/// components are ordered by their first index.
pub fn euclidean_cluster_indices(
    cloud: &PointCloud,
    tol: f64,
    min_size: usize,
    max_size: usize,
) -> Vec<Vec<usize>> {
    assert!(tol > 0.0, "cluster tolerance must be positive");
    assert!(min_size > 0 && min_size <= max_size, "invalid cluster size bounds");
    if cloud.is_empty() {
        return Vec::new();
    }
    let positions = cloud.positions();
    let grid = VoxelGrid::new(&positions, tol);
    let mut visited = vec![false; cloud.len()];
    let mut clusters = Vec::new();
    let mut queue = VecDeque::new();

    for seed in 0..cloud.len() {
        if visited[seed] {
            continue;
        }
        visited[seed] = true;
        queue.push_back(seed);
        let mut members = Vec::new();
        while let Some(i) = queue.pop_front() {
            members.push(i);
            for j in grid.radius(&positions[i], tol) {
                if !visited[j] {
                    visited[j] = true;
                    queue.push_back(j);
                }
            }
        }
        if (min_size..=max_size).contains(&members.len()) {
            members.sort_unstable();
            clusters.push(members);
        }
    }
    clusters
}

pub fn euclidean_cluster(cloud: &PointCloud, tol: f64, min_size: usize, max_size: usize) -> Vec<PointCloud> {
    euclidean_cluster_indices(cloud, tol, min_size, max_size)
        .iter()
        .map(|ids| cloud.select(ids))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::Point;

    fn blob(cx: f64, n: usize) -> Vec<Point> {
        (0..n).map(|i| Point::new(cx + 0.01 * (i % 5) as f64, 0.01 * (i / 5) as f64, 0.0, 0.0)).collect()
    }

    #[test]
    fn two_blobs_and_one_blob() {
        let mut pts = blob(0.0, 20);
        pts.extend(blob(1.0, 20));
        let c = PointCloud::new(pts);
        assert_eq!(euclidean_cluster(&c, 0.1, 1, 1000).len(), 2);
        let c = PointCloud::new(blob(0.0, 20));
        assert_eq!(euclidean_cluster(&c, 0.1, 1, 1000).len(), 1);
    }

    /// Union-find connectivity oracle over all pairs.
    fn oracle(c: &PointCloud, tol: f64) -> Vec<Vec<usize>> {
        let n = c.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], i: usize) -> usize {
            let mut r = i;
            while p[r] != r {
                r = p[r];
            }
            p[i] = r;
            r
        }
        for i in 0..n {
            for j in i + 1..n {
                if (c.points[i].position - c.points[j].position).norm() <= tol {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
        let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for i in 0..n {
            let r = find(&mut parent, i);
            groups.entry(r).or_default().push(i);
        }
        groups.into_values().collect()
    }

    #[test]
    fn chain_spacing_against_union_find() {
        for (spacing, expect_one) in [(0.09, true), (0.11, false)] {
            let c: PointCloud = (0..10).map(|i| Point::new(i as f64 * spacing, 0.0, 0.0, 0.0)).collect();
            let got = euclidean_cluster_indices(&c, 0.1, 2, 100);
            let expect: Vec<_> = oracle(&c, 0.1).into_iter().filter(|g| g.len() >= 2).collect();
            assert_eq!(got, expect);
            assert_eq!(got.len() == 1, expect_one);
            if !expect_one {
                assert!(got.is_empty());
            }
        }
    }

    #[test]
    fn partition_is_permutation_invariant() {
        let mut pts = blob(0.0, 15);
        pts.extend(blob(0.5, 10));
        pts.extend(blob(2.0, 3));
        let c = PointCloud::new(pts.clone());
        let a = euclidean_cluster(&c, 0.05, 4, 100);
        pts.reverse();
        let b = euclidean_cluster(&PointCloud::new(pts), 0.05, 4, 100);
        let key = |v: &Vec<PointCloud>| {
            let mut sizes: Vec<usize> = v.iter().map(|c| c.len()).collect();
            sizes.sort();
            sizes
        };
        assert_eq!(key(&a), key(&b));
        assert_eq!(key(&a), vec![10, 15]);
    }
}
