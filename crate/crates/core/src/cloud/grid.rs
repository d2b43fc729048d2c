use std::collections::HashMap;

use nalgebra::Vector3;

type Key = (i64, i64, i64);

/// Uniform voxel hash over a fixed set of positions.
///
/// Queries return point indices into the slice the grid was built from. Ties
/// in distance are broken by index so results are deterministic.
#[derive(Clone, Debug)]
pub struct VoxelGrid {
    cell: f64,
    cells: HashMap<Key, Vec<usize>>,
    positions: Vec<Vector3<f64>>,
    key_lo: Key,
    key_hi: Key,
}

impl VoxelGrid {
    pub fn new(positions: &[Vector3<f64>], cell: f64) -> Self {
        assert!(cell > 0.0 && cell.is_finite(), "voxel size must be positive");
        let mut cells: HashMap<Key, Vec<usize>> = HashMap::new();
        let mut key_lo = (i64::MAX, i64::MAX, i64::MAX);
        let mut key_hi = (i64::MIN, i64::MIN, i64::MIN);
        for (i, p) in positions.iter().enumerate() {
            let k = key_of(p, cell);
            key_lo = (key_lo.0.min(k.0), key_lo.1.min(k.1), key_lo.2.min(k.2));
            key_hi = (key_hi.0.max(k.0), key_hi.1.max(k.1), key_hi.2.max(k.2));
            cells.entry(k).or_default().push(i);
        }
        Self { cell, cells, positions: positions.to_vec(), key_lo, key_hi }
    }

    pub fn cell_size(&self) -> f64 {
        self.cell
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Indices of all points within `radius` (inclusive) of `q`, ascending.
    pub fn radius(&self, q: &Vector3<f64>, radius: f64) -> Vec<usize> {
        let r2 = radius * radius;
        let reach = (radius / self.cell).ceil() as i64;
        let c = key_of(q, self.cell);
        let mut out = Vec::new();
        for dx in -reach..=reach {
            for dy in -reach..=reach {
                for dz in -reach..=reach {
                    if let Some(ids) = self.cells.get(&(c.0 + dx, c.1 + dy, c.2 + dz)) {
                        out.extend(
                            ids.iter()
                                .copied()
                                .filter(|&i| (self.positions[i] - q).norm_squared() <= r2),
                        );
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Whether any point lies within `radius` (inclusive) of `q`; the cell of
    /// `q` is searched first.
    pub fn any_within(&self, q: &Vector3<f64>, radius: f64) -> bool {
        let r2 = radius * radius;
        let hit = |k: &Key| self.cells.get(k).is_some_and(|ids| ids.iter().any(|&i| (self.positions[i] - q).norm_squared() <= r2));
        let c = key_of(q, self.cell);
        if hit(&c) {
            return true;
        }
        let reach = (radius / self.cell).ceil() as i64;
        for dx in -reach..=reach {
            for dy in -reach..=reach {
                for dz in -reach..=reach {
                    if (dx, dy, dz) != (0, 0, 0) && hit(&(c.0 + dx, c.1 + dy, c.2 + dz)) {
                        return true;
                    }
                }
            }
        }
        false
    }

    /// The `k` nearest points to `q` as `(index, squared distance)`, nearest first.
    pub fn knn(&self, q: &Vector3<f64>, k: usize) -> Vec<(usize, f64)> {
        if k == 0 || self.positions.is_empty() {
            return Vec::new();
        }
        let c = key_of(q, self.cell);
        let gap = |x: i64, lo: i64, hi: i64| (lo - x).max(x - hi).max(0);
        let far = |x: i64, lo: i64, hi: i64| (x - lo).abs().max((hi - x).abs());
        let first_ring = gap(c.0, self.key_lo.0, self.key_hi.0)
            .max(gap(c.1, self.key_lo.1, self.key_hi.1))
            .max(gap(c.2, self.key_lo.2, self.key_hi.2));
        let max_ring = far(c.0, self.key_lo.0, self.key_hi.0)
            .max(far(c.1, self.key_lo.1, self.key_hi.1))
            .max(far(c.2, self.key_lo.2, self.key_hi.2));

        let mut best: Vec<(usize, f64)> = Vec::with_capacity(k + 1);
        for ring in first_ring..=max_ring {
            self.visit_shell(c, ring, |i| {
                let d2 = (self.positions[i] - q).norm_squared();
                if best.len() < k || less(&(i, d2), &best[best.len() - 1]) {
                    let pos = best.partition_point(|e| less(e, &(i, d2)));
                    best.insert(pos, (i, d2));
                    best.truncate(k);
                }
            });
            if best.len() == k {
                // anything outside the visited shells is at least ring·cell away
                let bound = ring as f64 * self.cell;
                if best[k - 1].1 <= bound * bound {
                    break;
                }
            }
        }
        best
    }

    /// Visits occupied cells at Chebyshev distance `ring` from `c`, clipped
    /// to the occupied key range.
    fn visit_shell(&self, c: Key, ring: i64, mut f: impl FnMut(usize)) {
        let span = |x: i64, lo: i64, hi: i64| (-ring).max(lo - x)..=ring.min(hi - x);
        let (lo, hi) = (self.key_lo, self.key_hi);
        let mut cell = |dx: i64, dy: i64, dz: i64| {
            if let Some(ids) = self.cells.get(&(c.0 + dx, c.1 + dy, c.2 + dz)) {
                ids.iter().for_each(|&i| f(i));
            }
        };
        let zs = span(c.2, lo.2, hi.2);
        for dx in span(c.0, lo.0, hi.0) {
            for dy in span(c.1, lo.1, hi.1) {
                if dx.abs() == ring || dy.abs() == ring {
                    for dz in zs.clone() {
                        cell(dx, dy, dz);
                    }
                } else {
                    for dz in [-ring, ring] {
                        if zs.contains(&dz) {
                            cell(dx, dy, dz);
                        }
                    }
                }
            }
        }
    }
}

fn less(a: &(usize, f64), b: &(usize, f64)) -> bool {
    a.1 < b.1 || (a.1 == b.1 && a.0 < b.0)
}

fn key_of(p: &Vector3<f64>, cell: f64) -> Key {
    (
        (p.x / cell).floor() as i64,
        (p.y / cell).floor() as i64,
        (p.z / cell).floor() as i64,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_knn(pts: &[Vector3<f64>], q: &Vector3<f64>, k: usize) -> Vec<(usize, f64)> {
        let mut all: Vec<_> = pts.iter().enumerate().map(|(i, p)| (i, (p - q).norm_squared())).collect();
        all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        all.truncate(k);
        all
    }

    #[test]
    fn knn_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<_> = (0..500)
            .map(|_| Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-0.1..0.1)))
            .collect();
        for cell in [0.05, 0.2, 1.5] {
            let g = VoxelGrid::new(&pts, cell);
            for _ in 0..50 {
                let q = Vector3::new(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5), 0.0);
                assert_eq!(g.knn(&q, 15), brute_knn(&pts, &q, 15));
            }
        }
    }

    #[test]
    fn radius_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<_> = (0..300)
            .map(|_| Vector3::new(rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)))
            .collect();
        let g = VoxelGrid::new(&pts, 0.1);
        for i in 0..30 {
            let q = pts[i];
            let expect: Vec<usize> = (0..pts.len()).filter(|&j| (pts[j] - q).norm() <= 0.17).collect();
            assert_eq!(g.radius(&q, 0.17), expect);
        }
        for _ in 0..200 {
            let q = Vector3::new(rng.random_range(-0.3..1.3), rng.random_range(-0.3..1.3), rng.random_range(-0.3..1.3));
            for r in [0.02, 0.1, 0.25] {
                assert_eq!(g.any_within(&q, r), pts.iter().any(|p| (p - q).norm() <= r));
            }
        }
    }

    #[test]
    fn knn_with_fewer_points_than_k() {
        let pts = vec![Vector3::zeros(), Vector3::new(1.0, 0.0, 0.0)];
        let g = VoxelGrid::new(&pts, 0.1);
        assert_eq!(g.knn(&Vector3::zeros(), 5).len(), 2);
    }

    #[test]
    fn knn_far_from_the_cloud() {
        let pts: Vec<_> = (0..50).map(|i| Vector3::new(i as f64 * 0.01, 0.0, 0.0)).collect();
        let g = VoxelGrid::new(&pts, 0.01);
        let q = Vector3::new(500.0, -300.0, 20.0);
        assert_eq!(g.knn(&q, 3), brute_knn(&pts, &q, 3));
    }
}
