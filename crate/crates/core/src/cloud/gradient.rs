use log::debug;
use nalgebra::{DMatrix, DVector, Vector3};

use super::{CloudError, Point, PointCloud, VoxelGrid};

pub const DEFAULT_GRADIENT_K: usize = 15;
/// Intensity units per meter, for the 0–255 intensity scale. A tag edge at
/// centimeter spacing is near 10⁴; intensity noise of a few units on flat
/// surfaces stays below this.
pub const DEFAULT_GRADIENT_THRESHOLD: f64 = 500.0;

/// Local linear fit `I(p) ≈ gradient · (p − p0) + intercept` around a query point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradientEstimate {
    pub gradient: Vector3<f64>,
    /// Intercept of the fit against the centered intensities `I − Ī`.
    pub intercept: f64,
    pub neighbor_count: usize,
}

impl GradientEstimate {
    pub fn norm(&self) -> f64 {
        self.gradient.norm()
    }
}

/// Regresses centered intensities on offsets from `p0`.
///
/// Solves `E = (DᵀD)⁻¹ Dᵀ I_in` with design rows `[1, Δx, Δy, Δz]` and
/// `I_in = I − Ī`. When the offsets are coplanar (a surface sampled without
/// noise) the out-of-plane coefficient is unidentifiable; the minimum-norm
/// solution is returned, which leaves the in-surface gradient exact. Offsets
/// that are collinear or coincident are rejected as rank deficient.
pub fn intensity_gradient(p0: &Point, neighbors: &[Point]) -> Result<GradientEstimate, CloudError> {
    let n = neighbors.len();
    if n < 4 {
        return Err(CloudError::TooFewNeighbors(n));
    }
    let mean_i = neighbors.iter().map(|p| p.intensity).sum::<f64>() / n as f64;
    let offsets: Vec<Vector3<f64>> = neighbors.iter().map(|p| p.position - p0.position).collect();
    let mean_off = offsets.iter().fold(Vector3::zeros(), |a, d| a + d) / n as f64;

    // Frisch–Waugh: the slope block of the intercept regression equals the
    // regression on column-centered offsets.
    let x = DMatrix::from_fn(n, 3, |r, c| offsets[r][c] - mean_off[c]);
    let y = DVector::from_iterator(n, neighbors.iter().map(|p| p.intensity - mean_i));

    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * 1e-9;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    if smax <= 0.0 || rank < 2 {
        return Err(CloudError::RankDeficient);
    }
    let sol = svd.solve(&y, tol).map_err(|_| CloudError::RankDeficient)?;
    let gradient = Vector3::new(sol[0], sol[1], sol[2]);
    // ΔI has zero mean, so the intercept absorbs only the offset centroid.
    let intercept = -gradient.dot(&mean_off);
    Ok(GradientEstimate { gradient, intercept, neighbor_count: n })
}

/// Indices of points whose intensity-gradient norm (from their `k` nearest
/// neighbors, the point itself included) exceeds `threshold`, in input order.
pub fn downsample_by_gradient_indices(cloud: &PointCloud, k: usize, threshold: f64) -> Vec<usize> {
    assert!(k >= 4, "gradient regression needs k >= 4");
    if cloud.is_empty() || !threshold.is_finite() {
        return Vec::new();
    }
    let positions = cloud.positions();
    let spacing = cloud.estimate_spacing(256).unwrap_or(1.0).max(1e-6);
    let grid = VoxelGrid::new(&positions, 2.0 * spacing);
    let mut dropped = 0usize;
    let mut neigh = Vec::with_capacity(k);
    let kept: Vec<usize> = (0..cloud.len())
        .filter(|&i| {
            neigh.clear();
            neigh.extend(grid.knn(&positions[i], k).into_iter().map(|(j, _)| cloud.points[j]));
            match intensity_gradient(&cloud.points[i], &neigh) {
                Ok(g) => g.norm() > threshold,
                Err(_) => {
                    dropped += 1;
                    false
                }
            }
        })
        .collect();
    if dropped > 0 {
        debug!("gradient downsampling dropped {dropped} points with degenerate neighborhoods");
    }
    kept
}

pub fn downsample_by_gradient(cloud: &PointCloud, k: usize, threshold: f64) -> PointCloud {
    cloud.select(&downsample_by_gradient_indices(cloud, k, threshold))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix4;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(rng: &mut ChaCha8Rng, n: usize, field: impl Fn(&Vector3<f64>) -> f64) -> Vec<Point> {
        (0..n)
            .map(|_| {
                let p = Vector3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1));
                Point::from_vec(p, field(&p))
            })
            .collect()
    }

    #[test]
    fn linear_field_is_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts = random_points(&mut rng, 15, |p| 2.0 * p.x + 3.0 * p.y - p.z + 5.0);
        let g = intensity_gradient(&pts[0], &pts).unwrap();
        assert!((g.gradient - Vector3::new(2.0, 3.0, -1.0)).norm() < 1e-9);
    }

    #[test]
    fn constant_field_has_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let pts = random_points(&mut rng, 15, |_| 77.0);
        let g = intensity_gradient(&pts[0], &pts).unwrap();
        assert!(g.gradient.norm() < 1e-12);
    }

    #[test]
    fn matches_explicit_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut pts = random_points(&mut rng, 20, |_| 0.0);
        for p in &mut pts {
            p.intensity = rng.random_range(0.0..255.0);
        }
        let p0 = pts[3];
        let g = intensity_gradient(&p0, &pts).unwrap();

        // oracle: E = (DᵀD)⁻¹ Dᵀ I_in with an explicit 4×4 inverse
        let mean = pts.iter().map(|p| p.intensity).sum::<f64>() / 20.0;
        let mut dtd = Matrix4::<f64>::zeros();
        let mut dty = nalgebra::Vector4::<f64>::zeros();
        for p in &pts {
            let d = p.position - p0.position;
            let row = nalgebra::Vector4::new(1.0, d.x, d.y, d.z);
            dtd += row * row.transpose();
            dty += row * (p.intensity - mean);
        }
        let e = dtd.try_inverse().unwrap() * dty;
        assert!((g.gradient - Vector3::new(e[1], e[2], e[3])).norm() < 1e-9);
        assert!((g.intercept - e[0]).abs() < 1e-9);
    }

    #[test]
    fn coplanar_neighbors_give_in_plane_gradient() {
        let pts: Vec<Point> = (0..25)
            .map(|i| {
                let (x, y) = ((i % 5) as f64 * 0.01, (i / 5) as f64 * 0.01);
                Point::new(x, y, 0.0, 10.0 + 400.0 * x)
            })
            .collect();
        let g = intensity_gradient(&pts[12], &pts).unwrap();
        assert!((g.gradient - Vector3::new(400.0, 0.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn collinear_neighbors_are_rank_deficient() {
        let pts: Vec<Point> = (0..6).map(|i| Point::new(i as f64, 0.0, 0.0, i as f64)).collect();
        assert_eq!(intensity_gradient(&pts[0], &pts), Err(CloudError::RankDeficient));
        assert_eq!(intensity_gradient(&pts[0], &pts[..3]), Err(CloudError::TooFewNeighbors(3)));
    }

    fn plane(n: usize, spacing: f64, intensity: impl Fn(f64, f64) -> f64) -> PointCloud {
        (0..n * n)
            .map(|i| {
                let (x, y) = ((i % n) as f64 * spacing, (i / n) as f64 * spacing);
                Point::new(x, y, 0.0, intensity(x, y))
            })
            .collect()
    }

    #[test]
    fn downsample_constant_and_infinite_threshold() {
        let c = plane(20, 0.01, |_, _| 100.0);
        assert!(downsample_by_gradient(&c, 15, 25.0).is_empty());
        let c = plane(20, 0.01, |x, _| if x < 0.1 { 30.0 } else { 220.0 });
        assert!(!downsample_by_gradient(&c, 15, 25.0).is_empty());
        assert!(downsample_by_gradient(&c, 15, f64::INFINITY).is_empty());
    }

    #[test]
    fn downsample_keeps_only_edge_band() {
        let s = 0.01;
        // checkerboard patch with 0.1 m cells on a 0.4 m plane
        let cell = |x: f64, y: f64| ((x / 0.1).floor() as i64 + (y / 0.1).floor() as i64) % 2 == 0;
        let c = plane(40, s, |x, y| if cell(x + 1e-9, y + 1e-9) { 220.0 } else { 30.0 });
        let kept = downsample_by_gradient_indices(&c, 15, 25.0);
        assert!(!kept.is_empty());
        for &i in &kept {
            let p = c.points[i].position;
            let dx = ((p.x + 1e-9) / 0.1).fract() * 0.1;
            let dy = ((p.y + 1e-9) / 0.1).fract() * 0.1;
            let to_edge = dx.min(0.1 - dx).min(dy).min(0.1 - dy);
            assert!(to_edge <= 2.0 * s + 1e-9, "point {p:?} is {to_edge} from an edge");
        }
        // a point in the middle of a cell is absent
        let center = (5 * 40 + 5) as usize; // (0.05, 0.05)
        assert!(!kept.contains(&center));
    }
}
