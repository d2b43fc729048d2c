use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use super::{CloudError, PointCloud};
use crate::geom::{Pose, Rotation};

/// Relative eigenvalue gap below which principal directions are treated as
/// degenerate and re-derived from the world axes.
const EIGEN_TIE: f64 = 1e-9;

/// PCA-aligned bounding box.
///
/// `pose` is the box frame expressed in the world (box → world), so
/// `pose.inverse()` maps world points into the box frame where the box spans
/// `[−l/2, l/2] × [−w/2, w/2] × [−h/2, h/2]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrientedBox {
    pub pose: Pose,
    /// `[l, w, h]`, sorted descending.
    pub extents: [f64; 3],
}

impl OrientedBox {
    pub fn length(&self) -> f64 {
        self.extents[0]
    }

    pub fn width(&self) -> f64 {
        self.extents[1]
    }

    pub fn height(&self) -> f64 {
        self.extents[2]
    }

    /// Cuboid diagonal `L = √(l² + w² + h²)`.
    pub fn diagonal(&self) -> f64 {
        self.extents.iter().map(|e| e * e).sum::<f64>().sqrt()
    }

    /// Footprint area `S = l · w`.
    pub fn footprint_area(&self) -> f64 {
        self.extents[0] * self.extents[1]
    }

    pub fn world_to_box(&self) -> Pose {
        self.pose.inverse()
    }

    pub fn center(&self) -> Vector3<f64> {
        self.pose.translation
    }

    /// Same pose, extents scaled per axis.
    pub fn scaled(&self, factors: [f64; 3]) -> OrientedBox {
        OrientedBox {
            pose: self.pose,
            extents: [
                self.extents[0] * factors[0],
                self.extents[1] * factors[1],
                self.extents[2] * factors[2],
            ],
        }
    }

    /// Whether `p` (world frame) lies in the box grown by `margin` on every side.
    pub fn contains(&self, p: &Vector3<f64>, margin: f64) -> bool {
        let q = self.world_to_box().transform_point(p);
        (0..3).all(|k| q[k].abs() <= 0.5 * self.extents[k] + margin)
    }
}

/// Fits a PCA oriented bounding box.
///
/// Axes are principal components of the covariance; extents are the
/// projected max−min. Axes are re-ordered so `l ≥ w ≥ h`; the first two axes
/// are signed so their dot product with (1,1,1) is non-negative (ties toward
/// +x) and the third completes a right-handed frame. Degenerate eigenspaces
/// (equal variances, e.g. a square) take their basis from the world axes.
pub fn fit_obb(cluster: &PointCloud) -> Result<OrientedBox, CloudError> {
    let n = cluster.len();
    if n < 3 {
        return Err(CloudError::DegenerateCluster);
    }
    let pts = cluster.positions();
    let mean = pts.iter().fold(Vector3::zeros(), |a, p| a + p) / n as f64;
    let cov = pts.iter().fold(Matrix3::zeros(), |a, p| {
        let d = p - mean;
        a + d * d.transpose()
    }) / n as f64;

    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut axes: Vec<Vector3<f64>> = order.iter().map(|&k| eig.eigenvectors.column(k).into_owned()).collect();
    if !(vals[0] > 0.0) || vals[1] <= 1e-12 * vals[0] {
        return Err(CloudError::DegenerateCluster);
    }
    resolve_degenerate(&vals, &mut axes);

    // extents along each principal axis
    let mut spans = [(0.0, 0.0); 3];
    for (k, axis) in axes.iter().enumerate() {
        let (lo, hi) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            let s = axis.dot(p);
            (lo.min(s), hi.max(s))
        });
        spans[k] = (lo, hi);
    }
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&a, &b| (spans[b].1 - spans[b].0).total_cmp(&(spans[a].1 - spans[a].0)));

    let center: Vector3<f64> = (0..3).fold(Vector3::zeros(), |c, k| c + axes[k] * 0.5 * (spans[k].0 + spans[k].1));
    let a0 = canonical_sign(axes[idx[0]]);
    let a1 = canonical_sign(axes[idx[1]]);
    let a2 = a0.cross(&a1);
    let extents = idx.map(|k| spans[k].1 - spans[k].0);
    let rot = Rotation::orthonormalize(&Matrix3::from_columns(&[a0, a1, a2]));
    Ok(OrientedBox { pose: Pose::new(rot, center), extents })
}

fn resolve_degenerate(vals: &[f64], axes: &mut [Vector3<f64>]) {
    let scale = vals[0].abs().max(f64::MIN_POSITIVE);
    let tie = |a: f64, b: f64| (a - b).abs() <= EIGEN_TIE * scale;
    let world = [Vector3::x(), Vector3::y(), Vector3::z()];
    let groups: Vec<std::ops::Range<usize>> = if tie(vals[0], vals[1]) && tie(vals[1], vals[2]) {
        vec![0..3]
    } else if tie(vals[0], vals[1]) {
        vec![0..2]
    } else if tie(vals[1], vals[2]) {
        vec![1..3]
    } else {
        vec![]
    };
    for g in groups {
        let span: Vec<Vector3<f64>> = axes[g.clone()].to_vec();
        let mut basis: Vec<Vector3<f64>> = Vec::new();
        for w in &world {
            if basis.len() == span.len() {
                break;
            }
            // project onto the eigenspace, then orthogonalize against chosen vectors
            let mut v: Vector3<f64> = span.iter().map(|s| s * s.dot(w)).sum();
            for b in &basis {
                v -= b * b.dot(&v);
            }
            if v.norm() > 1e-6 {
                basis.push(v.normalize());
            }
        }
        if basis.len() == span.len() {
            for (k, b) in g.zip(basis) {
                axes[k] = b;
            }
        }
    }
}

fn canonical_sign(v: Vector3<f64>) -> Vector3<f64> {
    let s = v.x + v.y + v.z;
    if s > 1e-12 {
        return v;
    }
    if s < -1e-12 {
        return -v;
    }
    // tie: first non-zero component positive, scanning from x
    for k in 0..3 {
        if v[k].abs() > 1e-12 {
            return if v[k] > 0.0 { v } else { -v };
        }
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::Point;

    fn square(a: f64, theta: f64, n: usize) -> PointCloud {
        let r = Rotation::rot_z(theta);
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let x = -a / 2.0 + a * i as f64 / (n - 1) as f64;
                let y = -a / 2.0 + a * j as f64 / (n - 1) as f64;
                out.push(Point::from_vec(r * Vector3::new(x, y, 0.0), 0.0));
            }
        }
        PointCloud::new(out)
    }

    #[test]
    fn axis_aligned_unit_square() {
        let b = fit_obb(&square(1.0, 0.0, 11)).unwrap();
        assert!((b.length() - 1.0).abs() < 1e-6);
        assert!((b.width() - 1.0).abs() < 1e-6);
        assert!(b.height().abs() < 1e-6);
    }

    #[test]
    fn rotated_square_side_grows() {
        let b = fit_obb(&square(1.0, std::f64::consts::FRAC_PI_4, 11)).unwrap();
        assert!((b.length() - 2f64.sqrt()).abs() < 1e-6);
        assert!((b.width() - 2f64.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn degenerate_inputs() {
        let same = PointCloud::new(vec![Point::new(1.0, 2.0, 3.0, 0.0); 3]);
        assert_eq!(fit_obb(&same), Err(CloudError::DegenerateCluster));
        let two = PointCloud::new(vec![Point::new(0.0, 0.0, 0.0, 0.0), Point::new(1.0, 0.0, 0.0, 0.0)]);
        assert_eq!(fit_obb(&two), Err(CloudError::DegenerateCluster));
        let line: PointCloud = (0..5).map(|i| Point::new(i as f64, 2.0 * i as f64, 0.0, 0.0)).collect();
        assert_eq!(fit_obb(&line), Err(CloudError::DegenerateCluster));
    }

    #[test]
    fn rectangle_in_general_pose_contains_points() {
        let pose = Pose::new(
            Rotation::rot_x(0.3) * Rotation::rot_z(1.1),
            Vector3::new(3.0, -1.0, 2.0),
        );
        let pts: PointCloud = (0..200)
            .map(|i| {
                let x = (i % 20) as f64 * 0.05;
                let y = (i / 20) as f64 * 0.03;
                Point::from_vec(pose.transform_point(&Vector3::new(x, y, 0.0)), 0.0)
            })
            .collect();
        let b = fit_obb(&pts).unwrap();
        assert!(b.extents[0] >= b.extents[1] && b.extents[1] >= b.extents[2]);
        assert!((b.length() - 0.95).abs() < 1e-9);
        assert!((b.width() - 0.27).abs() < 1e-9);
        for p in &pts {
            assert!(b.contains(&p.position, 1e-9));
        }
        assert!((b.pose.rotation.matrix().determinant() - 1.0).abs() < 1e-12);
    }
}
