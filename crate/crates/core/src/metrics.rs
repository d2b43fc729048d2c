//! Pose and point-set accuracy metrics.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use rstar::{PointDistance, RTree};
use rayon::prelude::*;

use crate::cloud::{PointCloud, VoxelGrid};
use crate::geom::{so3_log, Pose};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {0} estimates vs {1} references")]
    LengthMismatch(usize, usize),
    #[error("input is empty")]
    EmptyInput,
    #[error("point cloud is empty")]
    EmptyCloud,
}

/// Translation and rotation RMSE over paired poses.
///
/// The rotation error of a pair is the geodesic angle `‖log(R_est R_trueᵀ)‖`.
/// Sums run over `n = 0..=N_s` with `N_s = count − 1` and are divided by
/// `N_s + 1`.
pub fn rmse(estimates: &[Pose], truth: &[Pose]) -> Result<(f64, f64), MetricsError> {
    if estimates.len() != truth.len() {
        return Err(MetricsError::LengthMismatch(estimates.len(), truth.len()));
    }
    if estimates.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let (mut st, mut sr) = (0.0, 0.0);
    for (e, t) in estimates.iter().zip(truth) {
        st += (e.translation - t.translation).norm_squared();
        let dr = e.rotation * t.rotation.transpose();
        sr += so3_log(&dr).norm_squared();
    }
    let n = estimates.len() as f64;
    Ok(((st / n).sqrt(), (sr / n).sqrt()))
}

/// Squared distance from every point of `from` to its nearest point in `to`.
pub fn nearest_sq_distances(from: &[Vector3<f64>], to: &[Vector3<f64>]) -> Vec<f64> {
    if to.is_empty() {
        return vec![f64::INFINITY; from.len()];
    }
    let tree = RTree::bulk_load(to.iter().map(|p| [p.x, p.y, p.z]).collect());
    from.par_iter()
        .map(|p| {
            let q = [p.x, p.y, p.z];
            tree.nearest_neighbor(q).map_or(f64::INFINITY, |n| n.distance_2(&q))
        })
        .collect()
}

/// Chamfer distance and recall.
///
/// `CD = Σ_x min_y ‖x−y‖² + Σ_y min_x ‖x−y‖²`; with `mean` each sum is divided
/// by its set size. Recall is the fraction of `X` whose squared nearest
/// distance to `Y` is at most `thr`.
pub fn chamfer_and_recall(x: &PointCloud, y: &PointCloud, thr: f64, mean: bool) -> Result<(f64, f64), MetricsError> {
    if x.is_empty() || y.is_empty() {
        return Err(MetricsError::EmptyCloud);
    }
    let (px, py) = (x.positions(), y.positions());
    let dx = nearest_sq_distances(&px, &py);
    let dy = nearest_sq_distances(&py, &px);
    let (sx, sy): (f64, f64) = (dx.iter().sum(), dy.iter().sum());
    let cd = if mean { sx / px.len() as f64 + sy / py.len() as f64 } else { sx + sy };
    let recall = dx.iter().filter(|&&d| d <= thr).count() as f64 / px.len() as f64;
    Ok((cd, recall))
}

/// Fraction of runs with both RMSEs strictly below their thresholds.
pub fn registration_recall(runs: &[(f64, f64)], thr_t: f64, thr_r: f64) -> Result<f64, MetricsError> {
    if runs.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let ok = runs.iter().filter(|(t, r)| *t < thr_t && *r < thr_r).count();
    Ok(ok as f64 / runs.len() as f64)
}

pub const DEFAULT_OVERLAP_TAU: f64 = 0.05;

/// Fraction of `a` with a neighbor in `b` within `tau`.
pub fn overlap_rate_directed(a: &PointCloud, b: &PointCloud, tau: f64) -> Result<f64, MetricsError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricsError::EmptyCloud);
    }
    assert!(tau > 0.0, "overlap radius must be positive");
    let grid = VoxelGrid::new(&b.positions(), tau);
    let hits = a.iter().filter(|p| grid.any_within(&p.position, tau)).count();
    Ok(hits as f64 / a.len() as f64)
}

/// Mean of both directed overlap rates.
pub fn overlap_rate(a: &PointCloud, b: &PointCloud, tau: f64) -> Result<f64, MetricsError> {
    Ok(0.5 * (overlap_rate_directed(a, b, tau)? + overlap_rate_directed(b, a, tau)?))
}

/// Everything `eval` reports.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rmse_t: f64,
    pub rmse_r: f64,
    pub chamfer: Option<f64>,
    pub recall: Option<f64>,
    pub registration_recall: Option<f64>,
    pub overlap: Vec<PairOverlap>,
    pub overlap_definition: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairOverlap {
    pub a: usize,
    pub b: usize,
    pub rate: f64,
}

/// Symmetric overlap of every pair of world-frame clouds.
pub fn pairwise_overlap(clouds: &[PointCloud], tau: f64) -> Vec<PairOverlap> {
    let mut out = Vec::new();
    for a in 0..clouds.len() {
        for b in a + 1..clouds.len() {
            let rate = overlap_rate(&clouds[a], &clouds[b], tau).unwrap_or(0.0);
            out.push(PairOverlap { a, b, rate });
        }
    }
    out
}

pub fn overlap_definition(tau: f64) -> String {
    format!("mean of both directed fractions of points with a neighbor within {tau} m")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::Point;
    use crate::geom::Rotation;

    fn cloud(pts: &[[f64; 3]]) -> PointCloud {
        pts.iter().map(|p| Point::new(p[0], p[1], p[2], 0.0)).collect()
    }

    #[test]
    fn rmse_examples() {
        let poses: Vec<Pose> =
            (0..4).map(|i| Pose::new(Rotation::rot_z(0.1 * i as f64), Vector3::new(i as f64, 0.0, 1.0))).collect();
        assert_eq!(rmse(&poses, &poses).unwrap(), (0.0, 0.0));
        let shifted: Vec<Pose> =
            poses.iter().map(|p| Pose::new(p.rotation, p.translation + Vector3::new(0.1, 0.0, 0.0))).collect();
        let (t, r) = rmse(&shifted, &poses).unwrap();
        assert!((t - 0.1).abs() < 1e-12 && r < 1e-12);
        let a = [Pose::from_translation(Vector3::new(0.1, 0.0, 0.0)), Pose::from_translation(Vector3::new(0.0, 0.2, 0.0))];
        let b = [Pose::identity(), Pose::identity()];
        assert!((rmse(&a, &b).unwrap().0 - 0.158113883008419).abs() < 1e-12);
        assert_eq!(rmse(&a, &b[..1]), Err(MetricsError::LengthMismatch(2, 1)));
    }

    #[test]
    fn rmse_rotation_is_geodesic() {
        let a = [Pose::from_rotation(Rotation::rot_x(0.3))];
        let b = [Pose::identity()];
        assert!((rmse(&a, &b).unwrap().1 - 0.3).abs() < 1e-12);
    }

    #[test]
    fn chamfer_examples() {
        let x = cloud(&[[0.0, 0.0, 0.0], [1.0, 2.0, 0.0]]);
        assert_eq!(chamfer_and_recall(&x, &x, 0.01, false).unwrap(), (0.0, 1.0));
        let (cd, rec) =
            chamfer_and_recall(&cloud(&[[0.0, 0.0, 0.0]]), &cloud(&[[1.0, 0.0, 0.0]]), 0.25, false).unwrap();
        assert!((cd - 2.0).abs() < 1e-12);
        assert_eq!(rec, 0.0);
        assert!(chamfer_and_recall(&PointCloud::default(), &x, 0.1, false).is_err());
    }

    #[test]
    fn chamfer_mean_and_brute_force() {
        let x = cloud(&[[0.0, 0.0, 0.0], [0.5, 0.1, 0.0], [3.0, 0.0, 1.0]]);
        let y = cloud(&[[0.1, 0.0, 0.0], [2.0, 2.0, 2.0]]);
        let brute = |a: &PointCloud, b: &PointCloud| -> Vec<f64> {
            a.iter()
                .map(|p| b.iter().map(|q| (p.position - q.position).norm_squared()).fold(f64::INFINITY, f64::min))
                .collect()
        };
        let (dx, dy) = (brute(&x, &y), brute(&y, &x));
        let (cd, rec) = chamfer_and_recall(&x, &y, 0.2, false).unwrap();
        assert!((cd - dx.iter().sum::<f64>() - dy.iter().sum::<f64>()).abs() < 1e-12);
        assert!((rec - dx.iter().filter(|&&d| d <= 0.2).count() as f64 / 3.0).abs() < 1e-12);
        let (cdm, _) = chamfer_and_recall(&x, &y, 0.2, true).unwrap();
        assert!((cdm - dx.iter().sum::<f64>() / 3.0 - dy.iter().sum::<f64>() / 2.0).abs() < 1e-12);
        let (cd_yx, _) = chamfer_and_recall(&y, &x, 0.2, false).unwrap();
        assert!((cd - cd_yx).abs() < 1e-12);
    }

    #[test]
    fn registration_recall_boundaries() {
        assert_eq!(registration_recall(&[(0.01, 0.01); 3], 0.1, 0.1).unwrap(), 1.0);
        let runs = [(0.01, 0.01), (0.02, 0.01), (0.5, 0.01), (0.01, 0.03)];
        assert_eq!(registration_recall(&runs, 0.1, 0.1).unwrap(), 0.75);
        // equality counts as failure
        assert_eq!(registration_recall(&[(0.1, 0.0)], 0.1, 0.1).unwrap(), 0.0);
        assert!(registration_recall(&[], 0.1, 0.1).is_err());
    }

    #[test]
    fn overlap_examples() {
        let a = cloud(&[[0.0, 0.0, 0.0], [0.01, 0.0, 0.0]]);
        assert_eq!(overlap_rate(&a, &a, 0.05).unwrap(), 1.0);
        let far = cloud(&[[10.0, 0.0, 0.0]]);
        assert_eq!(overlap_rate(&a, &far, 0.05).unwrap(), 0.0);
        let b = cloud(&[[0.0, 0.0, 0.0], [5.0, 0.0, 0.0], [6.0, 0.0, 0.0], [7.0, 0.0, 0.0]]);
        assert!((overlap_rate_directed(&b, &a, 0.05).unwrap() - 0.25).abs() < 1e-12);
        assert!((overlap_rate(&a, &b, 0.05).unwrap() - 0.625).abs() < 1e-12);
    }

    proptest::proptest! {
        #[test]
        fn nearest_matches_brute_force(
            a in proptest::collection::vec((-2.0..2.0f64, -2.0..2.0f64, -0.5..0.5f64), 1..60),
            b in proptest::collection::vec((-2.0..2.0f64, -2.0..2.0f64, -0.5..0.5f64), 1..60),
        ) {
            let v = |p: &[(f64, f64, f64)]| p.iter().map(|&(x, y, z)| Vector3::new(x, y, z)).collect::<Vec<_>>();
            let (a, b) = (v(&a), v(&b));
            let got = nearest_sq_distances(&a, &b);
            for (p, d) in a.iter().zip(&got) {
                let best = b.iter().map(|q| (p - q).norm_squared()).fold(f64::INFINITY, f64::min);
                proptest::prop_assert!((best - d).abs() <= 1e-12);
            }
        }
    }
}
