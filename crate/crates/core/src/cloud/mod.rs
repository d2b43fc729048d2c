//! Point clouds with per-point intensity, plus the geometric analysis used to
//! find marker candidates: intensity-gradient downsampling, Euclidean
//! clustering and PCA oriented bounding boxes.

mod cluster;
mod gradient;
mod grid;
mod obb;

pub use cluster::{euclidean_cluster, euclidean_cluster_indices};
pub use gradient::{
    downsample_by_gradient, downsample_by_gradient_indices, intensity_gradient, GradientEstimate,
    DEFAULT_GRADIENT_K, DEFAULT_GRADIENT_THRESHOLD,
};
pub use grid::VoxelGrid;
pub use obb::{fit_obb, OrientedBox};

use nalgebra::Vector3;
use thiserror::Error;

use crate::geom::Pose;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CloudError {
    #[error("gradient regression needs at least 4 neighbors, got {0}")]
    TooFewNeighbors(usize),
    #[error("neighbor positions are rank deficient")]
    RankDeficient,
    #[error("cluster is degenerate (fewer than 3 points or collinear)")]
    DegenerateCluster,
    #[error("point cloud is empty")]
    EmptyCloud,
}

/// A LiDAR return: position in meters and intensity on the 0–255 scale.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub position: Vector3<f64>,
    pub intensity: f64,
}

impl Point {
    pub fn new(x: f64, y: f64, z: f64, intensity: f64) -> Self {
        Self { position: Vector3::new(x, y, z), intensity }
    }

    pub fn from_vec(position: Vector3<f64>, intensity: f64) -> Self {
        Self { position, intensity }
    }

    pub fn is_valid(&self) -> bool {
        self.position.iter().all(|v| v.is_finite()) && (0.0..=255.0).contains(&self.intensity)
    }
}

/// Ordered collection of points. Iteration order is the insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point>,
}

impl PointCloud {
    pub fn new(points: Vec<Point>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point> {
        self.points.iter()
    }

    pub fn push(&mut self, p: Point) {
        self.points.push(p);
    }

    pub fn positions(&self) -> Vec<Vector3<f64>> {
        self.points.iter().map(|p| p.position).collect()
    }

    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud::new(indices.iter().map(|&i| self.points[i]).collect())
    }

    /// Applies `pose` to every position; intensities are unchanged.
    pub fn transformed(&self, pose: &Pose) -> PointCloud {
        PointCloud::new(
            self.points
                .iter()
                .map(|p| Point::from_vec(pose.transform_point(&p.position), p.intensity))
                .collect(),
        )
    }

    pub fn extend(&mut self, other: &PointCloud) {
        self.points.extend_from_slice(&other.points);
    }

    /// Median nearest-neighbor distance over up to `samples` evenly strided points.
    pub fn estimate_spacing(&self, samples: usize) -> Option<f64> {
        if self.len() < 2 {
            return None;
        }
        let positions = self.positions();
        let (lo, hi) = bounds(&positions);
        let diag = (hi - lo).norm().max(1e-9);
        let cell = (diag / (self.len() as f64).cbrt()).max(1e-6);
        let grid = VoxelGrid::new(&positions, cell);
        let stride = (self.len() / samples.max(1)).max(1);
        let mut d: Vec<f64> = (0..self.len())
            .step_by(stride)
            .filter_map(|i| {
                let nn = grid.knn(&positions[i], 2);
                nn.get(1).map(|&(_, d2)| d2.sqrt())
            })
            .collect();
        if d.is_empty() {
            return None;
        }
        d.sort_by(f64::total_cmp);
        Some(d[d.len() / 2])
    }
}

impl FromIterator<Point> for PointCloud {
    fn from_iter<T: IntoIterator<Item = Point>>(iter: T) -> Self {
        PointCloud::new(iter.into_iter().collect())
    }
}

impl<'a> IntoIterator for &'a PointCloud {
    type Item = &'a Point;
    type IntoIter = std::slice::Iter<'a, Point>;
    fn into_iter(self) -> Self::IntoIter {
        self.points.iter()
    }
}

pub(crate) fn bounds(points: &[Vector3<f64>]) -> (Vector3<f64>, Vector3<f64>) {
    let mut lo = Vector3::repeat(f64::INFINITY);
    let mut hi = Vector3::repeat(f64::NEG_INFINITY);
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (lo, hi)
}
