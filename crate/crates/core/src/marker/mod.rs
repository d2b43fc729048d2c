//! Square fiducial tags: dictionary, 2D detection on binarized intensity
//! images, adaptive threshold search, 3D corner recovery and per-marker pose.

mod adaptive;
mod corner3d;
mod detect;
mod family;
pub mod render;

pub use adaptive::{adaptive_detect, detect_at, QueuedDetection, ThresholdSearch, DEFAULT_SCOPE, DEFAULT_STEP};
pub use corner3d::{bisector_point, corner_to_3d, Corner3D, CornerSource, SYMMETRIC_WINDOW};
pub use detect::{homography, Detection2D, Detector2D, QuadDetector, QuadParams};
pub use family::{dihedral, mirror, rotate90, TagFamily, BUILTIN_FAMILY, BUILTIN_SEED};

use log::debug;
use nalgebra::{Vector2, Vector3};
use thiserror::Error;

use crate::cloud::PointCloud;
use crate::geom::{align_svd, CorrespondenceSet, GeomError, Pose};
use crate::image::{project, ImageError, IntensityImage, ProjectionConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarkerError {
    #[error("tag family format: {0}")]
    FamilyFormat(String),
    #[error("no observed symmetric pixel pair around ({u}, {v})")]
    NoSymmetricPair { u: usize, v: usize },
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Geom(#[from] GeomError),
}

/// Physical marker: side length `a` and sheet thickness `t_M`, meters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MarkerSpec {
    pub side: f64,
    pub thickness: f64,
}

impl MarkerSpec {
    pub fn new(side: f64, thickness: f64) -> Self {
        assert!(side > 0.0 && thickness >= 0.0, "invalid marker size");
        Self { side, thickness }
    }

    /// Corners in the marker frame, counter-clockwise from `(−a/2, −a/2)`.
    pub fn canonical_corners(&self) -> [Vector3<f64>; 4] {
        let h = 0.5 * self.side;
        [Vector3::new(-h, -h, 0.0), Vector3::new(h, -h, 0.0), Vector3::new(h, h, 0.0), Vector3::new(-h, h, 0.0)]
    }

    /// Whether all four sides are within `tol` (relative) of `a`.
    pub fn sides_plausible(&self, corners: &[Vector3<f64>; 4], tol: f64) -> bool {
        (0..4).all(|k| ((corners[(k + 1) % 4] - corners[k]).norm() - self.side).abs() <= tol * self.side)
    }
}

/// A marker seen in one scan, in that scan's frame.
#[derive(Clone, Debug, PartialEq)]
pub struct MarkerObservation {
    pub id: usize,
    pub scan: usize,
    pub corners_px: [Vector2<f64>; 4],
    pub corners_3d: [Vector3<f64>; 4],
    /// Marker frame → scan frame.
    pub pose: Pose,
    pub e_pp: f64,
    /// Threshold the 2D detection came from (NaN when not image-based).
    pub lambda: f64,
}

/// Closed-form marker pose from its four observed corners.
pub fn estimate_marker_pose(corners: &[Vector3<f64>; 4], spec: &MarkerSpec) -> Result<(Pose, f64), GeomError> {
    let set = CorrespondenceSet::new(spec.canonical_corners().to_vec(), corners.to_vec());
    align_svd(&set)
}

/// Settings for detection in a single scan.
#[derive(Clone, Debug, PartialEq)]
pub struct ScanDetectConfig {
    /// Projection resolutions, radians per pixel.
    pub theta_a: f64,
    pub theta_i: f64,
    pub scope: usize,
    pub step: f64,
    /// Optional blur (pixels) of each binarized image.
    pub blur_sigma: Option<f64>,
    /// Relative side-length tolerance for accepting an observation.
    pub side_tolerance: f64,
    pub quad: QuadParams,
}

impl Default for ScanDetectConfig {
    fn default() -> Self {
        Self {
            theta_a: 0.1f64.to_radians(),
            theta_i: 0.1f64.to_radians(),
            scope: DEFAULT_SCOPE,
            step: DEFAULT_STEP,
            blur_sigma: None,
            side_tolerance: 0.2,
            quad: QuadParams::default(),
        }
    }
}

/// Observations for every detection of a threshold search on `img`.
pub fn observations_from_search(
    img: &IntensityImage,
    search: &ThresholdSearch,
    scan: usize,
    spec: &MarkerSpec,
    side_tolerance: f64,
) -> Vec<MarkerObservation> {
    let mut out = Vec::new();
    for q in &search.queue {
        let det = &q.detection;
        let mut corners = [Vector3::zeros(); 4];
        let mut ok = true;
        for s in 0..4 {
            match corner_to_3d(img, &det.corners_px[s]) {
                Ok(c) => corners[s] = c.position,
                Err(e) => {
                    debug!("scan {scan}: marker {} corner {s} not recovered: {e}", det.id);
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            continue;
        }
        if !spec.sides_plausible(&corners, side_tolerance) {
            debug!("scan {scan}: marker {} rejected by side-length check", det.id);
            continue;
        }
        match estimate_marker_pose(&corners, spec) {
            Ok((pose, e_pp)) => out.push(MarkerObservation {
                id: det.id,
                scan,
                corners_px: det.corners_px,
                corners_3d: corners,
                pose,
                e_pp,
                lambda: q.lambda,
            }),
            Err(e) => debug!("scan {scan}: marker {} pose failed: {e}", det.id),
        }
    }
    out
}

/// Project → adaptive threshold search → 3D corners → marker poses.
pub fn detect_in_scan(
    cloud: &PointCloud,
    scan: usize,
    cfg: &ScanDetectConfig,
    family: &TagFamily,
    spec: &MarkerSpec,
) -> Result<Vec<MarkerObservation>, MarkerError> {
    if cloud.is_empty() {
        return Err(ImageError::EmptyCloud.into());
    }
    let pcfg = ProjectionConfig::fit(cloud, cfg.theta_a, cfg.theta_i)?;
    let img = project(cloud, &pcfg)?;
    let detector = QuadDetector { family: family.clone(), params: cfg.quad.clone() };
    let search = adaptive_detect(&img, &detector, cfg.scope, cfg.step, cfg.blur_sigma);
    debug!("scan {scan}: {} ids queued, lambda* = {}", search.queue.len(), search.lambda_star);
    Ok(observations_from_search(&img, &search, scan, spec, cfg.side_tolerance))
}
