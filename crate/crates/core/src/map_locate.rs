//! Marker localization inside full 3D maps.
//!
//! Whole-map spherical projection fails when markers occlude each other or
//! sit far from the origin. Candidates are instead found geometrically
//! (gradient downsampling, clustering, OBB size/shape criteria), cut out of
//! the raw map with a buffer and re-centered one at a time on the plane
//! `x = 1 m`, where the ordinary image detector runs.

use log::debug;
use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use crate::cloud::{
    downsample_by_gradient, euclidean_cluster, fit_obb, OrientedBox, PointCloud, DEFAULT_GRADIENT_K,
    DEFAULT_GRADIENT_THRESHOLD,
};
use crate::geom::{Pose, Rotation};
use crate::image::{project, Grid, IntensityImage, ProjectionConfig};
use crate::marker::{
    adaptive_detect, corner_to_3d, estimate_marker_pose, MarkerObservation, MarkerSpec, QuadDetector, QuadParams,
    TagFamily, ThresholdSearch, DEFAULT_SCOPE, DEFAULT_STEP,
};

/// Fixed transform onto the intermediate plane `x = 1 m`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntermediatePlaneCfg {
    pub t_in: Pose,
}

impl Default for IntermediatePlaneCfg {
    fn default() -> Self {
        Self { t_in: Pose::from_translation(Vector3::new(1.0, 0.0, 0.0)) }
    }
}

/// Tolerances of the OBB criteria beyond the exact size/shape bounds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CriteriaCfg {
    /// Relative widening of the diagonal bounds.
    pub size_slack: f64,
    /// Range noise of the data. A noisy flat surface spans about ±4σ, so the
    /// height bound is `max(8σ, 2 t_M)`.
    pub sensor_sigma: f64,
}

impl Default for CriteriaCfg {
    fn default() -> Self {
        Self { size_slack: 0.0, sensor_sigma: 0.0 }
    }
}

/// Numerical floor on the height bound so perfectly flat clusters pass.
const HEIGHT_EPS: f64 = 1e-6;

/// Boxes compatible with a marker of `spec`: diagonal within
/// `[√(2a² + t²), √(4a² + t²)]`, footprint aspect within `[1/1.5, 1.5]`.
pub fn candidate_filter(boxes: &[OrientedBox], spec: &MarkerSpec) -> Vec<OrientedBox> {
    candidate_filter_with(boxes, spec, &CriteriaCfg::default())
}

pub fn candidate_filter_with(boxes: &[OrientedBox], spec: &MarkerSpec, cfg: &CriteriaCfg) -> Vec<OrientedBox> {
    let (a2, t2) = (spec.side * spec.side, spec.thickness * spec.thickness);
    let lo = (2.0 * a2 + t2).sqrt() * (1.0 - cfg.size_slack);
    let hi = (4.0 * a2 + t2).sqrt() * (1.0 + cfg.size_slack);
    let h_max = (8.0 * cfg.sensor_sigma).max(2.0 * spec.thickness) + HEIGHT_EPS;
    boxes
        .iter()
        .filter(|b| {
            let d = b.diagonal();
            let ratio = b.length() / b.width();
            (lo..=hi).contains(&d) && (1.0 / 1.5..=1.5).contains(&ratio) && b.height() <= h_max
        })
        .copied()
        .collect()
}

/// `p′ = T_in · (T_OBB⁻¹ · p)` for every point.
pub fn to_intermediate_plane(points: &PointCloud, t_obb: &Pose, cfg: &IntermediatePlaneCfg) -> PointCloud {
    points.transformed(&(cfg.t_in * t_obb.inverse()))
}

/// Inverse chain `p = T_OBB · (T_in⁻¹ · p′)`.
pub fn from_intermediate_plane(p: &Vector3<f64>, t_obb: &Pose, cfg: &IntermediatePlaneCfg) -> Vector3<f64> {
    t_obb.transform_point(&cfg.t_in.inverse().transform_point(p))
}

/// Box frame re-ordered so that its x axis is the box normal (shortest
/// extent) and the footprint spans y and z; after the intermediate-plane
/// shift the cluster faces the origin across the plane `x = 1`.
pub fn plane_facing_frame(obb: &OrientedBox) -> Pose {
    let m = obb.pose.rotation.matrix();
    let cols = [m.column(2).into_owned(), m.column(0).into_owned(), m.column(1).into_owned()];
    Pose::new(Rotation::from_matrix_unchecked(Matrix3::from_columns(&cols)), obb.pose.translation)
}

/// A box that passed the criteria, with the raw points of its buffered
/// extension.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateCluster {
    pub obb: OrientedBox,
    pub buffered: PointCloud,
    /// Index of the cluster among all clusters of the map.
    pub source: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocateConfig {
    pub gradient_k: usize,
    pub gradient_threshold: f64,
    /// `None` uses three times the estimated map spacing.
    pub cluster_tolerance: Option<f64>,
    pub cluster_min: usize,
    pub cluster_max: usize,
    pub criteria: CriteriaCfg,
    /// Multiplier on box length and width for buffered extraction.
    pub buffer_factor: f64,
    /// Smallest buffered height, as a fraction of the marker side.
    pub min_buffer_height: f64,
    pub plane: IntermediatePlaneCfg,
    /// Target image pixels per tag cell on the intermediate plane.
    pub px_per_cell: f64,
    /// Lower bound of the plane resolution in units of point spacing, so the
    /// image has no holes.
    pub spacing_factor: f64,
    pub scope: usize,
    pub step: f64,
    pub blur_sigma: Option<f64>,
    pub side_tolerance: f64,
    pub quad: QuadParams,
    /// Keep each candidate's intermediate-plane image in the report.
    pub keep_images: bool,
}

impl Default for LocateConfig {
    fn default() -> Self {
        Self {
            gradient_k: DEFAULT_GRADIENT_K,
            gradient_threshold: DEFAULT_GRADIENT_THRESHOLD,
            cluster_tolerance: None,
            cluster_min: 20,
            cluster_max: usize::MAX,
            // gradient neighborhoods widen the cluster past the tag edge
            criteria: CriteriaCfg { size_slack: 0.15, sensor_sigma: 0.0 },
            buffer_factor: 2.0,
            min_buffer_height: 0.1,
            plane: IntermediatePlaneCfg::default(),
            px_per_cell: 8.0,
            spacing_factor: 1.2,
            scope: DEFAULT_SCOPE,
            step: DEFAULT_STEP,
            blur_sigma: None,
            side_tolerance: 0.2,
            quad: QuadParams::default(),
            keep_images: false,
        }
    }
}

/// What happened to one candidate.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateReport {
    pub obb: OrientedBox,
    pub buffered_points: usize,
    /// Ids decoded on the intermediate plane.
    pub ids: Vec<usize>,
    /// Whether the decode came from the horizontally flipped image.
    pub flipped: bool,
    pub image: Option<IntensityImage>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LocateOutput {
    /// Map-frame observations, one per id, sorted by id.
    pub observations: Vec<MarkerObservation>,
    pub clusters: usize,
    pub candidates: Vec<CandidateReport>,
}

/// Clusters of high intensity-gradient points and their boxes.
pub fn find_candidate_boxes(map: &PointCloud, spec: &MarkerSpec, cfg: &LocateConfig) -> (usize, Vec<(usize, OrientedBox)>) {
    let strong = downsample_by_gradient(map, cfg.gradient_k, cfg.gradient_threshold);
    if strong.is_empty() {
        return (0, Vec::new());
    }
    let tol = cfg
        .cluster_tolerance
        .unwrap_or_else(|| 3.0 * map.estimate_spacing(256).unwrap_or(0.01));
    let clusters = euclidean_cluster(&strong, tol, cfg.cluster_min, cfg.cluster_max);
    debug!("{} of {} map points kept by gradient, {} clusters", strong.len(), map.len(), clusters.len());
    let mut out = Vec::new();
    for (k, c) in clusters.iter().enumerate() {
        if let Ok(obb) = fit_obb(c) {
            if !candidate_filter_with(&[obb], spec, &cfg.criteria).is_empty() {
                out.push((k, obb));
            }
        }
    }
    (clusters.len(), out)
}

/// Raw-map points inside the buffered box.
pub fn extract_buffered(map: &PointCloud, obb: &OrientedBox, spec: &MarkerSpec, cfg: &LocateConfig) -> PointCloud {
    let mut grown = obb.scaled([cfg.buffer_factor, cfg.buffer_factor, cfg.buffer_factor]);
    grown.extents[2] = grown.extents[2].max(cfg.min_buffer_height * spec.side);
    let to_box = grown.world_to_box();
    map.iter()
        .filter(|p| {
            let q = to_box.transform_point(&p.position);
            (0..3).all(|k| q[k].abs() <= 0.5 * grown.extents[k])
        })
        .copied()
        .collect()
}

/// Full pipeline. Observations carry `scan = 0` and map-frame poses.
pub fn locate_markers_in_map(map: &PointCloud, spec: &MarkerSpec, family: &TagFamily, cfg: &LocateConfig) -> LocateOutput {
    if map.is_empty() {
        return LocateOutput::default();
    }
    let (clusters, boxes) = find_candidate_boxes(map, spec, cfg);
    let candidates: Vec<CandidateCluster> = boxes
        .into_iter()
        .map(|(source, obb)| CandidateCluster { buffered: extract_buffered(map, &obb, spec, cfg), obb, source })
        .collect();
    debug!("{} candidates pass the box criteria", candidates.len());

    let results: Vec<(CandidateReport, Vec<MarkerObservation>)> =
        candidates.par_iter().map(|c| process_candidate(c, spec, family, cfg)).collect();

    let mut observations: Vec<MarkerObservation> = Vec::new();
    let mut reports = Vec::with_capacity(results.len());
    for (report, obs) in results {
        for o in obs {
            match observations.iter_mut().find(|e| e.id == o.id) {
                Some(e) if o.e_pp < e.e_pp => *e = o,
                Some(_) => {}
                None => observations.push(o),
            }
        }
        reports.push(report);
    }
    observations.sort_by_key(|o| o.id);
    LocateOutput { observations, clusters, candidates: reports }
}

fn plane_resolution(points: &PointCloud, spec: &MarkerSpec, family: &TagFamily, cfg: &LocateConfig) -> f64 {
    let cell = spec.side / (family.grid + 2 * family.border) as f64;
    let spacing = points.estimate_spacing(256).unwrap_or(0.0);
    (cell / cfg.px_per_cell).max(cfg.spacing_factor * spacing)
}

fn process_candidate(
    c: &CandidateCluster,
    spec: &MarkerSpec,
    family: &TagFamily,
    cfg: &LocateConfig,
) -> (CandidateReport, Vec<MarkerObservation>) {
    let mut report =
        CandidateReport { obb: c.obb, buffered_points: c.buffered.len(), ids: Vec::new(), flipped: false, image: None };
    if c.buffered.len() < 16 {
        return (report, Vec::new());
    }
    let frame = plane_facing_frame(&c.obb);
    let plane_pts = to_intermediate_plane(&c.buffered, &frame, &cfg.plane);
    let theta = plane_resolution(&plane_pts, spec, family, cfg);
    let img = match ProjectionConfig::fit(&plane_pts, theta, theta).and_then(|pc| project(&plane_pts, &pc)) {
        Ok(img) => img,
        Err(e) => {
            debug!("candidate {}: projection failed: {e}", c.source);
            return (report, Vec::new());
        }
    };
    let detector = QuadDetector { family: family.clone(), params: cfg.quad.clone() };
    let mut search = adaptive_detect(&img, &detector, cfg.scope, cfg.step, cfg.blur_sigma);
    if search.queue.is_empty() {
        let flipped = img.flip_horizontal();
        search = adaptive_detect(&flipped, &detector, cfg.scope, cfg.step, cfg.blur_sigma);
        report.flipped = !search.queue.is_empty();
        unflip(&mut search, img.width());
    }
    report.ids = search.ids();
    let obs = back_transform(&img, &search, &frame, spec, cfg);
    if cfg.keep_images {
        report.image = Some(img);
    }
    (report, obs)
}

fn unflip(search: &mut ThresholdSearch, width: usize) {
    let w = (width - 1) as f64;
    for q in &mut search.queue {
        for c in &mut q.detection.corners_px {
            c.x = w - c.x;
        }
    }
}

fn back_transform(
    img: &IntensityImage,
    search: &ThresholdSearch,
    frame: &Pose,
    spec: &MarkerSpec,
    cfg: &LocateConfig,
) -> Vec<MarkerObservation> {
    let mut out = Vec::new();
    'queue: for q in &search.queue {
        let det = &q.detection;
        let mut corners = [Vector3::zeros(); 4];
        for s in 0..4 {
            match corner_to_3d(img, &det.corners_px[s]) {
                Ok(c) => corners[s] = from_intermediate_plane(&c.position, frame, &cfg.plane),
                Err(e) => {
                    debug!("marker {}: corner {s} not recovered on the plane: {e}", det.id);
                    continue 'queue;
                }
            }
        }
        if !spec.sides_plausible(&corners, cfg.side_tolerance) {
            debug!("marker {}: rejected by side-length check", det.id);
            continue;
        }
        if let Ok((pose, e_pp)) = estimate_marker_pose(&corners, spec) {
            out.push(MarkerObservation {
                id: det.id,
                scan: 0,
                corners_px: det.corners_px,
                corners_3d: corners,
                pose,
                e_pp,
                lambda: q.lambda,
            });
        }
    }
    out
}
