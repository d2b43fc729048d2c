//! Synthetic LiDAR scenes with ground truth: textured planes, two sampling
//! patterns, noise, multi-viewpoint datasets and direct marker observations.

pub mod presets;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloud::{Point, PointCloud};
use crate::geom::{Pose, Rotation};
use crate::marker::{estimate_marker_pose, MarkerObservation, MarkerSpec, TagFamily};
use crate::metrics::{pairwise_overlap, PairOverlap, DEFAULT_OVERLAP_TAU};

pub const WHITE_LEVEL: f64 = 220.0;
pub const BLACK_LEVEL: f64 = 30.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("marker {0} refers to missing plane {1}")]
    MissingPlane(usize, usize),
    #[error("marker {0} extends beyond its host plane")]
    MarkerOutsidePlane(usize),
    #[error("marker id {0} is not in the tag family")]
    UnknownId(usize),
    #[error("invalid sensor model: {0}")]
    InvalidSensor(&'static str),
}

/// Rectangle `[−w/2, w/2] × [−h/2, h/2]` in the `z = 0` plane of `pose`
/// (plane → world). The printed face looks along `+z`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub pose: Pose,
    pub width: f64,
    pub height: f64,
    pub intensity: f64,
}

impl Plane {
    pub fn normal(&self) -> Vector3<f64> {
        self.pose.rotation.rotate(&Vector3::z())
    }

    pub fn contains_local(&self, x: f64, y: f64) -> bool {
        x.abs() <= 0.5 * self.width && y.abs() <= 0.5 * self.height
    }
}

/// A printed tag on the front face of a plane.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkerPlacement {
    pub id: usize,
    pub plane: usize,
    /// Tag center in plane coordinates.
    pub center: [f64; 2],
    /// In-plane rotation, radians.
    pub angle: f64,
    pub side: f64,
    /// `[black, white]` override of the scene levels.
    #[serde(default)]
    pub levels: Option<[f64; 2]>,
}

impl MarkerPlacement {
    /// Marker frame in plane coordinates.
    pub fn pose_on_plane(&self) -> Pose {
        Pose::new(Rotation::rot_z(self.angle), Vector3::new(self.center[0], self.center[1], 0.0))
    }
}

fn default_white() -> f64 {
    WHITE_LEVEL
}

fn default_black() -> f64 {
    BLACK_LEVEL
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub planes: Vec<Plane>,
    #[serde(default)]
    pub markers: Vec<MarkerPlacement>,
    #[serde(default = "default_white")]
    pub white: f64,
    #[serde(default = "default_black")]
    pub black: f64,
}

/// World-frame ground truth of one marker.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkerTruth {
    pub id: usize,
    pub side: f64,
    pub pose: Pose,
    pub corners: [[f64; 3]; 4],
}

impl Scene {
    pub fn new(planes: Vec<Plane>, markers: Vec<MarkerPlacement>) -> Self {
        Self { planes, markers, white: WHITE_LEVEL, black: BLACK_LEVEL }
    }

    pub fn validate(&self, family: &TagFamily) -> Result<(), SceneError> {
        for (k, m) in self.markers.iter().enumerate() {
            let plane = self.planes.get(m.plane).ok_or(SceneError::MissingPlane(k, m.plane))?;
            if m.id >= family.len() {
                return Err(SceneError::UnknownId(m.id));
            }
            let local = m.pose_on_plane();
            let inside = MarkerSpec::new(m.side, 0.0).canonical_corners().iter().all(|c| {
                let p = local.transform_point(c);
                plane.contains_local(p.x, p.y)
            });
            if !inside {
                return Err(SceneError::MarkerOutsidePlane(m.id));
            }
        }
        Ok(())
    }

    /// Marker frame → world.
    pub fn marker_pose(&self, k: usize) -> Pose {
        let m = &self.markers[k];
        self.planes[m.plane].pose * m.pose_on_plane()
    }

    pub fn marker_corners(&self, k: usize) -> [Vector3<f64>; 4] {
        let pose = self.marker_pose(k);
        MarkerSpec::new(self.markers[k].side, 0.0).canonical_corners().map(|c| pose.transform_point(&c))
    }

    pub fn marker_truth(&self) -> Vec<MarkerTruth> {
        (0..self.markers.len())
            .map(|k| MarkerTruth {
                id: self.markers[k].id,
                side: self.markers[k].side,
                pose: self.marker_pose(k),
                corners: self.marker_corners(k).map(|c| [c.x, c.y, c.z]),
            })
            .collect()
    }

    /// Same geometry, no printed tags.
    pub fn without_markers(&self) -> Scene {
        Scene { markers: Vec::new(), ..self.clone() }
    }

    /// Intensity of the front face of `plane` at plane coordinates `(x, y)`.
    pub fn surface_intensity(&self, family: &TagFamily, plane: usize, x: f64, y: f64) -> f64 {
        for m in self.markers.iter().filter(|m| m.plane == plane) {
            let q = m.pose_on_plane().inverse().transform_point(&Vector3::new(x, y, 0.0));
            if let Some(white) = family.white_at(m.id, m.side, q.x, q.y) {
                let [black, white_level] = m.levels.unwrap_or([self.black, self.white]);
                return if white { white_level } else { black };
            }
        }
        self.planes[plane].intensity
    }

    /// Nearest hit of a world ray: (plane index, distance, front-facing).
    pub fn cast(&self, origin: &Vector3<f64>, dir: &Vector3<f64>, max_range: f64) -> Option<(usize, f64, bool)> {
        let mut best: Option<(usize, f64, bool)> = None;
        for (k, p) in self.planes.iter().enumerate() {
            let n = p.normal();
            let den = n.dot(dir);
            if den.abs() < 1e-12 {
                continue;
            }
            let t = n.dot(&(p.pose.translation - origin)) / den;
            if !(t > 1e-9 && t <= max_range) || best.is_some_and(|b| t >= b.1) {
                continue;
            }
            let local = p.pose.inverse().transform_point(&(origin + dir * t));
            if p.contains_local(local.x, local.y) {
                best = Some((k, t, den < 0.0));
            }
        }
        best
    }
}

/// Angular sampling pattern of a sensor, in its own frame (x forward, z up).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Pattern {
    /// Regular grid at exact multiples of the resolutions.
    Mechanical { theta_h: f64, theta_v: f64, fov_h: [f64; 2], fov_v: [f64; 2] },
    /// Rose curve `r = R cos(k t)` swept in (azimuth, inclination); longer
    /// dwell fills more of the disk.
    SolidState { half_angle: f64, petal_ratio: f64, samples_per_turn: usize, dwell_turns: f64 },
}

impl Pattern {
    /// Ray directions in the sensor frame, in firing order.
    pub fn directions(&self) -> Vec<Vector3<f64>> {
        let dir = |az: f64, inc: f64| Vector3::new(inc.cos() * az.cos(), inc.cos() * az.sin(), inc.sin());
        match *self {
            Pattern::Mechanical { theta_h, theta_v, fov_h, fov_v } => {
                let (h0, h1) = ((fov_h[0] / theta_h).ceil() as i64, (fov_h[1] / theta_h).floor() as i64);
                let (v0, v1) = ((fov_v[0] / theta_v).ceil() as i64, (fov_v[1] / theta_v).floor() as i64);
                let mut out = Vec::with_capacity(((h1 - h0 + 1) * (v1 - v0 + 1)).max(0) as usize);
                for j in v0..=v1 {
                    for k in h0..=h1 {
                        out.push(dir(k as f64 * theta_h, j as f64 * theta_v));
                    }
                }
                out
            }
            Pattern::SolidState { half_angle, petal_ratio, samples_per_turn, dwell_turns } => {
                let n = (samples_per_turn as f64 * dwell_turns).round() as usize;
                let dt = std::f64::consts::TAU / samples_per_turn as f64;
                (0..n)
                    .map(|i| {
                        let t = i as f64 * dt;
                        let r = half_angle * (petal_ratio * t).cos();
                        dir(r * t.cos(), r * t.sin())
                    })
                    .collect()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorModel {
    pub pattern: Pattern,
    #[serde(default)]
    pub range_sigma: f64,
    #[serde(default)]
    pub intensity_sigma: f64,
    pub max_range: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SensorModel {
    pub fn validate(&self) -> Result<(), SceneError> {
        match self.pattern {
            Pattern::Mechanical { theta_h, theta_v, fov_h, fov_v } => {
                if !(theta_h > 0.0 && theta_v > 0.0) {
                    return Err(SceneError::InvalidSensor("resolutions must be positive"));
                }
                if fov_h[0] > fov_h[1] || fov_v[0] > fov_v[1] {
                    return Err(SceneError::InvalidSensor("field of view bounds are reversed"));
                }
            }
            Pattern::SolidState { half_angle, samples_per_turn, dwell_turns, .. } => {
                if !(half_angle > 0.0) || samples_per_turn == 0 || !(dwell_turns > 0.0) {
                    return Err(SceneError::InvalidSensor("solid-state pattern parameters must be positive"));
                }
            }
        }
        if self.range_sigma < 0.0 || self.intensity_sigma < 0.0 || !(self.max_range > 0.0) {
            return Err(SceneError::InvalidSensor("noise must be non-negative and max range positive"));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

/// Casts every pattern ray from `sensor_pose` (sensor → world). Points are
/// returned in the sensor frame. Both noise draws happen for every hit in
/// firing order, so tags change intensities only.
pub fn sample_scan(scene: &Scene, family: &TagFamily, sensor_pose: &Pose, model: &SensorModel) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
    let origin = sensor_pose.translation;
    let mut out = Vec::new();
    for d in model.pattern.directions() {
        let wd = sensor_pose.rotation.rotate(&d);
        let Some((k, t, front)) = scene.cast(&origin, &wd, model.max_range) else { continue };
        let zr: f64 = rng.sample(StandardNormal);
        let zi: f64 = rng.sample(StandardNormal);
        let base = if front {
            let local = scene.planes[k].pose.inverse().transform_point(&(origin + wd * t));
            scene.surface_intensity(family, k, local.x, local.y)
        } else {
            scene.planes[k].intensity
        };
        let r = t + model.range_sigma * zr;
        let intensity = (base + model.intensity_sigma * zi).clamp(0.0, 255.0);
        out.push(Point::from_vec(d * r, intensity));
    }
    PointCloud::new(out)
}

/// Scans plus ground truth for a set of viewpoints.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    /// Each scan in its own sensor frame.
    pub scans: Vec<PointCloud>,
    /// Sensor → world.
    pub poses: Vec<Pose>,
    pub markers: Vec<MarkerTruth>,
    pub overlaps: Vec<PairOverlap>,
}

impl Dataset {
    /// Pose of scan `j` in the frame of scan `i`.
    pub fn relative_pose(&self, i: usize, j: usize) -> Pose {
        self.poses[i].inverse() * self.poses[j]
    }
}

/// Samples every viewpoint; viewpoint `i` uses seed `model.seed + i`.
pub fn make_dataset(scene: &Scene, family: &TagFamily, viewpoints: &[Pose], model: &SensorModel) -> Dataset {
    assert!(!viewpoints.is_empty(), "need at least one viewpoint");
    let scans: Vec<PointCloud> = viewpoints
        .iter()
        .enumerate()
        .map(|(i, vp)| sample_scan(scene, family, vp, &model.with_seed(model.seed.wrapping_add(i as u64))))
        .collect();
    let world: Vec<PointCloud> = scans.iter().zip(viewpoints).map(|(s, p)| s.transformed(p)).collect();
    Dataset {
        overlaps: pairwise_overlap(&world, DEFAULT_OVERLAP_TAU),
        scans,
        poses: viewpoints.to_vec(),
        markers: scene.marker_truth(),
    }
}

/// Dense world-frame map: every plane sampled on a `spacing` grid with
/// front-face intensities, optionally jittered.
pub fn sample_map(
    scene: &Scene,
    family: &TagFamily,
    spacing: f64,
    position_sigma: f64,
    intensity_sigma: f64,
    seed: u64,
) -> PointCloud {
    assert!(spacing > 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (k, p) in scene.planes.iter().enumerate() {
        let nx = (p.width / spacing).floor() as usize + 1;
        let ny = (p.height / spacing).floor() as usize + 1;
        let (x0, y0) = (-0.5 * (nx - 1) as f64 * spacing, -0.5 * (ny - 1) as f64 * spacing);
        for j in 0..ny {
            for i in 0..nx {
                let (x, y) = (x0 + i as f64 * spacing, y0 + j as f64 * spacing);
                let mut pos = p.pose.transform_point(&Vector3::new(x, y, 0.0));
                let noise = Vector3::new(
                    rng.sample::<f64, _>(StandardNormal),
                    rng.sample::<f64, _>(StandardNormal),
                    rng.sample::<f64, _>(StandardNormal),
                );
                pos += noise * position_sigma;
                let zi: f64 = rng.sample(StandardNormal);
                let intensity = (scene.surface_intensity(family, k, x, y) + intensity_sigma * zi).clamp(0.0, 255.0);
                out.push(Point::from_vec(pos, intensity));
            }
        }
    }
    PointCloud::new(out)
}

/// Direct corner observations, bypassing rasterization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationModel {
    /// Isotropic noise on each corner, meters.
    pub corner_sigma: f64,
    pub max_range: f64,
    /// Largest angle between the marker normal and the line of sight.
    pub max_incidence: f64,
}

impl Default for ObservationModel {
    fn default() -> Self {
        Self { corner_sigma: 0.0, max_range: 30.0, max_incidence: 70f64.to_radians() }
    }
}

/// Markers visible from `sensor_pose` with noisy sensor-frame corners, in
/// scene order. A marker is visible when its front faces the sensor within
/// the incidence limit, it is in range, and no other plane blocks its
/// center or corners.
pub fn observe_markers(
    scene: &Scene,
    sensor_pose: &Pose,
    model: &ObservationModel,
    rng: &mut impl Rng,
) -> Vec<(usize, [Vector3<f64>; 4])> {
    let origin = sensor_pose.translation;
    let to_sensor = sensor_pose.inverse();
    let mut out = Vec::new();
    for k in 0..scene.markers.len() {
        let m = &scene.markers[k];
        let pose = scene.marker_pose(k);
        let normal = pose.rotation.rotate(&Vector3::z());
        let center = pose.translation;
        let sight = origin - center;
        let dist = sight.norm();
        if dist > model.max_range || normal.dot(&sight) <= dist * model.max_incidence.cos() {
            continue;
        }
        let corners = scene.marker_corners(k);
        let visible = std::iter::once(center).chain(corners).all(|p| {
            let d = p - origin;
            let t = d.norm();
            match scene.cast(&origin, &(d / t), model.max_range) {
                Some((plane, hit, front)) => plane == m.plane && front && (hit - t).abs() < 1e-6,
                None => false,
            }
        });
        if !visible {
            continue;
        }
        let noisy = corners.map(|c| {
            let n = Vector3::new(
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
            );
            to_sensor.transform_point(&c) + n * model.corner_sigma
        });
        out.push((m.id, noisy));
    }
    out
}

/// Marker observations per viewpoint from [`observe_markers`]; viewpoint
/// `i` draws from seed `seed + i`.
pub fn synthesize_observations(
    scene: &Scene,
    viewpoints: &[Pose],
    model: &ObservationModel,
    seed: u64,
) -> Vec<Vec<MarkerObservation>> {
    viewpoints
        .iter()
        .enumerate()
        .map(|(i, vp)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            observe_markers(scene, vp, model, &mut rng)
                .into_iter()
                .filter_map(|(id, corners)| {
                    let side = scene.markers.iter().find(|m| m.id == id)?.side;
                    let (pose, e_pp) = estimate_marker_pose(&corners, &MarkerSpec::new(side, 0.0)).ok()?;
                    Some(MarkerObservation {
                        id,
                        scan: i,
                        corners_px: [nalgebra::Vector2::zeros(); 4],
                        corners_3d: corners,
                        pose,
                        e_pp,
                        lambda: f64::NAN,
                    })
                })
                .collect()
        })
        .collect()
}

/// Sensor pose at `eye` whose forward axis points at `target`, z up.
pub fn look_at(eye: Vector3<f64>, target: Vector3<f64>) -> Pose {
    let x = (target - eye).normalize();
    let up = if x.cross(&Vector3::z()).norm() < 1e-9 { Vector3::y() } else { Vector3::z() };
    let y = up.cross(&x).normalize();
    let z = x.cross(&y);
    Pose::new(Rotation::from_matrix_unchecked(nalgebra::Matrix3::from_columns(&[x, y, z])), eye)
}

/// Scene plus acquisition setup, as stored in scene files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    pub scene: Scene,
    pub sensor: SensorModel,
    pub viewpoints: Vec<Pose>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wall(d: f64) -> Scene {
        // plane x = d, facing the origin
        let pose = look_at(Vector3::new(d, 0.0, 0.0), Vector3::new(2.0 * d, 0.0, 0.0));
        let pose = Pose::new(pose.rotation * Rotation::rot_y(-std::f64::consts::FRAC_PI_2), pose.translation);
        Scene::new(vec![Plane { pose, width: 4.0, height: 3.0, intensity: 120.0 }], vec![])
    }

    fn grid_sensor() -> SensorModel {
        SensorModel {
            pattern: Pattern::Mechanical {
                theta_h: 0.5f64.to_radians(),
                theta_v: 0.5f64.to_radians(),
                fov_h: [-0.4, 0.4],
                fov_v: [-0.3, 0.3],
            },
            range_sigma: 0.0,
            intensity_sigma: 0.0,
            max_range: 50.0,
            seed: 1,
        }
    }

    #[test]
    fn wall_normal_faces_origin() {
        let s = wall(5.0);
        assert!((s.planes[0].normal() - Vector3::new(-1.0, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn ranges_match_ray_plane_intersection() {
        let s = wall(5.0);
        let f = TagFamily::builtin();
        let scan = sample_scan(&s, &f, &Pose::identity(), &grid_sensor());
        assert!(!scan.is_empty());
        for p in scan.iter() {
            let d = p.position.normalize();
            assert!((p.position.norm() - 5.0 / d.x).abs() < 1e-9);
            assert_eq!(p.intensity, 120.0);
        }
    }

    #[test]
    fn facing_away_is_empty() {
        let s = wall(5.0);
        let back = Pose::from_rotation(Rotation::rot_z(std::f64::consts::PI));
        assert!(sample_scan(&s, &TagFamily::builtin(), &back, &grid_sensor()).is_empty());
    }

    #[test]
    fn marker_cells_report_levels() {
        let f = TagFamily::builtin();
        let mut s = wall(4.0);
        s.markers.push(MarkerPlacement { id: 5, plane: 0, center: [0.3, -0.2], angle: 0.4, side: 0.6, levels: None });
        s.validate(&f).unwrap();
        let scan = sample_scan(&s, &f, &Pose::identity(), &grid_sensor());
        let mpose = s.marker_pose(0);
        let mut seen = [0usize; 2];
        for p in scan.iter() {
            let q = mpose.inverse().transform_point(&p.position);
            assert!(q.z.abs() < 1e-9);
            match f.white_at(5, 0.6, q.x, q.y) {
                Some(true) => {
                    assert_eq!(p.intensity, 220.0);
                    seen[1] += 1;
                }
                Some(false) => {
                    assert_eq!(p.intensity, 30.0);
                    seen[0] += 1;
                }
                None => assert_eq!(p.intensity, 120.0),
            }
        }
        assert!(seen[0] > 10 && seen[1] > 10);
    }

    #[test]
    fn tags_change_intensity_only() {
        let f = TagFamily::builtin();
        let mut s = wall(4.0);
        s.markers.push(MarkerPlacement { id: 2, plane: 0, center: [0.0, 0.0], angle: 0.0, side: 0.7, levels: None });
        let mut model = grid_sensor();
        model.range_sigma = 0.01;
        model.intensity_sigma = 3.0;
        let a = sample_scan(&s, &f, &Pose::identity(), &model);
        let b = sample_scan(&s.without_markers(), &f, &Pose::identity(), &model);
        assert_eq!(a.len(), b.len());
        assert!(a.iter().zip(b.iter()).all(|(p, q)| p.position == q.position));
        assert!(a.iter().zip(b.iter()).any(|(p, q)| p.intensity != q.intensity));
        // same seed, same bytes
        assert_eq!(a, sample_scan(&s, &f, &Pose::identity(), &model));
    }

    #[test]
    fn validation_errors() {
        let f = TagFamily::builtin();
        let mut s = wall(4.0);
        s.markers.push(MarkerPlacement { id: 1, plane: 0, center: [1.9, 0.0], angle: 0.0, side: 0.5, levels: None });
        assert_eq!(s.validate(&f), Err(SceneError::MarkerOutsidePlane(1)));
        s.markers[0].plane = 3;
        assert_eq!(s.validate(&f), Err(SceneError::MissingPlane(0, 3)));
        s.markers[0] = MarkerPlacement { id: 99, plane: 0, center: [0.0, 0.0], angle: 0.0, side: 0.5, levels: None };
        assert_eq!(s.validate(&f), Err(SceneError::UnknownId(99)));
    }

    #[test]
    fn dataset_bookkeeping() {
        let s = wall(5.0);
        let f = TagFamily::builtin();
        let a = Pose::identity();
        let t = Pose::new(Rotation::rot_z(0.05), Vector3::new(0.3, -0.2, 0.1));
        let ds = make_dataset(&s, &f, &[a, t], &grid_sensor());
        assert_eq!(ds.scans.len(), 2);
        assert_eq!(ds.relative_pose(0, 1), t);
        let one = make_dataset(&s, &f, &[t], &grid_sensor());
        assert_eq!(one.poses, vec![t]);
        assert!(one.overlaps.is_empty());
    }

    #[test]
    fn solid_state_leaves_spots() {
        let pattern = Pattern::SolidState {
            half_angle: 0.3,
            petal_ratio: 7.31,
            samples_per_turn: 2000,
            dwell_turns: 10.0,
        };
        let dirs = pattern.directions();
        assert_eq!(dirs.len(), 20000);
        assert!(dirs.iter().all(|d| d.x > 0.0 && d.y.atan2(d.x).abs() <= 0.3 + 1e-12));
    }

    #[test]
    fn look_at_points_forward() {
        let p = look_at(Vector3::new(3.0, 3.0, 0.5), Vector3::zeros());
        let fwd = p.rotation.rotate(&Vector3::x());
        assert!((fwd - Vector3::new(-3.0, -3.0, -0.5).normalize()).norm() < 1e-12);
        assert!((p.rotation.matrix().determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn observations_respect_visibility() {
        let f = TagFamily::builtin();
        let mut s = wall(4.0);
        s.markers.push(MarkerPlacement { id: 3, plane: 0, center: [0.0, 0.0], angle: 0.0, side: 0.5, levels: None });
        s.validate(&f).unwrap();
        let obs = synthesize_observations(&s, &[Pose::identity()], &ObservationModel::default(), 1);
        assert_eq!(obs[0].len(), 1);
        let truth = s.marker_pose(0);
        assert!(crate::geom::se3_ominus(&obs[0][0].pose, &truth).norm() < 1e-9);
        // behind the wall nothing is seen
        let behind = look_at(Vector3::new(8.0, 0.0, 0.0), Vector3::new(4.0, 0.0, 0.0));
        let obs = synthesize_observations(&s, &[behind], &ObservationModel::default(), 1);
        assert!(obs[0].is_empty());
    }
}
