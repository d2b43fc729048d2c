//! Marker-based multiview registration.
//!
//! Scans and markers form a bipartite graph weighted by each observation's
//! point-to-point error. Shortest paths from the anchor scan give initial
//! scan poses, which seed a factor graph over scan poses, marker poses and
//! corner positions solved with Levenberg–Marquardt.

mod factors;
mod graph;

pub use factors::{
    adjoint, optimize, Factor, FactorGraphSpec, LmOptions, LmOutcome, NoiseModel, Value, VariableKind,
};
pub use graph::{build_first_level, initial_poses, shortest_paths, Edge, FirstLevelGraph, InitialPoses, WEIGHT_FLOOR};

use log::{debug, info, warn};
use nalgebra::Vector3;
use rayon::prelude::*;
use thiserror::Error;

use crate::cloud::PointCloud;
use crate::geom::Pose;
use crate::marker::{detect_in_scan, MarkerError, MarkerObservation, MarkerSpec, ScanDetectConfig, TagFamily};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegistrationError {
    #[error("no marker observations in any scan")]
    NoObservations,
    #[error("anchor {0} is out of range for {1} scans")]
    BadAnchor(usize, usize),
    #[error("registration needs at least 2 scans, got {0}")]
    TooFewScans(usize),
    #[error("no initial pose for scan {0}")]
    MissingInitial(usize),
    #[error("ill-posed factor graph: {0}")]
    IllPosedGraph(&'static str),
    #[error("cost is not finite; check covariances and initial values")]
    NonFiniteCost,
    #[error("noise standard deviations must be positive and finite")]
    BadCovariance,
    #[error("scans not connected to the anchor: {0:?}")]
    DisconnectedInput(Vec<usize>),
    #[error("scan {scan}: {source}")]
    Detection { scan: usize, source: MarkerError },
}

/// Deduplicated observations of reachable scans, keyed by (scan, id), with
/// the lowest `e_pp` kept.
fn usable_observations(observations: &[Vec<MarkerObservation>], initials: &[Option<Pose>]) -> Vec<(usize, MarkerObservation)> {
    let mut out: Vec<(usize, MarkerObservation)> = Vec::new();
    for (scan, obs) in observations.iter().enumerate() {
        if initials.get(scan).copied().flatten().is_none() {
            continue;
        }
        for o in obs {
            match out.iter_mut().find(|(s, e)| *s == scan && e.id == o.id) {
                Some((_, e)) if o.e_pp < e.e_pp => *e = o.clone(),
                Some(_) => {}
                None => out.push((scan, o.clone())),
            }
        }
    }
    out
}

/// Factor graph over reachable scans (`initials[i]` is `Some`).
///
/// Variables: scan poses in scan order, marker poses by ascending id, then
/// four corners per marker. Factors: one marker-pose and four scan-corner
/// factors per observation, four canonical-corner factors per marker, a
/// prior on the anchor and a relative factor from the anchor to every other
/// scan, measured by the initial poses.
pub fn build_factor_graph(
    observations: &[Vec<MarkerObservation>],
    initials: &[Option<Pose>],
    anchor: usize,
    spec: &MarkerSpec,
    noise: &NoiseModel,
) -> Result<FactorGraphSpec, RegistrationError> {
    let t_anchor = initials.get(anchor).copied().flatten().ok_or(RegistrationError::MissingInitial(anchor))?;
    let usable = usable_observations(observations, initials);
    let mut kinds = Vec::new();
    let mut initial = Vec::new();
    let mut scan_var = vec![None; initials.len()];
    for (scan, pose) in initials.iter().enumerate() {
        if let Some(p) = pose {
            scan_var[scan] = Some(kinds.len());
            kinds.push(VariableKind::ScanPose(scan));
            initial.push(Value::Pose(*p));
        }
    }
    let mut ids: Vec<usize> = usable.iter().map(|(_, o)| o.id).collect();
    ids.sort_unstable();
    ids.dedup();
    let canonical = spec.canonical_corners();
    let mut marker_var = Vec::with_capacity(ids.len());
    let mut marker_init = Vec::with_capacity(ids.len());
    for &id in &ids {
        let (scan, best) = usable
            .iter()
            .filter(|(_, o)| o.id == id)
            .min_by(|a, b| a.1.e_pp.total_cmp(&b.1.e_pp).then(a.0.cmp(&b.0)))
            .expect("id comes from usable");
        let t = initials[*scan].expect("usable scans are reachable") * best.pose;
        marker_var.push(kinds.len());
        marker_init.push(t);
        kinds.push(VariableKind::MarkerPose(id));
        initial.push(Value::Pose(t));
    }
    let mut corner_var = Vec::with_capacity(ids.len());
    for (m, &id) in ids.iter().enumerate() {
        let first = kinds.len();
        for (s, c) in canonical.iter().enumerate() {
            kinds.push(VariableKind::Corner { marker: id, corner: s });
            initial.push(Value::Point(marker_init[m].transform_point(c)));
        }
        corner_var.push(first);
    }

    let mut factors = Vec::new();
    for (scan, o) in &usable {
        let m = ids.binary_search(&o.id).expect("id collected");
        let sv = scan_var[*scan].expect("usable scans are reachable");
        factors.push(Factor::MarkerPose { scan: sv, marker: marker_var[m], z: o.pose });
        for s in 0..4 {
            factors.push(Factor::ScanCorner { scan: sv, point: corner_var[m] + s, z: o.corners_3d[s] });
        }
    }
    for m in 0..ids.len() {
        for (s, c) in canonical.iter().enumerate() {
            factors.push(Factor::LocalCorner { marker: marker_var[m], point: corner_var[m] + s, z: *c });
        }
    }
    let av = scan_var[anchor].expect("anchor has an initial pose");
    factors.push(Factor::Prior { scan: av, z: Pose::identity() });
    for (scan, pose) in initials.iter().enumerate() {
        if let (Some(p), true) = (pose, scan != anchor) {
            factors.push(Factor::Relative { anchor: av, scan: scan_var[scan].unwrap(), z: t_anchor.inverse() * *p });
        }
    }
    Ok(FactorGraphSpec { kinds, initial, factors, noise: *noise })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegisterConfig {
    pub marker: MarkerSpec,
    pub detect: ScanDetectConfig,
    pub anchor: usize,
    pub noise: NoiseModel,
    pub lm: LmOptions,
    /// Shortest-path initialization; when off every scan starts at identity.
    pub first_graph: bool,
    /// Factor-graph refinement; when off the initial poses are returned.
    pub second_graph: bool,
    /// Fail when some scan is not connected to the anchor.
    pub strict: bool,
}

impl RegisterConfig {
    pub fn new(marker: MarkerSpec) -> Self {
        Self {
            marker,
            detect: ScanDetectConfig::default(),
            anchor: 0,
            noise: NoiseModel::default(),
            lm: LmOptions::default(),
            first_graph: true,
            second_graph: true,
            strict: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EdgeWeight {
    pub scan: usize,
    pub marker: usize,
    pub e_pp: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegistrationResult {
    pub anchor: usize,
    /// Scan → anchor frame; `None` for unreachable scans.
    pub scan_poses: Vec<Option<Pose>>,
    pub initial_scan_poses: Vec<Option<Pose>>,
    /// Marker → anchor frame, by ascending id.
    pub marker_poses: Vec<(usize, Pose)>,
    pub corners: Vec<(usize, [Vector3<f64>; 4])>,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub iterations: usize,
    pub cost_history: Vec<f64>,
    pub unreachable: Vec<usize>,
    pub edges: Vec<EdgeWeight>,
}

impl RegistrationResult {
    /// All reachable scans in the anchor frame.
    pub fn merged_cloud(&self, scans: &[PointCloud]) -> PointCloud {
        let mut out = PointCloud::default();
        for (scan, pose) in scans.iter().zip(&self.scan_poses) {
            if let Some(p) = pose {
                out.extend(&scan.transformed(p));
            }
        }
        out
    }
}

/// Registration from per-scan marker observations (index = scan).
pub fn register_observations(
    observations: &[Vec<MarkerObservation>],
    cfg: &RegisterConfig,
) -> Result<RegistrationResult, RegistrationError> {
    let g = build_first_level(observations, cfg.anchor)?;
    let mut init = initial_poses(&g);
    if !init.unreachable.is_empty() {
        if cfg.strict {
            return Err(RegistrationError::DisconnectedInput(init.unreachable));
        }
        warn!("scans not connected to the anchor: {:?}", init.unreachable);
    }
    if !cfg.first_graph {
        for p in init.poses.iter_mut().flatten() {
            *p = Pose::identity();
        }
    }
    let fg = build_factor_graph(observations, &init.poses, cfg.anchor, &cfg.marker, &cfg.noise)?;
    let (values, initial_cost, final_cost, iterations, cost_history) = if cfg.second_graph {
        let out = optimize(&fg, &cfg.lm)?;
        info!("factor graph: cost {:.6e} -> {:.6e} in {} iterations", out.initial_cost, out.final_cost, out.iterations);
        (out.values, out.initial_cost, out.final_cost, out.iterations, out.cost_history)
    } else {
        let c = fg.cost(&fg.initial);
        (fg.initial.clone(), c, c, 0, vec![c])
    };

    let mut scan_poses = vec![None; observations.len()];
    let mut marker_poses = Vec::new();
    let mut corners: Vec<(usize, [Vector3<f64>; 4])> = Vec::new();
    for (kind, v) in fg.kinds.iter().zip(&values) {
        match *kind {
            VariableKind::ScanPose(s) => scan_poses[s] = Some(*v.pose()),
            VariableKind::MarkerPose(id) => marker_poses.push((id, *v.pose())),
            VariableKind::Corner { marker, corner } => {
                if corners.last().is_none_or(|c| c.0 != marker) {
                    corners.push((marker, [Vector3::zeros(); 4]));
                }
                corners.last_mut().unwrap().1[corner] = *v.point();
            }
        }
    }
    let edges = g.edges.iter().map(|e| EdgeWeight { scan: e.scan, marker: g.markers[e.marker], e_pp: e.weight }).collect();
    Ok(RegistrationResult {
        anchor: cfg.anchor,
        scan_poses,
        initial_scan_poses: init.poses,
        marker_poses,
        corners,
        initial_cost,
        final_cost,
        iterations,
        cost_history,
        unreachable: init.unreachable,
        edges,
    })
}

/// Marker detection on every scan, in parallel; results in scan order.
pub fn detect_all(
    scans: &[PointCloud],
    family: &TagFamily,
    cfg: &RegisterConfig,
) -> Result<Vec<Vec<MarkerObservation>>, RegistrationError> {
    scans
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let obs = detect_in_scan(s, i, &cfg.detect, family, &cfg.marker)
                .map_err(|source| RegistrationError::Detection { scan: i, source })?;
            debug!("scan {i}: markers {:?}", obs.iter().map(|o| o.id).collect::<Vec<_>>());
            Ok(obs)
        })
        .collect()
}

/// Detection, shortest-path initialization and factor-graph refinement.
pub fn register(
    scans: &[PointCloud],
    family: &TagFamily,
    cfg: &RegisterConfig,
) -> Result<(RegistrationResult, Vec<Vec<MarkerObservation>>), RegistrationError> {
    if scans.len() < 2 {
        return Err(RegistrationError::TooFewScans(scans.len()));
    }
    let observations = detect_all(scans, family, cfg)?;
    let result = register_observations(&observations, cfg)?;
    Ok((result, observations))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{se3_ominus, Rotation};
    use nalgebra::Vector2;

    /// Exact observations of `markers` (marker → world) from `scans`
    /// (scan → world); `seen[i]` lists marker indices visible from scan i.
    fn exact(scans: &[Pose], markers: &[(usize, Pose)], seen: &[Vec<usize>], spec: &MarkerSpec) -> Vec<Vec<MarkerObservation>> {
        scans
            .iter()
            .zip(seen)
            .enumerate()
            .map(|(i, (s, vis))| {
                vis.iter()
                    .map(|&k| {
                        let (id, m) = markers[k];
                        let pose = s.inverse() * m;
                        MarkerObservation {
                            id,
                            scan: i,
                            corners_px: [Vector2::zeros(); 4],
                            corners_3d: spec.canonical_corners().map(|c| pose.transform_point(&c)),
                            pose,
                            e_pp: 0.0,
                            lambda: 0.0,
                        }
                    })
                    .collect()
            })
            .collect()
    }

    fn layout() -> (Vec<Pose>, Vec<(usize, Pose)>) {
        let scans = vec![
            Pose::identity(),
            Pose::new(Rotation::rot_z(1.2), Vector3::new(1.0, 2.0, 0.1)),
            Pose::new(Rotation::rot_z(-2.5), Vector3::new(-3.0, 0.5, 0.0)),
        ];
        let markers = vec![
            (4, Pose::new(Rotation::rot_y(0.3), Vector3::new(2.0, 0.0, 0.5))),
            (9, Pose::new(Rotation::rot_x(-0.4), Vector3::new(0.0, 3.0, 0.2))),
        ];
        (scans, markers)
    }

    #[test]
    fn graph_structure_examples() {
        let spec = MarkerSpec::new(0.5, 0.0);
        let (scans, markers) = layout();
        let obs = exact(&scans[..1], &markers[..1], &[vec![0]], &spec);
        let fg = build_factor_graph(&obs, &[Some(Pose::identity())], 0, &spec, &NoiseModel::default()).unwrap();
        assert_eq!(fg.kinds.len(), 6);
        assert_eq!(fg.count_factors(|f| matches!(f, Factor::Prior { .. })), 1);
        assert_eq!(fg.count_factors(|f| matches!(f, Factor::MarkerPose { .. })), 1);
        assert_eq!(fg.count_factors(|f| matches!(f, Factor::LocalCorner { .. })), 4);
        assert_eq!(fg.count_factors(|f| matches!(f, Factor::ScanCorner { .. })), 4);
        assert_eq!(fg.count_factors(|f| matches!(f, Factor::Relative { .. })), 0);

        let obs = exact(&scans, &markers, &[vec![0, 1], vec![0, 1], vec![0, 1]], &spec);
        let init: Vec<Option<Pose>> = scans.iter().map(|p| Some(*p)).collect();
        let fg = build_factor_graph(&obs, &init, 0, &spec, &NoiseModel::default()).unwrap();
        assert_eq!(fg.kinds.len(), 3 + 2 + 8);
        assert_eq!(fg.count_factors(|f| matches!(f, Factor::Relative { .. })), 2);
        assert_eq!(fg.count_factors(|f| matches!(f, Factor::MarkerPose { .. })), 6);
        assert!(matches!(
            build_factor_graph(&obs, &[None, None, None], 0, &spec, &NoiseModel::default()),
            Err(RegistrationError::MissingInitial(0))
        ));
    }

    #[test]
    fn zero_noise_recovers_truth() {
        let spec = MarkerSpec::new(0.5, 0.0);
        let (scans, markers) = layout();
        let obs = exact(&scans, &markers, &[vec![0], vec![0, 1], vec![1]], &spec);
        let res = register_observations(&obs, &RegisterConfig::new(spec)).unwrap();
        for (est, truth) in res.scan_poses.iter().zip(&scans) {
            assert!(se3_ominus(&est.unwrap(), truth).norm() < 1e-6);
        }
        assert!(res.final_cost < 1e-10);
        assert!(res.final_cost <= res.initial_cost);
        for ((id, m), (tid, t)) in res.marker_poses.iter().zip(&markers) {
            assert_eq!(id, tid);
            let canon = spec.canonical_corners();
            let c = &res.corners.iter().find(|c| c.0 == *id).unwrap().1;
            for s in 0..4 {
                assert!((c[s] - m.transform_point(&canon[s])).norm() < 1e-8);
            }
            assert!(se3_ominus(m, t).norm() < 1e-6);
        }
    }

    #[test]
    fn ground_truth_start_is_already_optimal() {
        let spec = MarkerSpec::new(0.5, 0.0);
        let (scans, markers) = layout();
        let obs = exact(&scans, &markers, &[vec![0], vec![0, 1], vec![1]], &spec);
        let init: Vec<Option<Pose>> = scans.iter().map(|p| Some(*p)).collect();
        let fg = build_factor_graph(&obs, &init, 0, &spec, &NoiseModel::default()).unwrap();
        let out = optimize(&fg, &LmOptions::default()).unwrap();
        assert!(out.iterations <= 2);
        assert!(out.cost_history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn disconnected_scans() {
        let spec = MarkerSpec::new(0.5, 0.0);
        let (scans, markers) = layout();
        let obs = exact(&scans, &markers, &[vec![0], vec![0], vec![1]], &spec);
        let res = register_observations(&obs, &RegisterConfig::new(spec)).unwrap();
        assert_eq!(res.unreachable, vec![2]);
        assert!(res.scan_poses[2].is_none());
        let strict = RegisterConfig { strict: true, ..RegisterConfig::new(spec) };
        assert_eq!(register_observations(&obs, &strict), Err(RegistrationError::DisconnectedInput(vec![2])));
    }

    #[test]
    fn identical_scans_are_identity_apart() {
        let spec = MarkerSpec::new(0.5, 0.0);
        let (_, markers) = layout();
        let s = Pose::new(Rotation::rot_z(0.7), Vector3::new(0.3, 0.0, 0.0));
        let obs = exact(&[s, s], &markers, &[vec![0, 1], vec![0, 1]], &spec);
        let res = register_observations(&obs, &RegisterConfig::new(spec)).unwrap();
        assert!(res.scan_poses[1].unwrap().log6().norm() < 1e-9);
    }
}
