//! JSON shapes written and read by the commands.

use fidreg::marker::MarkerObservation;
use fidreg::metrics::{EvalReport, PairOverlap};
use fidreg::registration::RegistrationResult;
use fidreg::simulator::MarkerTruth;
use fidreg::Pose;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub scan: usize,
    pub id: usize,
    pub corners_px: [[f64; 2]; 4],
    pub corners_3d: [[f64; 3]; 4],
    /// Marker → scan.
    pub pose: Pose,
    pub e_pp: f64,
    /// `null` when the observation did not come from an image threshold.
    pub lambda: Option<f64>,
}

impl From<&MarkerObservation> for DetectionRecord {
    fn from(o: &MarkerObservation) -> Self {
        Self {
            scan: o.scan,
            id: o.id,
            corners_px: o.corners_px.map(|c| [c.x, c.y]),
            corners_3d: o.corners_3d.map(|c| [c.x, c.y, c.z]),
            pose: o.pose,
            e_pp: o.e_pp,
            lambda: Some(o.lambda).filter(|l| l.is_finite()),
        }
    }
}

pub fn jsonl<T: Serialize>(items: impl IntoIterator<Item = T>) -> String {
    let mut s = String::new();
    for it in items {
        s.push_str(&serde_json::to_string(&it).expect("records serialize"));
        s.push('\n');
    }
    s
}

/// `ground_truth.json` written by `simulate`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub scans: Vec<String>,
    /// Sensor → world per scan.
    pub poses: Vec<Pose>,
    pub markers: Vec<MarkerTruth>,
    pub overlaps: Vec<PairOverlap>,
    pub overlap_definition: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanPoseRecord {
    pub scan: usize,
    pub file: String,
    pub pose: Option<Pose>,
    pub initial_pose: Option<Pose>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkerRecord {
    pub id: usize,
    pub pose: Pose,
    pub corners: [[f64; 3]; 4],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub scan: usize,
    pub marker: usize,
    pub e_pp: f64,
}

/// `report.json` written by `register`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegisterReport {
    pub anchor: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub iterations: usize,
    pub cost_history: Vec<f64>,
    pub unreachable: Vec<usize>,
    pub scans: Vec<ScanPoseRecord>,
    pub markers: Vec<MarkerRecord>,
    pub e_pp: Vec<EdgeRecord>,
}

impl RegisterReport {
    pub fn new(r: &RegistrationResult, files: &[String]) -> Self {
        Self {
            anchor: r.anchor,
            initial_cost: r.initial_cost,
            final_cost: r.final_cost,
            iterations: r.iterations,
            cost_history: r.cost_history.clone(),
            unreachable: r.unreachable.clone(),
            scans: files
                .iter()
                .enumerate()
                .map(|(i, f)| ScanPoseRecord {
                    scan: i,
                    file: f.clone(),
                    pose: r.scan_poses[i],
                    initial_pose: r.initial_scan_poses[i],
                })
                .collect(),
            markers: r
                .marker_poses
                .iter()
                .map(|(id, pose)| {
                    let c = r.corners.iter().find(|c| c.0 == *id).map(|c| c.1).expect("corners per marker");
                    MarkerRecord { id: *id, pose: *pose, corners: c.map(|p| [p.x, p.y, p.z]) }
                })
                .collect(),
            e_pp: r.edges.iter().map(|e| EdgeRecord { scan: e.scan, marker: e.marker, e_pp: e.e_pp }).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunError {
    pub poses: String,
    pub rmse_t: f64,
    pub rmse_r: f64,
    pub missing: Vec<usize>,
}

/// `eval` output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOutput {
    #[serde(flatten)]
    pub report: EvalReport,
    pub anchor: usize,
    pub runs: Vec<RunError>,
    /// Per-scan translation error of the first run, meters.
    pub translation_errors: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub index: usize,
    pub center: [f64; 3],
    pub extents: [f64; 3],
    pub box_pose: Pose,
    pub buffered_points: usize,
    pub ids: Vec<usize>,
    pub flipped: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
}
