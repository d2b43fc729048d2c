//! `key = value` settings files.

use std::path::Path;

use fidreg::map_locate::LocateConfig;
use fidreg::registration::RegisterConfig;

/// Everything a settings file can change. Keys are listed in [`KEYS`].
#[derive(Clone, Debug)]
pub struct Settings {
    pub register: RegisterConfig,
    pub locate: LocateConfig,
    pub overlap_tau: f64,
    pub recall_thr: f64,
    pub rr_thr_t: f64,
    pub rr_thr_r: f64,
}

pub const KEYS: &[&str] = &[
    "theta_a_deg",
    "theta_i_deg",
    "scope",
    "step",
    "blur_sigma",
    "side_tolerance",
    "min_side_px",
    "max_hamming",
    "anchor",
    "first_graph",
    "second_graph",
    "sigma_pose_rot",
    "sigma_pose_trans",
    "sigma_corner_local",
    "sigma_corner_scan",
    "sigma_prior",
    "sigma_rel_rot",
    "sigma_rel_trans",
    "max_iterations",
    "initial_lambda",
    "numeric_pose_jacobians",
    "map.gradient_k",
    "map.gradient_threshold",
    "map.cluster_tolerance",
    "map.size_slack",
    "map.buffer_factor",
    "map.px_per_cell",
    "map.spacing_factor",
    "overlap_tau",
    "recall_thr",
    "rr_thr_t",
    "rr_thr_r",
];

impl Settings {
    pub fn new(marker_side: f64) -> Self {
        Self {
            register: RegisterConfig::new(fidreg::marker::MarkerSpec::new(marker_side, 0.0)),
            locate: LocateConfig::default(),
            overlap_tau: fidreg::metrics::DEFAULT_OVERLAP_TAU,
            recall_thr: 0.05,
            rr_thr_t: 0.1,
            rr_thr_r: 0.1,
        }
    }

    pub fn load(&mut self, path: &Path) -> Result<(), String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        self.apply_text(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), String> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| format!("line {}: expected key = value", n + 1))?;
            self.set(k.trim(), v.trim().trim_matches('"')).map_err(|e| format!("line {}: {e}", n + 1))?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num(v: &str) -> Result<f64, String> {
            v.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| format!("not a number: {v}"))
        }
        fn int(v: &str) -> Result<usize, String> {
            v.parse::<usize>().map_err(|_| format!("not a non-negative integer: {v}"))
        }
        fn flag(v: &str) -> Result<bool, String> {
            v.parse::<bool>().map_err(|_| format!("not true/false: {v}"))
        }
        fn opt(v: &str) -> Result<Option<f64>, String> {
            if v == "none" { Ok(None) } else { num(v).map(Some) }
        }
        let r = &mut self.register;
        let l = &mut self.locate;
        match key {
            "theta_a_deg" => r.detect.theta_a = num(value)?.to_radians(),
            "theta_i_deg" => r.detect.theta_i = num(value)?.to_radians(),
            "scope" => {
                r.detect.scope = int(value)?;
                l.scope = r.detect.scope;
            }
            "step" => {
                r.detect.step = num(value)?;
                l.step = r.detect.step;
            }
            "blur_sigma" => {
                r.detect.blur_sigma = opt(value)?;
                l.blur_sigma = r.detect.blur_sigma;
            }
            "side_tolerance" => {
                r.detect.side_tolerance = num(value)?;
                l.side_tolerance = r.detect.side_tolerance;
            }
            "min_side_px" => {
                r.detect.quad.min_side_px = num(value)?;
                l.quad.min_side_px = r.detect.quad.min_side_px;
            }
            "max_hamming" => {
                r.detect.quad.max_hamming = int(value)? as u32;
                l.quad.max_hamming = r.detect.quad.max_hamming;
            }
            "anchor" => r.anchor = int(value)?,
            "first_graph" => r.first_graph = flag(value)?,
            "second_graph" => r.second_graph = flag(value)?,
            "sigma_pose_rot" => r.noise.pose_rot = num(value)?,
            "sigma_pose_trans" => r.noise.pose_trans = num(value)?,
            "sigma_corner_local" => r.noise.corner_local = num(value)?,
            "sigma_corner_scan" => r.noise.corner_scan = num(value)?,
            "sigma_prior" => {
                r.noise.prior_rot = num(value)?;
                r.noise.prior_trans = r.noise.prior_rot;
            }
            "sigma_rel_rot" => r.noise.relative_rot = num(value)?,
            "sigma_rel_trans" => r.noise.relative_trans = num(value)?,
            "max_iterations" => r.lm.max_iterations = int(value)?,
            "initial_lambda" => r.lm.initial_lambda = num(value)?,
            "numeric_pose_jacobians" => r.lm.numeric_pose_jacobians = flag(value)?,
            "map.gradient_k" => l.gradient_k = int(value)?,
            "map.gradient_threshold" => l.gradient_threshold = num(value)?,
            "map.cluster_tolerance" => l.cluster_tolerance = opt(value)?,
            "map.size_slack" => l.criteria.size_slack = num(value)?,
            "map.buffer_factor" => l.buffer_factor = num(value)?,
            "map.px_per_cell" => l.px_per_cell = num(value)?,
            "map.spacing_factor" => l.spacing_factor = num(value)?,
            "overlap_tau" => self.overlap_tau = num(value)?,
            "recall_thr" => self.recall_thr = num(value)?,
            "rr_thr_t" => self.rr_thr_t = num(value)?,
            "rr_thr_r" => self.rr_thr_r = num(value)?,
            _ => return Err(format!("unknown key `{key}` (known: {})", KEYS.join(", "))),
        }
        Ok(())
    }
}
