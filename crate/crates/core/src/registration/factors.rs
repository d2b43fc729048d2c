use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, SMatrix, Vector3, Vector6};

use super::RegistrationError;
use crate::geom::{hat, so3_right_jacobian_inv, Pose};

/// Variable value; poses move by right retraction, points additively.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Value {
    Pose(Pose),
    Point(Vector3<f64>),
}

impl Value {
    pub fn dim(&self) -> usize {
        match self {
            Value::Pose(_) => 6,
            Value::Point(_) => 3,
        }
    }

    pub fn pose(&self) -> &Pose {
        match self {
            Value::Pose(p) => p,
            Value::Point(_) => panic!("variable is a point"),
        }
    }

    pub fn point(&self) -> &Vector3<f64> {
        match self {
            Value::Point(p) => p,
            Value::Pose(_) => panic!("variable is a pose"),
        }
    }

    pub fn retract(&self, d: &[f64]) -> Value {
        match self {
            Value::Pose(p) => Value::Pose(p.retract(&Vector6::from_column_slice(d))),
            Value::Point(p) => Value::Point(p + Vector3::from_column_slice(d)),
        }
    }
}

/// What a variable stands for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VariableKind {
    ScanPose(usize),
    MarkerPose(usize),
    Corner { marker: usize, corner: usize },
}

/// Measurement factors. Indices refer to variables.
#[derive(Clone, Debug, PartialEq)]
pub enum Factor {
    /// Marker pose seen from a scan: `h = T_i⁻¹ T^j`, `z` marker → scan.
    MarkerPose { scan: usize, marker: usize, z: Pose },
    /// Corner in its marker frame: `h = (T^j)⁻¹ p`.
    LocalCorner { marker: usize, point: usize, z: Vector3<f64> },
    /// Corner in a scan frame: `h = T_i⁻¹ p`.
    ScanCorner { scan: usize, point: usize, z: Vector3<f64> },
    /// Anchor gauge: `h = T_a`.
    Prior { scan: usize, z: Pose },
    /// Scan relative to the anchor: `h = T_a⁻¹ T_m`.
    Relative { anchor: usize, scan: usize, z: Pose },
}

/// Standard deviations of each factor type.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseModel {
    pub pose_rot: f64,
    pub pose_trans: f64,
    pub corner_local: f64,
    pub corner_scan: f64,
    pub prior_rot: f64,
    pub prior_trans: f64,
    pub relative_rot: f64,
    pub relative_trans: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            pose_rot: 0.02,
            pose_trans: 0.02,
            corner_local: 0.01,
            corner_scan: 0.01,
            prior_rot: 1e-4,
            prior_trans: 1e-4,
            relative_rot: 0.02,
            relative_trans: 0.02,
        }
    }
}

impl NoiseModel {
    pub fn validate(&self) -> Result<(), RegistrationError> {
        let all = [
            self.pose_rot,
            self.pose_trans,
            self.corner_local,
            self.corner_scan,
            self.prior_rot,
            self.prior_trans,
            self.relative_rot,
            self.relative_trans,
        ];
        if all.iter().all(|s| s.is_finite() && *s > 0.0) {
            Ok(())
        } else {
            Err(RegistrationError::BadCovariance)
        }
    }
}

impl Factor {
    pub fn variables(&self) -> Vec<usize> {
        match *self {
            Factor::MarkerPose { scan, marker, .. } => vec![scan, marker],
            Factor::LocalCorner { marker, point, .. } => vec![marker, point],
            Factor::ScanCorner { scan, point, .. } => vec![scan, point],
            Factor::Prior { scan, .. } => vec![scan],
            Factor::Relative { anchor, scan, .. } => vec![anchor, scan],
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Factor::LocalCorner { .. } | Factor::ScanCorner { .. } => 3,
            _ => 6,
        }
    }

    /// Per-row standard deviations.
    pub fn sigmas(&self, n: &NoiseModel) -> Vec<f64> {
        let pose = |r: f64, t: f64| vec![r, r, r, t, t, t];
        match self {
            Factor::MarkerPose { .. } => pose(n.pose_rot, n.pose_trans),
            Factor::LocalCorner { .. } => vec![n.corner_local; 3],
            Factor::ScanCorner { .. } => vec![n.corner_scan; 3],
            Factor::Prior { .. } => pose(n.prior_rot, n.prior_trans),
            Factor::Relative { .. } => pose(n.relative_rot, n.relative_trans),
        }
    }

    /// Unwhitened residual `h(Θ) ⊖ z`.
    pub fn residual(&self, x: &[Value]) -> DVector<f64> {
        match self {
            Factor::MarkerPose { scan: a, marker: b, z } | Factor::Relative { anchor: a, scan: b, z } => {
                let e = z.inverse() * x[*a].pose().inverse() * *x[*b].pose();
                DVector::from_column_slice(e.log6().as_slice())
            }
            Factor::Prior { scan, z } => {
                let e = z.inverse() * *x[*scan].pose();
                DVector::from_column_slice(e.log6().as_slice())
            }
            Factor::LocalCorner { marker: f, point, z } | Factor::ScanCorner { scan: f, point, z } => {
                let r = x[*f].pose().inverse().transform_point(x[*point].point()) - z;
                DVector::from_column_slice(r.as_slice())
            }
        }
    }

    /// Analytic Jacobians of [`Factor::residual`], one block per entry of
    /// [`Factor::variables`], with respect to the tangent perturbation.
    pub fn jacobians(&self, x: &[Value]) -> Vec<DMatrix<f64>> {
        match self {
            Factor::MarkerPose { scan: a, marker: b, z } | Factor::Relative { anchor: a, scan: b, z } => {
                let g = x[*a].pose().inverse() * *x[*b].pose();
                let e = z.inverse() * g;
                let d = log6_jacobian(&e);
                let ja = -(d * adjoint(&g.inverse()));
                vec![to_dyn(&ja), to_dyn(&d)]
            }
            Factor::Prior { scan, z } => {
                let e = z.inverse() * *x[*scan].pose();
                vec![to_dyn(&log6_jacobian(&e))]
            }
            Factor::LocalCorner { marker: f, point, .. } | Factor::ScanCorner { scan: f, point, .. } => {
                let t = x[*f].pose();
                let q = t.inverse().transform_point(x[*point].point());
                let mut jf = SMatrix::<f64, 3, 6>::zeros();
                jf.fixed_view_mut::<3, 3>(0, 0).copy_from(&hat(&q));
                jf.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-Matrix3::identity()));
                let jp = t.rotation.transpose().matrix().clone_owned();
                vec![DMatrix::from_column_slice(3, 6, jf.as_slice()), DMatrix::from_column_slice(3, 3, jp.as_slice())]
            }
        }
    }

    /// Central-difference Jacobians with step `h`.
    pub fn numeric_jacobians(&self, x: &[Value], h: f64) -> Vec<DMatrix<f64>> {
        let mut out = Vec::new();
        for v in self.variables() {
            let dim = x[v].dim();
            let mut j = DMatrix::zeros(self.dim(), dim);
            let mut state = x.to_vec();
            for k in 0..dim {
                let mut d = vec![0.0; dim];
                d[k] = h;
                state[v] = x[v].retract(&d);
                let rp = self.residual(&state);
                d[k] = -h;
                state[v] = x[v].retract(&d);
                let rm = self.residual(&state);
                j.set_column(k, &((rp - rm) / (2.0 * h)));
            }
            out.push(j);
        }
        out
    }
}

/// Derivative of `log6(E · Exp(δ))` at `δ = 0`.
fn log6_jacobian(e: &Pose) -> Matrix6<f64> {
    let w = e.rotation.log();
    let mut d = Matrix6::zeros();
    d.fixed_view_mut::<3, 3>(0, 0).copy_from(&so3_right_jacobian_inv(&w));
    d.fixed_view_mut::<3, 3>(3, 3).copy_from(e.rotation.matrix());
    d
}

/// Adjoint in `[ω; v]` coordinates: `T Exp(ξ) T⁻¹ = Exp(Ad_T ξ)`.
pub fn adjoint(t: &Pose) -> Matrix6<f64> {
    let r = t.rotation.matrix();
    let mut a = Matrix6::zeros();
    a.fixed_view_mut::<3, 3>(0, 0).copy_from(r);
    a.fixed_view_mut::<3, 3>(3, 3).copy_from(r);
    a.fixed_view_mut::<3, 3>(3, 0).copy_from(&(hat(&t.translation) * r));
    a
}

fn to_dyn<const R: usize, const C: usize>(m: &SMatrix<f64, R, C>) -> DMatrix<f64> {
    DMatrix::from_column_slice(R, C, m.as_slice())
}

/// Variables, their initial values and the factors tying them together.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorGraphSpec {
    pub kinds: Vec<VariableKind>,
    pub initial: Vec<Value>,
    pub factors: Vec<Factor>,
    pub noise: NoiseModel,
}

impl FactorGraphSpec {
    pub fn variable(&self, kind: VariableKind) -> Option<usize> {
        self.kinds.iter().position(|k| *k == kind)
    }

    pub fn count_factors(&self, pred: impl Fn(&Factor) -> bool) -> usize {
        self.factors.iter().filter(|f| pred(f)).count()
    }

    /// `½ Σ ‖r / σ‖²`.
    pub fn cost(&self, x: &[Value]) -> f64 {
        self.factors
            .iter()
            .map(|f| {
                let r = f.residual(x);
                let s = f.sigmas(&self.noise);
                0.5 * r.iter().zip(&s).map(|(r, s)| (r / s).powi(2)).sum::<f64>()
            })
            .sum()
    }

    fn check(&self) -> Result<(), RegistrationError> {
        self.noise.validate()?;
        if self.count_factors(|f| matches!(f, Factor::Prior { .. })) != 1 {
            return Err(RegistrationError::IllPosedGraph("exactly one prior factor is required"));
        }
        let mut touched = vec![false; self.kinds.len()];
        for f in &self.factors {
            for v in f.variables() {
                if v >= self.kinds.len() {
                    return Err(RegistrationError::IllPosedGraph("factor refers to a missing variable"));
                }
                touched[v] = true;
            }
        }
        if touched.iter().any(|t| !t) {
            return Err(RegistrationError::IllPosedGraph("variable without factors"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LmOptions {
    pub max_iterations: usize,
    pub initial_lambda: f64,
    pub relative_decrease: f64,
    pub min_step: f64,
    /// Central differences instead of analytic Jacobians for pose blocks.
    pub numeric_pose_jacobians: bool,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            initial_lambda: 1e-4,
            relative_decrease: 1e-9,
            min_step: 1e-10,
            numeric_pose_jacobians: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LmOutcome {
    pub values: Vec<Value>,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub iterations: usize,
    /// Cost after each accepted step, starting with the initial cost.
    pub cost_history: Vec<f64>,
}

/// Levenberg–Marquardt on the whitened stacked residual with damping
/// `H + λI`; λ shrinks ×10 on accepted steps and grows ×10 on rejected ones.
pub fn optimize(fg: &FactorGraphSpec, opts: &LmOptions) -> Result<LmOutcome, RegistrationError> {
    fg.check()?;
    let offsets: Vec<usize> = fg
        .initial
        .iter()
        .scan(0, |acc, v| {
            let o = *acc;
            *acc += v.dim();
            Some(o)
        })
        .collect();
    let n = fg.initial.iter().map(Value::dim).sum::<usize>();
    let mut x = fg.initial.clone();
    let mut cost = fg.cost(&x);
    if !cost.is_finite() {
        return Err(RegistrationError::NonFiniteCost);
    }
    let mut out = LmOutcome { values: Vec::new(), initial_cost: cost, final_cost: cost, iterations: 0, cost_history: vec![cost] };
    let mut lambda = opts.initial_lambda;

    while out.iterations < opts.max_iterations && cost > 0.0 {
        out.iterations += 1;
        let (h, g) = normal_equations(fg, &x, &offsets, n, opts.numeric_pose_jacobians);
        let mut accepted = false;
        let mut converged = false;
        while lambda < 1e16 {
            let mut damped = h.clone();
            for k in 0..n {
                damped[(k, k)] += lambda;
            }
            let Some(step) = damped.cholesky().map(|c| c.solve(&(-&g))) else {
                lambda *= 10.0;
                continue;
            };
            let cand: Vec<Value> =
                x.iter().zip(&offsets).map(|(v, &o)| v.retract(&step.as_slice()[o..o + v.dim()])).collect();
            let new_cost = fg.cost(&cand);
            if !new_cost.is_finite() {
                return Err(RegistrationError::NonFiniteCost);
            }
            if new_cost < cost {
                let decrease = (cost - new_cost) / cost;
                x = cand;
                cost = new_cost;
                out.cost_history.push(cost);
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                converged = decrease < opts.relative_decrease || step.norm() < opts.min_step;
                break;
            }
            if step.norm() < opts.min_step {
                converged = true;
                break;
            }
            lambda *= 10.0;
        }
        if !accepted || converged {
            break;
        }
    }
    out.final_cost = cost;
    out.values = x;
    Ok(out)
}

fn normal_equations(
    fg: &FactorGraphSpec,
    x: &[Value],
    offsets: &[usize],
    n: usize,
    numeric_pose: bool,
) -> (DMatrix<f64>, DVector<f64>) {
    let mut h = DMatrix::zeros(n, n);
    let mut g = DVector::zeros(n);
    for f in &fg.factors {
        let sig = f.sigmas(&fg.noise);
        let w = DVector::from_iterator(sig.len(), sig.iter().map(|s| 1.0 / s));
        let r = f.residual(x).component_mul(&w);
        let vars = f.variables();
        let mut js = f.jacobians(x);
        if numeric_pose && vars.iter().any(|&v| x[v].dim() == 6) {
            js = f.numeric_jacobians(x, 1e-6);
        }
        let js: Vec<DMatrix<f64>> = js
            .into_iter()
            .map(|mut j| {
                for (row, wi) in w.iter().enumerate() {
                    j.row_mut(row).scale_mut(*wi);
                }
                j
            })
            .collect();
        for (a, ja) in vars.iter().zip(&js) {
            let oa = offsets[*a];
            let mut gv = g.rows_mut(oa, ja.ncols());
            gv += ja.transpose() * &r;
            for (b, jb) in vars.iter().zip(&js) {
                let ob = offsets[*b];
                let mut block = h.view_mut((oa, ob), (ja.ncols(), jb.ncols()));
                block += ja.transpose() * jb;
            }
        }
    }
    (h, g)
}
