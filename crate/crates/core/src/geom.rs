//! Rigid-body math on SO(3) / SE(3).
//!
//! Rotations are stored as 3×3 matrices and poses as rotation + translation.
//! The tangent-space conventions used throughout the crate are:
//!
//! * `so3_log` / `so3_exp` map between rotation matrices and axis-angle
//!   vectors (`|ξ| = θ`).
//! * A 6-vector is `[ω; v]`: rotation log first, then translation.
//! * [`se3_ominus`] is the generalized difference used by pose factors:
//!   `A ⊖ B = [log(Rot(B⁻¹A)); Trans(B⁻¹A)]`.
//! * Pose perturbations are applied on the right, `T · Exp(δ)`.

use std::fmt;
use std::ops::Mul;

use nalgebra::{DMatrix, DVector, Matrix3, Matrix4, Vector3, Vector6, SVD};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Angle below which the log/exp maps switch to their Taylor expansions.
const SMALL_ANGLE: f64 = 1e-5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("correspondence sets differ in size ({source_len} vs {target_len})")]
    CountMismatch { source_len: usize, target_len: usize },
    #[error("at least 3 correspondences are required, got {0}")]
    TooFewCorrespondences(usize),
    #[error("source points are collinear or coincident")]
    CollinearCorrespondences,
    #[error("covariance matrix is singular or not positive definite")]
    SingularCovariance,
    #[error("dimension mismatch: vector has {vector} entries, covariance is {rows}x{cols}")]
    DimensionMismatch { vector: usize, rows: usize, cols: usize },
    #[error("matrix is not a rotation (orthogonality/determinant check failed)")]
    NotARotation,
}

/// Skew-symmetric matrix of `w`, so that `hat(w) * x == w × x`.
pub fn hat(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Inverse of [`hat`]; reads the off-diagonal entries of a skew matrix.
pub fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// A 3×3 rotation matrix (element of SO(3)).
#[derive(Clone, Copy, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl fmt::Debug for Rotation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Rotation({:?})", self.0.as_slice())
    }
}

impl Rotation {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Wraps a matrix after checking `R Rᵀ = I` and `det R = +1` within 1e-9.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self, GeomError> {
        let ortho = (m * m.transpose() - Matrix3::identity()).abs().max();
        if ortho > 1e-9 || (m.determinant() - 1.0).abs() > 1e-9 || !m.iter().all(|v| v.is_finite()) {
            return Err(GeomError::NotARotation);
        }
        Ok(Self(m))
    }

    /// Wraps a matrix without validation. Callers guarantee orthonormality.
    pub fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Self(m)
    }

    /// Projects an arbitrary matrix onto the closest rotation (polar decomposition).
    pub fn orthonormalize(m: &Matrix3<f64>) -> Self {
        let svd = SVD::new(*m, true, true);
        let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
        let mut r = u * vt;
        if r.determinant() < 0.0 {
            let mut u2 = u;
            let k = argmin(svd.singular_values.as_slice());
            u2.column_mut(k).neg_mut();
            r = u2 * vt;
        }
        Self(r)
    }

    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 {
            return Self::identity();
        }
        so3_exp(&(axis / n * angle))
    }

    pub fn rot_x(angle: f64) -> Self {
        Self::from_axis_angle(&Vector3::x(), angle)
    }

    pub fn rot_y(angle: f64) -> Self {
        Self::from_axis_angle(&Vector3::y(), angle)
    }

    pub fn rot_z(angle: f64) -> Self {
        Self::from_axis_angle(&Vector3::z(), angle)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn inverse(&self) -> Self {
        self.transpose()
    }

    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }

    pub fn log(&self) -> Vector3<f64> {
        so3_log(self)
    }

    /// Geodesic angle of the rotation, in `[0, π]`.
    pub fn angle(&self) -> f64 {
        self.log().norm()
    }
}

impl Mul for Rotation {
    type Output = Rotation;
    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

impl Mul<Vector3<f64>> for Rotation {
    type Output = Vector3<f64>;
    fn mul(self, rhs: Vector3<f64>) -> Vector3<f64> {
        self.0 * rhs
    }
}

/// Exponential map from axis-angle to rotation (Rodrigues).
pub fn so3_exp(w: &Vector3<f64>) -> Rotation {
    let theta2 = w.norm_squared();
    let theta = theta2.sqrt();
    let k = hat(w);
    let (a, b) = if theta < SMALL_ANGLE {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    Rotation(Matrix3::identity() + k * a + k * k * b)
}

/// Logarithm map `ξ = log(R)∨` with `|ξ| = θ ∈ [0, π]`.
///
/// Near θ = 0 the skew part is used directly (first-order limit); near θ = π the
/// axis is the eigenvector of eigenvalue 1, read from the symmetric part.
pub fn so3_log(r: &Rotation) -> Vector3<f64> {
    let m = &r.0;
    let skew = vee(&(m - m.transpose())); // 2 sinθ · n
    let sin_t = 0.5 * skew.norm();
    let cos_t = ((m.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let theta = sin_t.atan2(cos_t);

    if theta < SMALL_ANGLE {
        // θ/(2 sinθ) ≈ 1/2 + θ²/12
        return skew * (0.5 + theta * theta / 12.0);
    }
    if sin_t > 1e-3 {
        return skew * (theta / (2.0 * sin_t));
    }
    // θ close to π: (R + Rᵀ)/2 = cosθ I + (1 − cosθ) n nᵀ
    let sym = (m + m.transpose()) * 0.5;
    let nn = (sym - Matrix3::identity() * cos_t) / (1.0 - cos_t);
    let diag = [nn[(0, 0)], nn[(1, 1)], nn[(2, 2)]];
    let k = argmax(&diag);
    let mut axis: Vector3<f64> = nn.column(k).into_owned();
    axis /= axis.norm();
    if axis.dot(&skew) < 0.0 {
        axis = -axis;
    }
    axis * theta
}

/// Inverse of the right Jacobian of SO(3) evaluated at `w`.
pub fn so3_right_jacobian_inv(w: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = w.norm_squared();
    let theta = theta2.sqrt();
    let k = hat(w);
    let c = if theta < SMALL_ANGLE {
        1.0 / 12.0 + theta2 / 720.0
    } else {
        1.0 / theta2 - (1.0 + theta.cos()) / (2.0 * theta * theta.sin())
    };
    Matrix3::identity() + k * 0.5 + k * k * c
}

/// Rigid transform `x ↦ R x + t`.
///
/// Serializes as a 4×4 row-major homogeneous matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub rotation: Rotation,
    pub translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn new(rotation: Rotation, translation: Vector3<f64>) -> Self {
        Self { rotation, translation }
    }

    pub fn identity() -> Self {
        Self::new(Rotation::identity(), Vector3::zeros())
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self::new(Rotation::identity(), t)
    }

    pub fn from_rotation(r: Rotation) -> Self {
        Self::new(r, Vector3::zeros())
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self::new(rt, -(rt * self.translation))
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.0 * p + self.translation
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation.0);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn from_matrix(m: &Matrix4<f64>) -> Result<Self, GeomError> {
        let r = Rotation::from_matrix(m.fixed_view::<3, 3>(0, 0).into_owned())?;
        Ok(Self::new(r, m.fixed_view::<3, 1>(0, 3).into_owned()))
    }

    pub fn to_rows(&self) -> [[f64; 4]; 4] {
        let m = self.to_matrix();
        std::array::from_fn(|r| std::array::from_fn(|c| m[(r, c)]))
    }

    /// Parses a row-major 4×4 matrix. A rotation block already orthonormal
    /// to machine precision is kept bit for bit; otherwise it is projected
    /// back onto SO(3) to absorb decimal round-off.
    pub fn from_rows(rows: &[[f64; 4]; 4]) -> Result<Self, GeomError> {
        let m = Matrix4::from_fn(|r, c| rows[r][c]);
        let block = m.fixed_view::<3, 3>(0, 0).into_owned();
        Rotation::from_matrix(block)?;
        let r = if (block * block.transpose() - Matrix3::identity()).abs().max() <= 1e-15 {
            Rotation::from_matrix_unchecked(block)
        } else {
            Rotation::orthonormalize(&block)
        };
        Ok(Self::new(r, m.fixed_view::<3, 1>(0, 3).into_owned()))
    }

    /// Right retraction `T · Exp(δ)` with the SE(3) exponential, δ = [ω; v].
    pub fn retract(&self, delta: &Vector6<f64>) -> Self {
        *self * se3_exp(delta)
    }

    /// Log coordinates in the `[log R; t]` convention (not the SE(3) log).
    pub fn log6(&self) -> Vector6<f64> {
        let w = so3_log(&self.rotation);
        Vector6::new(w.x, w.y, w.z, self.translation.x, self.translation.y, self.translation.z)
    }
}

impl Mul for Pose {
    type Output = Pose;
    fn mul(self, rhs: Pose) -> Pose {
        Pose::new(
            self.rotation * rhs.rotation,
            self.rotation.0 * rhs.translation + self.translation,
        )
    }
}

impl Serialize for Pose {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Pose {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rows = <[[f64; 4]; 4]>::deserialize(d)?;
        Pose::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// SE(3) exponential of δ = [ω; v].
pub fn se3_exp(delta: &Vector6<f64>) -> Pose {
    let w = Vector3::new(delta[0], delta[1], delta[2]);
    let v = Vector3::new(delta[3], delta[4], delta[5]);
    let theta2 = w.norm_squared();
    let theta = theta2.sqrt();
    let k = hat(&w);
    let (b, c) = if theta < SMALL_ANGLE {
        (0.5 - theta2 / 24.0, 1.0 / 6.0 - theta2 / 120.0)
    } else {
        ((1.0 - theta.cos()) / theta2, (theta - theta.sin()) / (theta2 * theta))
    };
    let jl = Matrix3::identity() + k * b + k * k * c;
    Pose::new(so3_exp(&w), jl * v)
}

/// Generalized pose difference `A ⊖ B = [log(Rot(B⁻¹A))∨; Trans(B⁻¹A)]`.
pub fn se3_ominus(a: &Pose, b: &Pose) -> Vector6<f64> {
    (b.inverse() * *a).log6()
}

/// Paired point sets for closed-form alignment: find `T` with `target ≈ T · source`.
#[derive(Clone, Debug, Default)]
pub struct CorrespondenceSet {
    pub source: Vec<Vector3<f64>>,
    pub target: Vec<Vector3<f64>>,
}

impl CorrespondenceSet {
    pub fn new(source: Vec<Vector3<f64>>, target: Vec<Vector3<f64>>) -> Self {
        Self { source, target }
    }

    pub fn len(&self) -> usize {
        self.source.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source.is_empty()
    }

    /// Sum of squared residuals `Σ ‖f_j − T f′_j‖²`.
    pub fn residual_sum(&self, pose: &Pose) -> f64 {
        self.source
            .iter()
            .zip(&self.target)
            .map(|(s, t)| (t - pose.transform_point(s)).norm_squared())
            .sum()
    }
}

fn centroid(points: &[Vector3<f64>]) -> Vector3<f64> {
    points.iter().fold(Vector3::zeros(), |acc, p| acc + p) / points.len() as f64
}

/// Closed-form least-squares rigid alignment via SVD of the cross-covariance.
///
/// Returns the pose minimizing `Σ‖f_j − (R f′_j + t)‖²` (source `f′`, target `f`)
/// and the minimized residual sum `e_pp`. A reflection solution is corrected by
/// negating the singular vector paired with the smallest singular value.
pub fn align_svd(c: &CorrespondenceSet) -> Result<(Pose, f64), GeomError> {
    if c.source.len() != c.target.len() {
        return Err(GeomError::CountMismatch {
            source_len: c.source.len(),
            target_len: c.target.len(),
        });
    }
    let n = c.source.len();
    if n < 3 {
        return Err(GeomError::TooFewCorrespondences(n));
    }
    let src_c = centroid(&c.source);
    let dst_c = centroid(&c.target);

    let mut h = Matrix3::zeros();
    let mut cov = Matrix3::zeros();
    for (s, t) in c.source.iter().zip(&c.target) {
        let qs = s - src_c;
        let qt = t - dst_c;
        h += qs * qt.transpose();
        cov += qs * qs.transpose();
    }

    let mut ev = cov.symmetric_eigenvalues().as_slice().to_vec();
    ev.sort_by(|a, b| b.total_cmp(a));
    if !(ev[0] > 0.0) || ev[1] <= 1e-12 * ev[0] {
        return Err(GeomError::CollinearCorrespondences);
    }

    let svd = SVD::new(h, true, true);
    let u = svd.u.unwrap();
    let mut v = svd.v_t.unwrap().transpose();
    let mut r = v * u.transpose();
    if r.determinant() < 0.0 {
        let k = argmin(svd.singular_values.as_slice());
        v.column_mut(k).neg_mut();
        r = v * u.transpose();
    }
    let rotation = Rotation(r);
    let pose = Pose::new(rotation, dst_c - r * src_c);
    let e_pp = c.residual_sum(&pose);
    Ok((pose, e_pp))
}

/// Squared Mahalanobis norm `eᵀ Σ⁻¹ e`.
pub fn mahalanobis_sq(e: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64, GeomError> {
    if cov.nrows() != e.len() || cov.ncols() != e.len() {
        return Err(GeomError::DimensionMismatch {
            vector: e.len(),
            rows: cov.nrows(),
            cols: cov.ncols(),
        });
    }
    let chol = cov.clone().cholesky().ok_or(GeomError::SingularCovariance)?;
    let l = chol.l();
    let min_diag = l.diagonal().iter().cloned().fold(f64::INFINITY, f64::min);
    let max_diag = l.diagonal().iter().cloned().fold(0.0, f64::max);
    if !(min_diag > 1e-12 * max_diag.max(f64::MIN_POSITIVE)) {
        return Err(GeomError::SingularCovariance);
    }
    let y = chol.solve(e);
    Ok(e.dot(&y))
}

fn argmin(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0)
}
