//! SO(3) / SE(3) group elements and their exponential and logarithm maps.
//!
//! Poses are camera-to-world transforms. Tangent vectors are ordered
//! rotation first, `(phi, rho)`. The retraction is a right perturbation,
//! `T ⊞ ξ = T · Exp(ξ)`, so every Jacobian in this crate is taken with
//! respect to a body-frame increment.

use std::fmt;

use nalgebra::{Matrix3, Matrix4, Matrix6, Quaternion, Rotation3, UnitQuaternion, Vector3, Vector6};

/// Below this angle (radians) the closed forms switch to Taylor expansions.
pub const SMALL_ANGLE: f64 = 1e-6;

/// Skew-symmetric matrix `[v]×` with `[v]× w = v × w`.
#[inline]
pub fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

#[inline]
pub fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// A proper rotation matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation {
    matrix: Matrix3<f64>,
}

impl Rotation {
    pub fn identity() -> Self {
        Self { matrix: Matrix3::identity() }
    }

    /// Wraps a matrix without checking orthonormality.
    pub fn from_matrix_unchecked(matrix: Matrix3<f64>) -> Self {
        Self { matrix }
    }

    /// Wraps a matrix if `RᵀR = I` and `det R = 1` within `tol`.
    pub fn try_from_matrix(matrix: Matrix3<f64>, tol: f64) -> Option<Self> {
        let ortho = (matrix.transpose() * matrix - Matrix3::identity()).abs().max();
        let det = matrix.determinant();
        (ortho <= tol && (det - 1.0).abs() <= tol).then_some(Self { matrix })
    }

    pub fn from_quaternion(q: &UnitQuaternion<f64>) -> Self {
        Self { matrix: *q.to_rotation_matrix().matrix() }
    }

    pub fn to_quaternion(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(self.matrix))
    }

    #[inline]
    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.matrix
    }

    pub fn compose(&self, other: &Rotation) -> Rotation {
        Rotation { matrix: self.matrix * other.matrix }
    }

    pub fn inverse(&self) -> Rotation {
        Rotation { matrix: self.matrix.transpose() }
    }

    #[inline]
    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.matrix * v
    }
}

/// Element of se(3), rotation part first.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TangentVector {
    pub phi: Vector3<f64>,
    pub rho: Vector3<f64>,
}

impl TangentVector {
    pub fn new(phi: Vector3<f64>, rho: Vector3<f64>) -> Self {
        Self { phi, rho }
    }

    pub fn zero() -> Self {
        Self { phi: Vector3::zeros(), rho: Vector3::zeros() }
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self { phi: Vector3::new(v[0], v[1], v[2]), rho: Vector3::new(v[3], v[4], v[5]) }
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(self.phi.x, self.phi.y, self.phi.z, self.rho.x, self.rho.y, self.rho.z)
    }

    pub fn norm(&self) -> f64 {
        self.to_vector().norm()
    }
}

impl std::ops::Neg for TangentVector {
    type Output = TangentVector;
    fn neg(self) -> TangentVector {
        TangentVector { phi: -self.phi, rho: -self.rho }
    }
}

/// Rigid transform in SE(3).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub rotation: Rotation,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Self { rotation: Rotation::identity(), translation: Vector3::zeros() }
    }

    pub fn new(rotation: Rotation, translation: Vector3<f64>) -> Self {
        Self { rotation, translation }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self { rotation: Rotation::identity(), translation }
    }

    pub fn compose(&self, other: &Pose) -> Pose {
        compose(self, other)
    }

    pub fn inverse(&self) -> Pose {
        inverse(self)
    }

    #[inline]
    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.matrix * p + self.translation
    }

    /// 4×4 homogeneous matrix.
    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation.matrix);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Adjoint in `(phi, rho)` ordering: `T Exp(ξ) T⁻¹ = Exp(Ad_T ξ)`.
    pub fn adjoint(&self) -> Matrix6<f64> {
        let r = self.rotation.matrix;
        let mut ad = Matrix6::zeros();
        ad.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
        ad.fixed_view_mut::<3, 3>(3, 3).copy_from(&r);
        ad.fixed_view_mut::<3, 3>(3, 0).copy_from(&(hat(&self.translation) * r));
        ad
    }

    /// `(qw, qx, qy, qz, tx, ty, tz)`, with `qw ≥ 0`.
    pub fn to_array7(&self) -> [f64; 7] {
        let q = self.rotation.to_quaternion();
        let mut c = *q.quaternion();
        if c.w < 0.0 {
            c = -c;
        }
        let t = self.translation;
        [c.w, c.i, c.j, c.k, t.x, t.y, t.z]
    }

    /// Inverse of [`Pose::to_array7`]; the quaternion is normalized on read.
    /// Returns `None` for a zero or non-finite quaternion.
    pub fn from_array7(a: &[f64; 7]) -> Option<Pose> {
        let q = Quaternion::new(a[0], a[1], a[2], a[3]);
        let n = q.norm();
        if !(n.is_finite() && n > 0.0) || a[4..].iter().any(|v| !v.is_finite()) {
            return None;
        }
        let uq = UnitQuaternion::from_quaternion(q);
        Some(Pose::new(Rotation::from_quaternion(&uq), Vector3::new(a[4], a[5], a[6])))
    }
}

impl fmt::Display for Pose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let a = self.to_array7();
        write!(
            f,
            "Pose(q=[{:.6}, {:.6}, {:.6}, {:.6}], t=[{:.6}, {:.6}, {:.6}])",
            a[0], a[1], a[2], a[3], a[4], a[5], a[6]
        )
    }
}

pub fn so3_exp(omega: &Vector3<f64>) -> Rotation {
    let theta2 = omega.norm_squared();
    let w = hat(omega);
    let matrix = if theta2 < SMALL_ANGLE * SMALL_ANGLE {
        Matrix3::identity() + w + 0.5 * w * w
    } else {
        let theta = theta2.sqrt();
        let a = theta.sin() / theta;
        let b = (1.0 - theta.cos()) / theta2;
        Matrix3::identity() + a * w + b * w * w
    };
    Rotation { matrix }
}

/// Principal logarithm, `‖ω‖ ≤ π`.
pub fn so3_log(r: &Rotation) -> Vector3<f64> {
    let m = r.matrix;
    let axis_sin = 0.5 * vee(&(m - m.transpose()));
    let cos_theta = (0.5 * (m.trace() - 1.0)).clamp(-1.0, 1.0);
    let sin_theta = axis_sin.norm();
    let theta = sin_theta.atan2(cos_theta);

    if theta < SMALL_ANGLE {
        // sinθ/θ ≈ 1 − θ²/6
        return axis_sin * (1.0 + theta * theta / 6.0);
    }
    if cos_theta > -0.9 {
        return axis_sin * (theta / sin_theta);
    }

    // Near the cut locus: aaᵀ = (sym(R) − cosθ I) / (1 − cosθ); take the
    // column with the largest diagonal.
    let sym = 0.5 * (m + m.transpose());
    let outer = (sym - Matrix3::identity() * cos_theta) / (1.0 - cos_theta);
    let k = (0..3).max_by(|&a, &b| outer[(a, a)].total_cmp(&outer[(b, b)])).unwrap_or(0);
    let mut axis: Vector3<f64> = outer.column(k) / outer[(k, k)].max(0.0).sqrt();
    axis.normalize_mut();
    if axis.dot(&axis_sin) < 0.0 {
        axis = -axis;
    }
    axis * theta
}

/// Left Jacobian of SO(3).
pub fn so3_left_jacobian(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = phi.norm_squared();
    let w = hat(phi);
    if theta2 < 1e-10 {
        return Matrix3::identity() + 0.5 * w + w * w / 6.0;
    }
    let theta = theta2.sqrt();
    Matrix3::identity() + (1.0 - theta.cos()) / theta2 * w + (theta - theta.sin()) / (theta2 * theta) * w * w
}

/// Inverse of the SO(3) left Jacobian, valid for `‖φ‖ < 2π`.
pub fn so3_left_jacobian_inv(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = phi.norm_squared();
    let w = hat(phi);
    if theta2 < 1e-10 {
        return Matrix3::identity() - 0.5 * w + w * w / 12.0;
    }
    let theta = theta2.sqrt();
    let half = 0.5 * theta;
    let c = 1.0 / theta2 - half.cos() / (half.sin() * 2.0 * theta);
    Matrix3::identity() - 0.5 * w + c * w * w
}

pub fn so3_right_jacobian(phi: &Vector3<f64>) -> Matrix3<f64> {
    so3_left_jacobian(&-phi)
}

pub fn so3_right_jacobian_inv(phi: &Vector3<f64>) -> Matrix3<f64> {
    so3_left_jacobian_inv(&-phi)
}

/// Coupling block of the SE(3) left Jacobian (translation row, rotation column).
fn se3_q_block(phi: &Vector3<f64>, rho: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = phi.norm_squared();
    let p = hat(phi);
    let r = hat(rho);
    let (c1, c2, c3) = if theta2 < 1e-6 {
        (1.0 / 6.0 - theta2 / 120.0, 1.0 / 24.0 - theta2 / 720.0, 1.0 / 120.0 - theta2 / 2520.0)
    } else {
        let theta = theta2.sqrt();
        let (s, c) = theta.sin_cos();
        (
            (theta - s) / (theta2 * theta),
            (theta2 + 2.0 * c - 2.0) / (2.0 * theta2 * theta2),
            (2.0 * theta - 3.0 * s + theta * c) / (2.0 * theta2 * theta2 * theta),
        )
    };
    let pr = p * r;
    let rp = r * p;
    let prp = pr * p;
    0.5 * r + c1 * (pr + rp + prp) + c2 * (p * pr + rp * p - 3.0 * prp) + c3 * (prp * p + p * prp)
}

/// Left Jacobian of SE(3) in `(phi, rho)` ordering.
pub fn se3_left_jacobian(xi: &TangentVector) -> Matrix6<f64> {
    let j = so3_left_jacobian(&xi.phi);
    let q = se3_q_block(&xi.phi, &xi.rho);
    let mut out = Matrix6::zeros();
    out.fixed_view_mut::<3, 3>(0, 0).copy_from(&j);
    out.fixed_view_mut::<3, 3>(3, 3).copy_from(&j);
    out.fixed_view_mut::<3, 3>(3, 0).copy_from(&q);
    out
}

pub fn se3_left_jacobian_inv(xi: &TangentVector) -> Matrix6<f64> {
    let jinv = so3_left_jacobian_inv(&xi.phi);
    let q = se3_q_block(&xi.phi, &xi.rho);
    let mut out = Matrix6::zeros();
    out.fixed_view_mut::<3, 3>(0, 0).copy_from(&jinv);
    out.fixed_view_mut::<3, 3>(3, 3).copy_from(&jinv);
    out.fixed_view_mut::<3, 3>(3, 0).copy_from(&(-jinv * q * jinv));
    out
}

pub fn se3_right_jacobian(xi: &TangentVector) -> Matrix6<f64> {
    se3_left_jacobian(&-*xi)
}

/// `∂ Log(Exp(ξ) Exp(δ)) / ∂δ` at `δ = 0`.
pub fn se3_right_jacobian_inv(xi: &TangentVector) -> Matrix6<f64> {
    se3_left_jacobian_inv(&-*xi)
}

pub fn se3_exp(xi: &TangentVector) -> Pose {
    let rotation = so3_exp(&xi.phi);
    let translation = so3_left_jacobian(&xi.phi) * xi.rho;
    Pose { rotation, translation }
}

pub fn se3_log(t: &Pose) -> TangentVector {
    let phi = so3_log(&t.rotation);
    let rho = so3_left_jacobian_inv(&phi) * t.translation;
    TangentVector { phi, rho }
}

pub fn compose(a: &Pose, b: &Pose) -> Pose {
    Pose { rotation: a.rotation.compose(&b.rotation), translation: a.rotation.matrix * b.translation + a.translation }
}

pub fn inverse(t: &Pose) -> Pose {
    let rt = t.rotation.inverse();
    Pose { translation: -(rt.matrix * t.translation), rotation: rt }
}

/// Right retraction `T · Exp(ξ)`.
pub fn boxplus(t: &Pose, xi: &TangentVector) -> Pose {
    compose(t, &se3_exp(xi))
}

/// Local coordinates of `a` around `b`: `Log(b⁻¹ a)`.
pub fn boxminus(a: &Pose, b: &Pose) -> TangentVector {
    se3_log(&compose(&inverse(b), a))
}
