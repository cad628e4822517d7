//! Residuals and analytic Jacobians for the factor types of the graph.
//!
//! Pose Jacobians are with respect to right perturbations `T · Exp(ξ)`,
//! `ξ = (δφ, δp)`. Residuals are returned unwhitened; [`NoiseModel`] carries
//! the square-root information used when the graph is linearized.

use nalgebra::{Matrix2, Matrix2x3, Matrix2x6, Matrix3, Matrix6, SMatrix, Vector2, Vector3, Vector6};

use crate::camera::{self, PinholeIntrinsics, Pixel};
use crate::error::{Error, Result};
use crate::liegroup::{self, hat, Pose};

/// Gaussian noise with covariance `Σ` and whitener `W` such that `WᵀW = Σ⁻¹`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseModel<const D: usize> {
    covariance: SMatrix<f64, D, D>,
    whitener: SMatrix<f64, D, D>,
}

impl<const D: usize> NoiseModel<D> {
    pub fn new(covariance: SMatrix<f64, D, D>) -> Result<Self> {
        let asym = (covariance - covariance.transpose()).abs().max();
        let scale = covariance.abs().max();
        if !covariance.iter().all(|v| v.is_finite()) || asym > 1e-12 * scale.max(1.0) {
            return Err(Error::Validation("noise covariance must be finite and symmetric".into()));
        }
        let chol = covariance.cholesky().ok_or(Error::NotPositiveDefinite { pivot: 0, value: covariance[(0, 0)] })?;
        let l = chol.l();
        let whitener = l
            .solve_lower_triangular(&SMatrix::<f64, D, D>::identity())
            .ok_or(Error::NotPositiveDefinite { pivot: 0, value: 0.0 })?;
        Ok(Self { covariance, whitener })
    }

    pub fn isotropic(sigma: f64) -> Result<Self> {
        Self::new(SMatrix::<f64, D, D>::identity() * (sigma * sigma))
    }

    pub fn covariance(&self) -> &SMatrix<f64, D, D> {
        &self.covariance
    }

    pub fn whitener(&self) -> &SMatrix<f64, D, D> {
        &self.whitener
    }

    /// `eᵀ Σ⁻¹ e`.
    pub fn mahalanobis_sq(&self, e: &SMatrix<f64, D, 1>) -> f64 {
        (self.whitener * e).norm_squared()
    }
}

/// Ternary optical-flow factor between keyframes `i`, `j` and an inverse depth
/// of a pixel sampled in `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowFactor {
    pub frame_i: usize,
    pub frame_j: usize,
    pub pixel: Pixel,
    pub target: Pixel,
    pub depth_var: usize,
    pub noise: NoiseModel<2>,
}

impl FlowFactor {
    pub fn new(
        frame_i: usize,
        frame_j: usize,
        pixel: Pixel,
        target: Pixel,
        depth_var: usize,
        noise: NoiseModel<2>,
    ) -> Result<Self> {
        if frame_i == frame_j {
            return Err(Error::Validation(format!("flow factor connects keyframe {frame_i} to itself")));
        }
        Ok(Self { frame_i, frame_j, pixel, target, depth_var, noise })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PriorFactor {
    pub frame: usize,
    pub predicted_pose: Pose,
    pub noise: NoiseModel<6>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BetweenFactor {
    pub frame_i: usize,
    pub frame_j: usize,
    /// Measurement of `T_i⁻¹ T_j`.
    pub relative_pose: Pose,
    pub noise: NoiseModel<6>,
}

impl BetweenFactor {
    pub fn new(frame_i: usize, frame_j: usize, relative_pose: Pose, noise: NoiseModel<6>) -> Result<Self> {
        if frame_i == frame_j {
            return Err(Error::Validation(format!("between factor connects keyframe {frame_i} to itself")));
        }
        Ok(Self { frame_i, frame_j, relative_pose, noise })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionFactor {
    pub frame: usize,
    pub landmark_var: usize,
    pub pixel: Pixel,
    pub noise: NoiseModel<2>,
}

/// Camera-`j` coordinates of the point seen at `pixel` in camera `i`.
struct FlowGeometry {
    xi: Vector3<f64>,
    xj: Vector3<f64>,
    rji: Matrix3<f64>,
}

fn flow_geometry(ti: &Pose, tj: &Pose, d: f64, f: &FlowFactor, k: &PinholeIntrinsics) -> Result<FlowGeometry> {
    let xi = camera::back_project(k, &f.pixel, d)?;
    let rel = liegroup::compose(&tj.inverse(), ti);
    Ok(FlowGeometry { xj: rel.transform_point(&xi), rji: *rel.rotation.matrix(), xi })
}

/// `e = p* − Π(T_j⁻¹ T_i Π⁻¹(p_i, d))`.
pub fn flow_residual(ti: &Pose, tj: &Pose, d: f64, f: &FlowFactor, k: &PinholeIntrinsics) -> Result<Vector2<f64>> {
    let g = flow_geometry(ti, tj, d, f, k)?;
    let p = camera::project(k, &g.xj)?;
    Ok(f.target.to_vector() - p.to_vector())
}

/// Jacobians of [`flow_residual`] with respect to `T_i`, `T_j` and `d`.
pub fn flow_jacobians(
    ti: &Pose,
    tj: &Pose,
    d: f64,
    f: &FlowFactor,
    k: &PinholeIntrinsics,
) -> Result<(Matrix2x6<f64>, Matrix2x6<f64>, Vector2<f64>)> {
    let g = flow_geometry(ti, tj, d, f, k)?;
    let jp = -camera::project_jacobian(k, &g.xj)?;

    // x_j = R_ji Exp(ξ_i) x_i + t_ji  →  ∂x_j/∂ξ_i = R_ji [−[x_i]×, I]
    let mut dxi = nalgebra::Matrix3x6::zeros();
    dxi.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-g.rji * hat(&g.xi)));
    dxi.fixed_view_mut::<3, 3>(0, 3).copy_from(&g.rji);

    // x_j = Exp(−ξ_j) x_j  →  ∂x_j/∂ξ_j = [[x_j]×, −I]
    let mut dxj = nalgebra::Matrix3x6::zeros();
    dxj.fixed_view_mut::<3, 3>(0, 0).copy_from(&hat(&g.xj));
    dxj.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-Matrix3::identity()));

    let dxd = g.rji * (-g.xi / d);
    Ok((jp * dxi, jp * dxj, jp * dxd))
}

/// `r = X ⊟ X^pred`.
pub fn prior_residual(x: &Pose, f: &PriorFactor) -> Vector6<f64> {
    liegroup::boxminus(x, &f.predicted_pose).to_vector()
}

pub fn prior_jacobian(x: &Pose, f: &PriorFactor) -> Matrix6<f64> {
    liegroup::se3_right_jacobian_inv(&liegroup::boxminus(x, &f.predicted_pose))
}

/// `r = Log(M⁻¹ T_i⁻¹ T_j)`.
pub fn between_residual(ti: &Pose, tj: &Pose, f: &BetweenFactor) -> Vector6<f64> {
    between_error(ti, tj, f).to_vector()
}

fn between_error(ti: &Pose, tj: &Pose, f: &BetweenFactor) -> liegroup::TangentVector {
    let predicted = liegroup::compose(&ti.inverse(), tj);
    liegroup::se3_log(&liegroup::compose(&f.relative_pose.inverse(), &predicted))
}

pub fn between_jacobians(ti: &Pose, tj: &Pose, f: &BetweenFactor) -> (Matrix6<f64>, Matrix6<f64>) {
    let r = between_error(ti, tj, f);
    let jr_inv = liegroup::se3_right_jacobian_inv(&r);
    let tji = liegroup::compose(&tj.inverse(), ti);
    (-jr_inv * tji.adjoint(), jr_inv)
}

/// `r = z − Π(T⁻¹ L)`.
pub fn projection_residual(
    t: &Pose,
    landmark: &Vector3<f64>,
    f: &ProjectionFactor,
    k: &PinholeIntrinsics,
) -> Result<Vector2<f64>> {
    let pc = t.inverse().transform_point(landmark);
    Ok(f.pixel.to_vector() - camera::project(k, &pc)?.to_vector())
}

pub fn projection_jacobians(
    t: &Pose,
    landmark: &Vector3<f64>,
    _f: &ProjectionFactor,
    k: &PinholeIntrinsics,
) -> Result<(Matrix2x6<f64>, Matrix2x3<f64>)> {
    let pc = t.inverse().transform_point(landmark);
    let jp = -camera::project_jacobian(k, &pc)?;
    let mut dpose = nalgebra::Matrix3x6::zeros();
    dpose.fixed_view_mut::<3, 3>(0, 0).copy_from(&hat(&pc));
    dpose.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-Matrix3::identity()));
    Ok((jp * dpose, jp * t.rotation.matrix().transpose()))
}

/// Default flow noise: one pixel, isotropic.
pub fn default_flow_noise() -> NoiseModel<2> {
    NoiseModel::new(Matrix2::identity()).expect("identity is SPD")
}
