//! Undistorted pinhole camera with inverse-depth back-projection.

use nalgebra::{Matrix2x3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest camera-frame depth (meters) accepted by the projection.
pub const Z_MIN: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PinholeIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: f64,
    pub height: f64,
}

impl PinholeIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: f64, height: f64) -> Result<Self> {
        let k = Self { fx, fy, cx, cy, width, height };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let all_finite = [self.fx, self.fy, self.cx, self.cy, self.width, self.height].iter().all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::Validation("intrinsics must be finite".into()));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::Validation(format!("focal lengths must be positive (fx={}, fy={})", self.fx, self.fy)));
        }
        if !(self.cx > 0.0 && self.cx < self.width && self.cy > 0.0 && self.cy < self.height) {
            return Err(Error::Validation(format!(
                "principal point ({}, {}) outside image {}x{}",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn contains(&self, p: &Pixel) -> bool {
        p.u >= 0.0 && p.u < self.width && p.v >= 0.0 && p.v < self.height
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pixel {
    pub u: f64,
    pub v: f64,
}

impl Pixel {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn to_vector(self) -> Vector2<f64> {
        Vector2::new(self.u, self.v)
    }

    pub fn from_vector(v: &Vector2<f64>) -> Self {
        Self { u: v.x, v: v.y }
    }
}

fn check_depth(z: f64) -> Result<()> {
    if z > Z_MIN {
        Ok(())
    } else {
        Err(Error::CheiralityViolation { depth: z, context: None })
    }
}

pub fn project(k: &PinholeIntrinsics, x: &Vector3<f64>) -> Result<Pixel> {
    check_depth(x.z)?;
    Ok(Pixel { u: k.fx * x.x / x.z + k.cx, v: k.fy * x.y / x.z + k.cy })
}

/// Camera-frame point at inverse depth `d` along the ray through `p`.
pub fn back_project(k: &PinholeIntrinsics, p: &Pixel, d: f64) -> Result<Vector3<f64>> {
    if !(d > 0.0) {
        return Err(Error::InvalidInverseDepth(d));
    }
    Ok(Vector3::new((p.u - k.cx) / k.fx, (p.v - k.cy) / k.fy, 1.0) / d)
}

/// `∂Π/∂X` at `X`.
pub fn project_jacobian(k: &PinholeIntrinsics, x: &Vector3<f64>) -> Result<Matrix2x3<f64>> {
    check_depth(x.z)?;
    let iz = 1.0 / x.z;
    let iz2 = iz * iz;
    Ok(Matrix2x3::new(k.fx * iz, 0.0, -k.fx * x.x * iz2, 0.0, k.fy * iz, -k.fy * x.y * iz2))
}
