use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::camera::CameraPose;
use crate::error::{Error, Result};

/// Closest allowed distance of φ to ±π/2, where camera roll is undefined.
pub const POLE_MARGIN: f64 = 1e-6;

/// Camera placement on a sphere around the world origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphericalPose {
    /// Azimuth about world +z, radians.
    pub theta: f64,
    /// Elevation above the xy plane, radians.
    pub phi: f64,
    pub r: f64,
}

impl SphericalPose {
    pub fn new(theta: f64, phi: f64, r: f64) -> Result<Self> {
        let s = Self { theta, phi, r };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r > 0.0) || !self.theta.is_finite() {
            return Err(Error::Invalid(format!("bad spherical pose {self:?}")));
        }
        if !(self.phi.abs() < std::f64::consts::FRAC_PI_2 - POLE_MARGIN) {
            return Err(Error::Invalid(format!(
                "elevation {} at a pole leaves the camera roll undefined",
                self.phi
            )));
        }
        Ok(())
    }

    pub fn position(&self) -> Vector3<f64> {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        Vector3::new(self.r * cp * ct, self.r * cp * st, self.r * sp)
    }
}

/// Camera at the spherical position looking at the origin, with world +z
/// projecting to image up.
pub fn spherical_to_pose(s: &SphericalPose) -> Result<CameraPose> {
    s.validate()?;
    let eye = s.position();
    let back = eye.normalize();
    let right = Vector3::z().cross(&back).normalize();
    let up = back.cross(&right);
    let rot = Matrix3::from_columns(&[right, up, back]);
    Ok(CameraPose::from_parts(&rot, &eye))
}

/// Inverse of [`spherical_to_pose`] for look-at poses; only the camera
/// position is used.
pub fn pose_to_spherical(pose: &CameraPose) -> Result<SphericalPose> {
    let t = pose.translation();
    let r = t.norm();
    if !(r > 1e-12) {
        return Err(Error::Invalid(
            "camera at the origin has no spherical coordinates".into(),
        ));
    }
    let s = SphericalPose {
        theta: t.y.atan2(t.x),
        phi: (t.z / r).clamp(-1.0, 1.0).asin(),
        r,
    };
    s.validate()?;
    Ok(s)
}
