//! Pinhole intrinsics and rigid camera-to-world poses.
//!
//! Cameras look along their local −z axis with +x right and +y up.

use nalgebra::{Matrix3, Matrix4, Rotation3, Unit, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Tolerance on RᵀR = I and det(R) = 1 for a matrix to count as a pose.
pub const POSE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    /// Square-pixel camera with the principal point at the image center and
    /// the given horizontal field of view.
    pub fn from_fov(width: u32, height: u32, fov_x: f64) -> Result<Self> {
        let fx = 0.5 * width as f64 / (0.5 * fov_x).tan();
        Self::new(fx, fx, 0.5 * width as f64, 0.5 * height as f64, width, height)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.cx >= 0.0
            && self.cx < self.width as f64
            && self.cy >= 0.0
            && self.cy < self.height as f64;
        if ok {
            Ok(())
        } else {
            Err(Error::Invalid(format!("bad intrinsics {self:?}")))
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn contains(&self, row: u32, col: u32) -> bool {
        row < self.height && col < self.width
    }
}

/// Rigid transform mapping camera coordinates to world coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose(Matrix4<f64>);

impl CameraPose {
    pub fn identity() -> Self {
        Self(Matrix4::identity())
    }

    /// Validates the matrix; on failure returns the largest deviation found.
    pub fn from_matrix(m: Matrix4<f64>) -> std::result::Result<Self, f64> {
        let dev = rigid_deviation(&m);
        if dev <= POSE_TOLERANCE {
            Ok(Self(m))
        } else {
            Err(dev)
        }
    }

    pub fn from_rows(rows: [[f64; 4]; 4]) -> std::result::Result<Self, f64> {
        Self::from_matrix(Matrix4::from_fn(|r, c| rows[r][c]))
    }

    pub fn from_parts(rotation: &Matrix3<f64>, translation: &Vector3<f64>) -> Self {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(translation);
        Self(m)
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.0
    }

    pub fn rows(&self) -> [[f64; 4]; 4] {
        let mut out = [[0.0; 4]; 4];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = self.0[(r, c)];
            }
        }
        out
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        self.0.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.0.fixed_view::<3, 1>(0, 3).into_owned()
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation() * p + self.translation()
    }

    /// World-frame viewing direction (the camera's −z axis).
    pub fn optical_axis(&self) -> Vector3<f64> {
        -self.0.fixed_view::<3, 1>(0, 2).into_owned()
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &CameraPose) -> CameraPose {
        CameraPose(self.0 * other.0)
    }

    /// Rotates the camera about one of its own axes, keeping its center fixed.
    pub fn rotated_local(&self, axis: &Unit<Vector3<f64>>, angle: f64) -> CameraPose {
        let delta = Rotation3::from_axis_angle(axis, angle);
        let r = self.rotation() * delta.matrix();
        CameraPose::from_parts(&r, &self.translation())
    }
}

impl Default for CameraPose {
    fn default() -> Self {
        Self::identity()
    }
}

/// Largest of: entrywise |RᵀR − I|, |det R − 1|, and |bottom row − [0,0,0,1]|.
pub fn rigid_deviation(m: &Matrix4<f64>) -> f64 {
    if m.iter().any(|v| !v.is_finite()) {
        return f64::INFINITY;
    }
    let r: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into_owned();
    let ortho = (r.transpose() * r - Matrix3::identity()).amax();
    let det = (r.determinant() - 1.0).abs();
    let bottom = (m[(3, 0)].abs())
        .max(m[(3, 1)].abs())
        .max(m[(3, 2)].abs())
        .max((m[(3, 3)] - 1.0).abs());
    ortho.max(det).max(bottom)
}

impl Serialize for CameraPose {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for CameraPose {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = <[[f64; 4]; 4]>::deserialize(d)?;
        CameraPose::from_rows(rows)
            .map_err(|dev| serde::de::Error::custom(format!("not a rigid transform ({dev:.3e})")))
    }
}
