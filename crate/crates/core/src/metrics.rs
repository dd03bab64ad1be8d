//! Percentage pose errors over a set of estimates.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::camera::CameraPose;

/// Default test point for [`point_transform_error`].
pub const P_TEST: [f64; 3] = [1.0, 1.0, 1.0];

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Mean distance between the test point mapped by the ground truth and by
/// each estimate, as a percentage of `d_max`.
pub fn point_transform_error(
    gt: &CameraPose,
    estimates: &[CameraPose],
    p_test: &Vector3<f64>,
    d_max: f64,
) -> f64 {
    let target = gt.transform_point(p_test);
    mean(
        estimates
            .iter()
            .map(|t| (target - t.transform_point(p_test)).norm()),
    ) / d_max
        * 100.0
}

/// Mean camera-center displacement as a percentage of `d_max`.
pub fn translation_error(gt: &CameraPose, estimates: &[CameraPose], d_max: f64) -> f64 {
    let center = gt.translation();
    mean(estimates.iter().map(|t| (center - t.translation()).norm())) / d_max * 100.0
}

fn angle_between(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    // atan2 form stays accurate near 0 and π
    a.cross(b).norm().atan2(a.dot(b))
}

/// Mean angle between optical axes as a percentage of 180°.
pub fn rotation_error(gt: &CameraPose, estimates: &[CameraPose]) -> f64 {
    let axis = gt.optical_axis();
    mean(
        estimates
            .iter()
            .map(|t| angle_between(&axis, &t.optical_axis()).to_degrees()),
    ) / 180.0
        * 100.0
}

/// Geodesic SO(3) variant of [`rotation_error`]: the full relative rotation
/// angle, roll included, as a percentage of 180°.
pub fn geodesic_rotation_error(gt: &CameraPose, estimates: &[CameraPose]) -> f64 {
    let r_gt = gt.rotation();
    mean(estimates.iter().map(|t| {
        let rel = r_gt.transpose() * t.rotation();
        let cos = ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        cos.acos().to_degrees()
    })) / 180.0
        * 100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseErrorReport {
    pub point_error_pct: f64,
    pub translation_error_pct: f64,
    pub rotation_error_pct: f64,
    /// (point, translation, rotation) for each estimate.
    pub per_estimate: Vec<[f64; 3]>,
}

impl PoseErrorReport {
    pub fn new(gt: &CameraPose, estimates: &[CameraPose], d_max: f64) -> Self {
        let p = Vector3::from(P_TEST);
        Self {
            point_error_pct: point_transform_error(gt, estimates, &p, d_max),
            translation_error_pct: translation_error(gt, estimates, d_max),
            rotation_error_pct: rotation_error(gt, estimates),
            per_estimate: estimates
                .iter()
                .map(|e| {
                    let one = std::slice::from_ref(e);
                    [
                        point_transform_error(gt, one, &p, d_max),
                        translation_error(gt, one, d_max),
                        rotation_error(gt, one),
                    ]
                })
                .collect(),
        }
    }
}
