//! Likelihood as a function of rotation away from the true pose.

use std::io::Write;

use nalgebra::{Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{select_pixels, DetectorConfig, Mode, Strategy};
use crate::field::{ForwardPassLedger, RadianceField};
use crate::localizer::{evaluate_error, raw_weight};
use crate::render::RenderSettings;
use crate::scene_data::Dataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CurveSpec {
    pub strategy: Strategy,
    pub mode: Mode,
    pub n_pixels: usize,
    /// Rotation axis in the camera frame.
    pub axis: [f64; 3],
    pub range_deg: f64,
    pub step_deg: f64,
    pub n_pts: usize,
    pub sigma_e: f64,
    pub seed: u64,
    pub detectors: DetectorConfig,
}

impl Default for CurveSpec {
    fn default() -> Self {
        Self {
            strategy: Strategy::Orb,
            mode: Mode::Pixel,
            n_pixels: 1000,
            axis: [1.0, 0.0, 0.0],
            range_deg: 30.0,
            step_deg: 1.0,
            n_pts: 64,
            sigma_e: 2.0,
            seed: 0,
            detectors: DetectorConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub angle_deg: f64,
    pub error: f64,
    /// `exp(−e/σ_e)`.
    pub likelihood: f64,
    /// Likelihood rescaled so the curve spans [0, 1].
    pub normalized: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodCurve {
    pub strategy: Strategy,
    pub points: Vec<CurvePoint>,
    pub fwhm_deg: f64,
    /// Pixels that came from random filling rather than the detector.
    pub filled: usize,
}

impl LikelihoodCurve {
    pub fn peak_angle(&self) -> f64 {
        self.points
            .iter()
            .fold(None::<&CurvePoint>, |best, p| match best {
                Some(b) if b.likelihood >= p.likelihood => Some(b),
                _ => Some(p),
            })
            .map_or(0.0, |p| p.angle_deg)
    }

    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["angle_deg", "error", "likelihood", "normalized"])?;
        for p in &self.points {
            w.write_record([
                p.angle_deg.to_string(),
                p.error.to_string(),
                p.likelihood.to_string(),
                p.normalized.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::Io { path: "curve".into(), source: e })
    }
}

/// Full width at half maximum of a sampled curve. The curve is min-max
/// normalized first, crossings are linearly interpolated, and a side that
/// never drops below half counts up to the end of the sampled range.
pub fn fwhm(angles: &[f64], values: &[f64]) -> f64 {
    assert_eq!(angles.len(), values.len());
    if values.is_empty() {
        return 0.0;
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let first = angles[0];
    let last = angles[angles.len() - 1];
    if !(hi > lo) {
        return last - first;
    }
    let norm: Vec<f64> = values.iter().map(|v| (v - lo) / (hi - lo)).collect();
    let peak = norm.iter().position(|&v| v == 1.0).unwrap_or(0);
    let cross = |i: usize, j: usize| {
        // norm[i] >= 0.5 > norm[j]
        let t = (norm[i] - 0.5) / (norm[i] - norm[j]);
        angles[i] + t * (angles[j] - angles[i])
    };
    let left = (0..peak)
        .rev()
        .find(|&j| norm[j] < 0.5)
        .map_or(first, |j| cross(j + 1, j));
    let right = (peak + 1..norm.len())
        .find(|&j| norm[j] < 0.5)
        .map_or(last, |j| cross(j - 1, j));
    right - left
}

/// Rotates the frame's true pose about `spec.axis` in steps of `step_deg`
/// over ±`range_deg` and scores each pose on one fixed pixel selection.
pub fn likelihood_curve(
    field: &RadianceField,
    dataset: &Dataset,
    frame: usize,
    spec: &CurveSpec,
) -> Result<LikelihoodCurve> {
    if !(spec.step_deg > 0.0) || !(spec.range_deg >= 0.0) {
        return Err(Error::Config("curve step must be positive".into()));
    }
    if !(spec.sigma_e > 0.0) {
        return Err(Error::Config("sigma_e must be positive".into()));
    }
    let axis = Unit::try_new(Vector3::from(spec.axis), 1e-12)
        .ok_or_else(|| Error::Config("rotation axis is zero".into()))?;
    let f = dataset
        .frames
        .get(frame)
        .ok_or_else(|| Error::Config(format!("frame {frame} not in dataset")))?;
    let pixels = select_pixels(
        spec.strategy,
        &f.image,
        spec.n_pixels,
        spec.mode,
        0,
        spec.seed,
        &spec.detectors,
    )?;
    let settings = RenderSettings::new(dataset.near, dataset.far, spec.n_pts, dataset.background)?;
    let ledger = ForwardPassLedger::new();
    let steps = (spec.range_deg / spec.step_deg + 1e-9).floor() as i64;
    let mut points = Vec::with_capacity(2 * steps as usize + 1);
    for k in -steps..=steps {
        let angle_deg = k as f64 * spec.step_deg;
        let pose = f.pose.rotated_local(&axis, angle_deg.to_radians());
        let error = evaluate_error(
            field,
            &pose,
            &f.image,
            &pixels,
            &dataset.intrinsics,
            &settings,
            &ledger,
        )?;
        points.push(CurvePoint {
            angle_deg,
            error,
            likelihood: raw_weight(error, spec.sigma_e),
            normalized: 0.0,
        });
    }
    let lo = points.iter().map(|p| p.likelihood).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.likelihood).fold(f64::NEG_INFINITY, f64::max);
    for p in &mut points {
        p.normalized = if hi > lo { (p.likelihood - lo) / (hi - lo) } else { 1.0 };
    }
    let angles: Vec<f64> = points.iter().map(|p| p.angle_deg).collect();
    let values: Vec<f64> = points.iter().map(|p| p.likelihood).collect();
    Ok(LikelihoodCurve {
        strategy: spec.strategy,
        fwhm_deg: fwhm(&angles, &values),
        points,
        filled: pixels.filled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn fwhm_of_triangle() {
        let angles: Vec<f64> = (-10..=10).map(f64::from).collect();
        let values: Vec<f64> = angles.iter().map(|a| 10.0 - a.abs()).collect();
        assert_relative_eq!(fwhm(&angles, &values), 10.0, epsilon = 1e-12);
    }

    #[test]
    fn fwhm_interpolates_between_samples() {
        let angles = [-2.0, -1.0, 0.0, 1.0, 2.0];
        let values = [0.0, 0.25, 1.0, 0.75, 0.0];
        // crossings at -2/3 and 4/3
        assert_relative_eq!(fwhm(&angles, &values), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn fwhm_clips_to_range() {
        let angles = [0.0, 1.0, 2.0, 3.0];
        let values = [1.0, 0.9, 0.8, 0.0];
        let w = fwhm(&angles, &values);
        assert_relative_eq!(w, 2.0 + 0.3 / 0.8, epsilon = 1e-12);
        assert_eq!(fwhm(&angles, &[1.0; 4]), 3.0);
    }

    #[test]
    fn invalid_spec_is_rejected() {
        use crate::scene_data::synthetic::{generate_synthetic_scene, SceneDescription};
        let desc = SceneDescription::single_sphere(1.0, [0.2, 0.4, 0.6]);
        let (d, f) = generate_synthetic_scene(&desc, 1, 16, 0).unwrap();
        let bad = CurveSpec { step_deg: 0.0, ..CurveSpec::default() };
        assert!(likelihood_curve(&f, &d, 0, &bad).is_err());
        assert!(likelihood_curve(&f, &d, 3, &CurveSpec::default()).is_err());
    }

    #[test]
    fn peak_is_at_zero_for_self_consistent_frame() {
        use crate::scene_data::synthetic::{generate_synthetic_scene, SceneDescription};
        let desc = SceneDescription::single_sphere(1.0, [0.2, 0.4, 0.6]);
        let (d, f) = generate_synthetic_scene(&desc, 1, 24, 3).unwrap();
        let spec = CurveSpec {
            strategy: Strategy::Rand,
            n_pixels: 200,
            range_deg: 10.0,
            step_deg: 2.0,
            ..CurveSpec::default()
        };
        let c = likelihood_curve(&f, &d, 0, &spec).unwrap();
        assert_eq!(c.points.len(), 11);
        assert_eq!(c.peak_angle(), 0.0);
        assert!(c.points[5].error < 1e-6);
        assert_relative_eq!(c.points[5].normalized, 1.0);
    }
}
