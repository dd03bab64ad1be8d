//! Sampling-based pose estimation.
//!
//! Each iteration renders the selected pixels at every candidate pose,
//! scores the pose by the mean absolute color error, converts errors to
//! weights `exp(−e/σ_e)`, and resamples. The final estimates are the
//! best-weighted particles of the last evaluated iteration.

mod resample;
mod spherical;

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::{CameraPose, Intrinsics};
use crate::error::{Error, Result};
use crate::features::{DetectorConfig, Mode, PixelSelector, PixelSet, Strategy};
use crate::field::{ForwardPassLedger, RadianceField};
use crate::image_buf::ColorImage;
use crate::render::{render_pixels, RenderSettings};
use crate::rng::{derive, Stream};
use crate::scene_data::{PoseRange, WHITE};

pub use resample::{
    circular_mean_var, perturb_pose, rank_by_weight, resample_cem, resample_pick_perturb,
    wrap_angle, CEM_MIN_VARIANCE,
};
pub use spherical::{pose_to_spherical, spherical_to_pose, SphericalPose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resampler {
    Cem,
    PickPerturb,
}

impl std::str::FromStr for Resampler {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cem" => Ok(Resampler::Cem),
            "pick_perturb" | "pick-perturb" => Ok(Resampler::PickPerturb),
            _ => Err(Error::Config(format!("unknown resampler '{s}'"))),
        }
    }
}

impl std::fmt::Display for Resampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Resampler::Cem => "cem",
            Resampler::PickPerturb => "pick_perturb",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LocalizerConfig {
    pub n_poses: usize,
    pub n_pixels: usize,
    pub n_pts: usize,
    pub max_iter: usize,
    pub sigma_e: f64,
    pub n_t: usize,
    pub strategy: Strategy,
    pub mode: Mode,
    pub resampler: Resampler,
    pub cem_elite_frac: f64,
    pub keep_frac: f64,
    /// Radians, at iteration 0.
    pub perturb_rot: f64,
    /// Scene units, at iteration 0.
    pub perturb_trans: f64,
    /// Per-iteration geometric decay of both perturbation magnitudes.
    pub perturb_decay: f64,
    pub seed: u64,
    pub background: [f64; 3],
    pub detectors: DetectorConfig,
}

impl Default for LocalizerConfig {
    fn default() -> Self {
        Self {
            n_poses: 45,
            n_pixels: 100,
            n_pts: 16,
            max_iter: 20,
            sigma_e: 2.0,
            n_t: 5,
            strategy: Strategy::MserRand,
            mode: Mode::Pixel,
            resampler: Resampler::Cem,
            cem_elite_frac: 0.25,
            keep_frac: 1.0 / 3.0,
            perturb_rot: 0.1,
            perturb_trans: 0.05 * 12.0,
            perturb_decay: 0.9,
            seed: 0,
            background: WHITE,
            detectors: DetectorConfig::default(),
        }
    }
}

impl LocalizerConfig {
    /// Sets the translation perturbation to 5% of the dataset scale.
    pub fn scaled_to(mut self, max_distance: f64) -> Self {
        self.perturb_trans = 0.05 * max_distance;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_t < 1 || self.n_poses < self.n_t {
            return fail("need n_poses >= n_t >= 1");
        }
        if self.max_iter < 1 {
            return fail("max_iter must be at least 1");
        }
        if !(self.sigma_e > 0.0) {
            return fail("sigma_e must be positive");
        }
        if !(self.cem_elite_frac > 0.0 && self.cem_elite_frac <= 1.0) {
            return fail("cem_elite_frac must be in (0, 1]");
        }
        if !(self.keep_frac > 0.0 && self.keep_frac < 1.0) {
            return fail("keep_frac must be in (0, 1)");
        }
        if self.n_pts < 2 {
            return fail("n_pts must be at least 2");
        }
        if !(self.perturb_rot >= 0.0 && self.perturb_trans >= 0.0 && self.perturb_decay > 0.0) {
            return fail("perturbation magnitudes must be non-negative");
        }
        Ok(())
    }

    /// Field evaluations one complete run costs.
    pub fn expected_forward_passes(&self) -> u64 {
        (self.max_iter * self.n_poses * self.mode.effective_pixels(self.n_pixels) * self.n_pts)
            as u64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub pose: CameraPose,
    /// Present for object-centric particles that lie on the look-at sphere.
    pub spherical: Option<SphericalPose>,
    pub weight: f64,
    pub last_error: f64,
}

/// Draws `n_poses` equally weighted particles from the range.
pub fn init_particles(range: &PoseRange, n_poses: usize, seed: u64) -> Result<Vec<Particle>> {
    range.validate()?;
    let mut out = Vec::with_capacity(n_poses);
    let w = 1.0 / n_poses as f64;
    for i in 0..n_poses {
        let mut rng = derive(seed, Stream::Init, i as u64, 0);
        let mut draw = |lo: f64, hi: f64| if hi > lo { rng.random_range(lo..=hi) } else { lo };
        let (pose, spherical) = match range {
            PoseRange::Object { theta, phi, r } => {
                let s = SphericalPose {
                    theta: draw(theta.lo, theta.hi),
                    phi: draw(phi.lo, phi.hi),
                    r: draw(r.lo, r.hi),
                };
                (spherical_to_pose(&s)?, Some(s))
            }
            PoseRange::Scene {
                anchors,
                rotation,
                translation,
            } => {
                let anchor = anchors[rng.random_range(0..anchors.len())];
                (perturb_pose(&anchor, *rotation, *translation, &mut rng), None)
            }
        };
        out.push(Particle {
            pose,
            spherical,
            weight: w,
            last_error: 0.0,
        });
    }
    Ok(out)
}

/// Mean over channels and rendered pixels of |observed − rendered|.
pub fn evaluate_error(
    field: &RadianceField,
    pose: &CameraPose,
    observed: &ColorImage,
    pixels: &PixelSet,
    k: &Intrinsics,
    settings: &RenderSettings,
    ledger: &ForwardPassLedger,
) -> Result<f64> {
    if pixels.coords.is_empty() {
        return Ok(0.0);
    }
    let rendered = render_pixels(field, pose, k, &pixels.coords, settings, ledger)?;
    let mut per_channel = [0.0; 3];
    for px in &rendered {
        let obs = observed.get(px.row, px.col);
        for c in 0..3 {
            per_channel[c] += (obs[c] - px.rgb[c]).abs();
        }
    }
    let n = rendered.len() as f64;
    Ok(per_channel.iter().map(|s| s / n).sum::<f64>() / 3.0)
}

/// `exp(−e/σ_e)` before normalization.
pub fn raw_weight(error: f64, sigma_e: f64) -> f64 {
    (-error / sigma_e).exp()
}

/// Normalized `exp(−e/σ_e)` weights.
pub fn weights_from_errors(errors: &[f64], sigma_e: f64) -> Vec<f64> {
    let raw: Vec<f64> = errors.iter().map(|&e| raw_weight(e, sigma_e)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub best_error: f64,
    pub mean_error: f64,
    pub forward_passes_cum: u64,
    pub top_pose: CameraPose,
    pub wall_time_ms: f64,
    /// Top `n_t` poses by weight this iteration.
    #[serde(skip)]
    pub top_poses: Vec<CameraPose>,
}

impl IterationRecord {
    /// Equality ignoring wall time.
    pub fn same_outcome(&self, other: &IterationRecord) -> bool {
        self.iteration == other.iteration
            && self.best_error.to_bits() == other.best_error.to_bits()
            && self.mean_error.to_bits() == other.mean_error.to_bits()
            && self.forward_passes_cum == other.forward_passes_cum
            && self.top_poses == other.top_poses
    }
}

#[derive(Debug, Clone)]
pub struct LocalizationResult {
    /// Best `n_t` particles of the last iteration, highest weight first.
    pub estimates: Vec<Particle>,
    pub trace: Vec<IterationRecord>,
    pub forward_passes: u64,
}

impl LocalizationResult {
    pub fn estimate_poses(&self) -> Vec<CameraPose> {
        self.estimates.iter().map(|p| p.pose).collect()
    }

    /// One JSON object per line.
    pub fn trace_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for rec in &self.trace {
            out.push_str(&serde_json::to_string(rec)?);
            out.push('\n');
        }
        Ok(out)
    }
}

pub fn localize(
    field: &RadianceField,
    observed: &ColorImage,
    config: &LocalizerConfig,
    range: &PoseRange,
    k: &Intrinsics,
    near: f64,
    far: f64,
) -> Result<LocalizationResult> {
    config.validate()?;
    range.validate()?;
    if config.resampler == Resampler::Cem && !matches!(range, PoseRange::Object { .. }) {
        return Err(Error::Config(
            "CEM resampling requires an object-centric pose range".into(),
        ));
    }
    if observed.width() != k.width || observed.height() != k.height {
        return Err(Error::Config(format!(
            "observed image is {}x{}, intrinsics say {}x{}",
            observed.width(),
            observed.height(),
            k.width,
            k.height
        )));
    }
    let settings = RenderSettings::new(near, far, config.n_pts, config.background)?;
    let selector = PixelSelector::new(
        config.strategy,
        config.mode,
        config.n_pixels,
        config.seed,
        observed,
        &config.detectors,
    )?;
    let ledger = ForwardPassLedger::new();
    let mut particles = init_particles(range, config.n_poses, config.seed)?;
    let mut trace = Vec::with_capacity(config.max_iter);

    for iteration in 0..config.max_iter {
        let started = Instant::now();
        let pixels = selector.select(iteration);
        let errors = particles
            .par_iter()
            .map(|p| evaluate_error(field, &p.pose, observed, &pixels, k, &settings, &ledger))
            .collect::<Result<Vec<f64>>>()?;
        let weights = weights_from_errors(&errors, config.sigma_e);
        for (p, (&e, &w)) in particles.iter_mut().zip(errors.iter().zip(&weights)) {
            p.last_error = e;
            p.weight = w;
        }
        let ranking = rank_by_weight(&weights);
        let top_poses: Vec<CameraPose> = ranking[..config.n_t]
            .iter()
            .map(|&i| particles[i].pose)
            .collect();
        trace.push(IterationRecord {
            iteration,
            best_error: errors[ranking[0]],
            mean_error: errors.iter().sum::<f64>() / errors.len() as f64,
            forward_passes_cum: ledger.total(),
            top_pose: top_poses[0],
            wall_time_ms: 0.0,
            top_poses,
        });

        if iteration + 1 < config.max_iter {
            particles = match config.resampler {
                Resampler::Cem => resample_cem(
                    &particles,
                    &weights,
                    config.cem_elite_frac,
                    config.n_poses,
                    range,
                    config.seed,
                    iteration,
                )?,
                Resampler::PickPerturb => {
                    let decay = config.perturb_decay.powi(iteration as i32);
                    resample_pick_perturb(
                        &particles,
                        &weights,
                        config.keep_frac,
                        config.perturb_rot * decay,
                        config.perturb_trans * decay,
                        config.n_poses,
                        config.seed,
                        iteration,
                    )?
                }
            };
        }
        trace.last_mut().unwrap().wall_time_ms = started.elapsed().as_secs_f64() * 1e3;
    }

    let weights: Vec<f64> = particles.iter().map(|p| p.weight).collect();
    let estimates = rank_by_weight(&weights)[..config.n_t]
        .iter()
        .map(|&i| particles[i].clone())
        .collect();
    Ok(LocalizationResult {
        estimates,
        trace,
        forward_passes: ledger.total(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene_data::Interval;
    use approx::assert_relative_eq;

    fn object_range(r: (f64, f64)) -> PoseRange {
        PoseRange::Object {
            theta: Interval::new(-1.0, 1.0).unwrap(),
            phi: Interval::new(0.1, 0.5).unwrap(),
            r: Interval::new(r.0, r.1).unwrap(),
        }
    }

    #[test]
    fn init_weights_are_uniform() {
        let ps = init_particles(&object_range((3.0, 5.0)), 5, 1).unwrap();
        assert_eq!(ps.len(), 5);
        for p in &ps {
            assert_relative_eq!(p.weight, 0.2);
        }
    }

    #[test]
    fn pinned_radius() {
        let ps = init_particles(&object_range((4.0, 4.0)), 30, 2).unwrap();
        assert!(ps.iter().all(|p| p.spherical.unwrap().r == 4.0));
    }

    #[test]
    fn init_is_deterministic() {
        let a = init_particles(&object_range((3.0, 5.0)), 12, 8).unwrap();
        let b = init_particles(&object_range((3.0, 5.0)), 12, 8).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn scene_centric_init_stays_near_anchors() {
        let anchor = CameraPose::identity();
        let range = PoseRange::Scene {
            anchors: vec![anchor],
            rotation: 0.1,
            translation: 0.2,
        };
        for p in init_particles(&range, 20, 3).unwrap() {
            assert!(p.spherical.is_none());
            assert!(p.pose.translation().amax() <= 0.2 + 1e-12);
            let cos = p.pose.optical_axis().dot(&anchor.optical_axis());
            assert!(cos.clamp(-1.0, 1.0).acos() <= 0.1 + 1e-9);
        }
    }

    #[test]
    fn weight_values() {
        assert_eq!(raw_weight(0.0, 2.0), 1.0);
        assert_relative_eq!(raw_weight(2.0, 2.0), 0.36787944117144233);
        let w = weights_from_errors(&[0.3, 0.3, 0.3, 0.3], 2.0);
        assert!(w.iter().all(|&v| (v - 0.25).abs() < 1e-15));
        let w = weights_from_errors(&[0.0, 0.1, 0.5, 1.0], 2.0);
        assert!(w.windows(2).all(|p| p[0] > p[1]));
        assert_relative_eq!(w.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn config_validation() {
        let ok = LocalizerConfig::default();
        ok.validate().unwrap();
        for bad in [
            LocalizerConfig { n_t: 0, ..ok.clone() },
            LocalizerConfig { n_poses: 3, n_t: 5, ..ok.clone() },
            LocalizerConfig { max_iter: 0, ..ok.clone() },
            LocalizerConfig { sigma_e: 0.0, ..ok.clone() },
            LocalizerConfig { keep_frac: 1.0, ..ok.clone() },
            LocalizerConfig { cem_elite_frac: 0.0, ..ok.clone() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn expected_passes_in_patch_mode() {
        let cfg = LocalizerConfig {
            mode: Mode::Patch,
            n_pixels: 100,
            n_poses: 10,
            n_pts: 16,
            max_iter: 3,
            ..Default::default()
        };
        assert_eq!(cfg.expected_forward_passes(), 3 * 10 * 99 * 16);
    }
}
