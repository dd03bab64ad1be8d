//! Datasets of posed images, the JSON manifest format, and pose search ranges.
//!
//! Manifest layout (paths relative to the manifest's directory):
//!
//! ```json
//! { "kind": "object-centric",
//!   "intrinsics": {"fx": 120.0, "fy": 120.0, "cx": 50.0, "cy": 50.0, "width": 100, "height": 100},
//!   "near": 2.0, "far": 6.0, "max_distance": 12.0,
//!   "frames": [ {"image": "frames/000.png", "transform_matrix": [[1,0,0,0],[0,1,0,0],[0,0,1,4],[0,0,0,1]]} ] }
//! ```

pub mod synthetic;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::camera::{CameraPose, Intrinsics};
use crate::error::{Error, Result};
use crate::image_buf::ColorImage;
use crate::localizer::pose_to_spherical;

pub use synthetic::{generate_synthetic_scene, SceneDescription, SceneSpec};

pub const WHITE: [f64; 3] = [1.0, 1.0, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SceneKind {
    ObjectCentric,
    SceneCentric,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub image: ColorImage,
    pub pose: CameraPose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub frames: Vec<Frame>,
    pub intrinsics: Intrinsics,
    pub kind: SceneKind,
    pub near: f64,
    pub far: f64,
    /// Scale for percentage errors.
    pub max_distance: f64,
    pub background: [f64; 3],
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestFrame {
    image: String,
    transform_matrix: [[f64; 4]; 4],
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    kind: SceneKind,
    intrinsics: Intrinsics,
    near: f64,
    far: f64,
    max_distance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    background: Option<[f64; 3]>,
    frames: Vec<ManifestFrame>,
}

impl Dataset {
    pub fn validate(&self) -> Result<()> {
        if self.frames.is_empty() {
            return Err(Error::EmptyDataset);
        }
        self.intrinsics.validate()?;
        if !(self.near < self.far) {
            return Err(Error::Invalid(format!(
                "near {} must be below far {}",
                self.near, self.far
            )));
        }
        if !(self.max_distance > 0.0) {
            return Err(Error::Invalid("max_distance must be positive".into()));
        }
        for (i, f) in self.frames.iter().enumerate() {
            if f.image.width() != self.intrinsics.width || f.image.height() != self.intrinsics.height
            {
                return Err(Error::ImageSize {
                    frame: i,
                    got_w: f.image.width(),
                    got_h: f.image.height(),
                    want_w: self.intrinsics.width,
                    want_h: self.intrinsics.height,
                });
            }
        }
        Ok(())
    }

    /// Writes `manifest.json` plus one PNG per frame under `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let frames_dir = dir.join("frames");
        std::fs::create_dir_all(&frames_dir).map_err(|e| Error::io(&frames_dir, e))?;
        let mut frames = Vec::with_capacity(self.frames.len());
        for (i, f) in self.frames.iter().enumerate() {
            let rel = format!("frames/{i:03}.png");
            f.image.save_png(&dir.join(&rel))?;
            frames.push(ManifestFrame {
                image: rel,
                transform_matrix: f.pose.rows(),
            });
        }
        let manifest = Manifest {
            kind: self.kind,
            intrinsics: self.intrinsics,
            near: self.near,
            far: self.far,
            max_distance: self.max_distance,
            background: (self.background != WHITE).then_some(self.background),
            frames,
        };
        let path = dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)
            .map_err(|e| Error::io(&path, e))
    }
}

pub fn load_manifest(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    if manifest.frames.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let root = path.parent().unwrap_or(Path::new("."));
    let background = manifest.background.unwrap_or(WHITE);
    let mut frames = Vec::with_capacity(manifest.frames.len());
    for (i, f) in manifest.frames.iter().enumerate() {
        let pose = CameraPose::from_rows(f.transform_matrix).map_err(|deviation| {
            Error::InvalidPose {
                frame: i,
                deviation,
            }
        })?;
        let image_path = root.join(&f.image);
        if !image_path.exists() {
            return Err(Error::io(
                &image_path,
                std::io::Error::new(std::io::ErrorKind::NotFound, "image not found"),
            ));
        }
        let image = ColorImage::load_png(&image_path, background)?;
        frames.push(Frame { image, pose });
    }
    let dataset = Dataset {
        frames,
        intrinsics: manifest.intrinsics,
        kind: manifest.kind,
        near: manifest.near,
        far: manifest.far,
        max_distance: manifest.max_distance,
        background,
    };
    dataset.validate()?;
    Ok(dataset)
}

/// Closed interval; `lo == hi` pins the parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Invalid(format!("bad interval [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn span(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.lo, self.hi)
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    fn expanded(&self, margin: f64) -> Self {
        let pad = margin * self.span();
        Self {
            lo: self.lo - pad,
            hi: self.hi + pad,
        }
    }
}

/// Region that initial pose particles are drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoseRange {
    Object {
        theta: Interval,
        phi: Interval,
        r: Interval,
    },
    Scene {
        anchors: Vec<CameraPose>,
        /// Max rotation angle, radians.
        rotation: f64,
        /// Max per-axis translation, scene units.
        translation: f64,
    },
}

impl PoseRange {
    /// True when the azimuth interval covers the whole circle, in which case
    /// azimuths wrap instead of clamping.
    pub fn theta_wraps(&self) -> bool {
        matches!(self, PoseRange::Object { theta, .. } if theta.span() >= std::f64::consts::TAU)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PoseRange::Object { r, .. } if !(r.lo > 0.0) => {
                Err(Error::Invalid("radius interval must be positive".into()))
            }
            PoseRange::Scene { anchors, .. } if anchors.is_empty() => {
                Err(Error::Invalid("scene-centric range needs anchors".into()))
            }
            PoseRange::Scene {
                rotation,
                translation,
                ..
            } if !(*rotation >= 0.0 && *translation >= 0.0) => {
                Err(Error::Invalid("perturbation bounds must be non-negative".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Perturbation bounds used to spread initial particles around scene-centric
/// anchor poses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnchorPerturbation {
    pub rotation: f64,
    /// Fraction of the dataset's `max_distance`.
    pub translation_frac: f64,
}

impl Default for AnchorPerturbation {
    fn default() -> Self {
        Self {
            rotation: 0.2,
            translation_frac: 0.1,
        }
    }
}

pub const DEFAULT_MARGIN: f64 = 0.05;

pub fn pose_range_from_dataset(d: &Dataset, margin: f64) -> Result<PoseRange> {
    pose_range_with(d, margin, AnchorPerturbation::default())
}

pub fn pose_range_with(
    d: &Dataset,
    margin: f64,
    perturbation: AnchorPerturbation,
) -> Result<PoseRange> {
    if d.frames.is_empty() {
        return Err(Error::EmptyDataset);
    }
    match d.kind {
        SceneKind::ObjectCentric => {
            let sph = d
                .frames
                .iter()
                .enumerate()
                .map(|(i, f)| {
                    pose_to_spherical(&f.pose)
                        .map_err(|e| Error::Invalid(format!("frame {i}: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            let bounds = |get: fn(&crate::localizer::SphericalPose) -> f64| {
                let lo = sph.iter().map(get).fold(f64::INFINITY, f64::min);
                let hi = sph.iter().map(get).fold(f64::NEG_INFINITY, f64::max);
                Interval { lo, hi }.expanded(margin)
            };
            let mut theta = bounds(|s| s.theta);
            if theta.span() >= std::f64::consts::TAU {
                theta = Interval {
                    lo: -std::f64::consts::PI,
                    hi: std::f64::consts::PI,
                };
            }
            let pole = std::f64::consts::FRAC_PI_2 - 1e-3;
            let mut phi = bounds(|s| s.phi);
            phi.lo = phi.lo.max(-pole);
            phi.hi = phi.hi.min(pole);
            let mut r = bounds(|s| s.r);
            r.lo = r.lo.max(1e-6);
            Ok(PoseRange::Object { theta, phi, r })
        }
        SceneKind::SceneCentric => Ok(PoseRange::Scene {
            anchors: d.frames.iter().map(|f| f.pose).collect(),
            rotation: perturbation.rotation,
            translation: perturbation.translation_frac * d.max_distance,
        }),
    }
}
