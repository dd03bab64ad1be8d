//! Pixel selection for sparse rendering.
//!
//! Six strategies decide which pixels of the observed image get rendered at
//! each candidate pose:
//!
//! | strategy   | source              | refreshed each iteration |
//! |------------|---------------------|--------------------------|
//! | `rand`     | whole image         | yes                      |
//! | `randfix`  | whole image         | no                       |
//! | `orb`      | top corner scores   | no                       |
//! | `orbrand`  | corner pool         | yes                      |
//! | `mser`     | top region scores   | no                       |
//! | `mserrand` | stable-region pool  | yes                      |
//!
//! In patch mode `budget / 9` centers are chosen by the same rule and each is
//! expanded to its 3×3 neighborhood, so the rendering cost never exceeds the
//! pixel-mode budget.

pub mod fast;
pub mod mser;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use image::{GrayImage, Luma};
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image_buf::ColorImage;
use crate::rng::{derive, Stream};

pub use fast::detect_corners;
pub use mser::{detect_stable_regions, stable_regions, MserParams, StableRegion};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Detector {
    Corner,
    StableRegion,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub row: u32,
    pub col: u32,
    pub score: f64,
}

/// Candidate pixels from one detector, best score first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeypointPool {
    pub detector: Detector,
    pub points: Vec<Keypoint>,
}

impl KeypointPool {
    /// Descending score, then raster order.
    pub(crate) fn sort_points(points: &mut [Keypoint]) {
        points.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then((a.row, a.col).cmp(&(b.row, b.col)))
        });
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// BT.601 luma, rounded to 8 bits.
pub fn to_grayscale(image: &ColorImage) -> GrayImage {
    GrayImage::from_fn(image.width(), image.height(), |x, y| {
        let [r, g, b] = image.get(y, x);
        let luma = 0.299 * r + 0.587 * g + 0.114 * b;
        Luma([(luma.clamp(0.0, 1.0) * 255.0).round() as u8])
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Orb,
    OrbRand,
    RandFix,
    Rand,
    Mser,
    MserRand,
}

impl Strategy {
    /// In the order the strategies are usually tabulated.
    pub const ALL: [Strategy; 6] = [
        Strategy::Orb,
        Strategy::OrbRand,
        Strategy::RandFix,
        Strategy::Rand,
        Strategy::Mser,
        Strategy::MserRand,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Orb => "orb",
            Strategy::OrbRand => "orbrand",
            Strategy::RandFix => "randfix",
            Strategy::Rand => "rand",
            Strategy::Mser => "mser",
            Strategy::MserRand => "mserrand",
        }
    }

    pub fn detector(&self) -> Option<Detector> {
        match self {
            Strategy::Orb | Strategy::OrbRand => Some(Detector::Corner),
            Strategy::Mser | Strategy::MserRand => Some(Detector::StableRegion),
            Strategy::Rand | Strategy::RandFix => None,
        }
    }

    /// Whether the selection is redrawn every iteration.
    pub fn refreshes(&self) -> bool {
        matches!(self, Strategy::Rand | Strategy::OrbRand | Strategy::MserRand)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown strategy '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Pixel,
    Patch,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Pixel => "pixel",
            Mode::Patch => "patch",
        }
    }

    /// Pixels actually rendered for a budget.
    pub fn effective_pixels(&self, budget: usize) -> usize {
        match self {
            Mode::Pixel => budget,
            Mode::Patch => 9 * (budget / 9),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pixel" => Ok(Mode::Pixel),
            "patch" => Ok(Mode::Patch),
            _ => Err(Error::Config(format!("unknown mode '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PixelSet {
    /// (row, col).
    pub coords: Vec<(u32, u32)>,
    pub strategy: Strategy,
    pub mode: Mode,
    pub budget: usize,
    /// Selections (pixels or patch centers) that came from random filling
    /// because the detector pool was too small.
    pub filled: usize,
}

/// Detector settings. `None` fields take image- or budget-dependent defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub fast_threshold: u8,
    /// Defaults to 4 × budget.
    pub max_keypoints: Option<usize>,
    pub mser_delta: u8,
    pub mser_min_area: usize,
    /// Defaults to 1% of the image.
    pub mser_max_area: Option<usize>,
    pub mser_max_variation: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            fast_threshold: 20,
            max_keypoints: None,
            mser_delta: 5,
            mser_min_area: 30,
            mser_max_area: None,
            mser_max_variation: 0.25,
        }
    }
}

impl DetectorConfig {
    pub fn mser_params(&self, width: u32, height: u32) -> MserParams {
        let base = MserParams::for_image(width, height);
        MserParams {
            delta: self.mser_delta,
            min_area: self.mser_min_area,
            max_area: self.mser_max_area.unwrap_or(base.max_area),
            max_variation: self.mser_max_variation,
        }
    }

    pub fn detect(&self, detector: Detector, gray: &GrayImage, budget: usize) -> KeypointPool {
        match detector {
            Detector::Corner => detect_corners(
                gray,
                self.fast_threshold,
                self.max_keypoints.unwrap_or(4 * budget),
            ),
            Detector::StableRegion => {
                detect_stable_regions(gray, &self.mser_params(gray.width(), gray.height()))
            }
        }
    }
}

/// Runs the strategy's detector once per observed image and answers
/// per-iteration selection queries from the cached pool.
#[derive(Debug, Clone)]
pub struct PixelSelector {
    strategy: Strategy,
    mode: Mode,
    budget: usize,
    seed: u64,
    width: u32,
    height: u32,
    pool: Option<KeypointPool>,
    fixed: Option<PixelSet>,
}

impl PixelSelector {
    pub fn new(
        strategy: Strategy,
        mode: Mode,
        budget: usize,
        seed: u64,
        observed: &ColorImage,
        detectors: &DetectorConfig,
    ) -> Result<Self> {
        let (width, height) = (observed.width(), observed.height());
        if budget == 0 {
            return Err(Error::Config("pixel budget must be positive".into()));
        }
        if budget > width as usize * height as usize {
            return Err(Error::Config(format!(
                "budget {budget} exceeds the {width}x{height} image"
            )));
        }
        if mode == Mode::Patch && (budget < 9 || width < 3 || height < 3) {
            return Err(Error::Config(
                "patch mode needs a budget of at least 9 and a 3x3 image".into(),
            ));
        }
        let pool = strategy
            .detector()
            .map(|d| detectors.detect(d, &to_grayscale(observed), budget));
        let mut selector = Self {
            strategy,
            mode,
            budget,
            seed,
            width,
            height,
            pool,
            fixed: None,
        };
        if !strategy.refreshes() {
            selector.fixed = Some(selector.draw(0));
        }
        Ok(selector)
    }

    pub fn pool(&self) -> Option<&KeypointPool> {
        self.pool.as_ref()
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn select(&self, iteration: usize) -> PixelSet {
        match &self.fixed {
            Some(set) => set.clone(),
            None => self.draw(iteration),
        }
    }

    fn draw(&self, iteration: usize) -> PixelSet {
        let patch = self.mode == Mode::Patch;
        let count = if patch { self.budget / 9 } else { self.budget };
        // patch centers stay one pixel inside the border
        let inset = u32::from(patch);
        let (rows, cols) = (self.height - 2 * inset, self.width - 2 * inset);
        let clamp = |(r, c): (u32, u32)| {
            (
                r.clamp(inset, self.height - 1 - inset),
                c.clamp(inset, self.width - 1 - inset),
            )
        };
        let iter_key = if self.strategy.refreshes() { iteration as u64 } else { 0 };

        let mut picks: Vec<(u32, u32)> = match (&self.pool, self.strategy.refreshes()) {
            (None, _) => {
                let mut rng = derive(self.seed, Stream::Select, iter_key, 0);
                sample(&mut rng, (rows * cols) as usize, count)
                    .into_iter()
                    .map(|i| (i as u32 / cols + inset, i as u32 % cols + inset))
                    .collect()
            }
            (Some(pool), false) => pool
                .points
                .iter()
                .take(count)
                .map(|k| clamp((k.row, k.col)))
                .collect(),
            (Some(pool), true) => {
                let mut rng = derive(self.seed, Stream::Select, iter_key, 0);
                let n = count.min(pool.len());
                sample(&mut rng, pool.len(), n)
                    .into_iter()
                    .map(|i| clamp((pool.points[i].row, pool.points[i].col)))
                    .collect()
            }
        };

        let mut filled = 0;
        if picks.len() < count {
            let taken: HashSet<(u32, u32)> = picks.iter().copied().collect();
            let mut rng = derive(self.seed, Stream::Fill, iter_key, 0);
            let free: Vec<(u32, u32)> = (0..rows * cols)
                .map(|i| (i / cols + inset, i % cols + inset))
                .filter(|p| !taken.contains(p))
                .collect();
            let need = (count - picks.len()).min(free.len());
            filled = need;
            picks.extend(sample(&mut rng, free.len(), need).into_iter().map(|i| free[i]));
        }

        let coords = if patch {
            picks
                .iter()
                .flat_map(|&(r, c)| {
                    (0..3).flat_map(move |dr| (0..3).map(move |dc| (r + dr - 1, c + dc - 1)))
                })
                .collect()
        } else {
            picks
        };
        PixelSet {
            coords,
            strategy: self.strategy,
            mode: self.mode,
            budget: self.budget,
            filled,
        }
    }
}

/// One-shot selection; builds (and discards) the detector cache.
pub fn select_pixels(
    strategy: Strategy,
    observed: &ColorImage,
    budget: usize,
    mode: Mode,
    iteration: usize,
    seed: u64,
    detectors: &DetectorConfig,
) -> Result<PixelSet> {
    Ok(PixelSelector::new(strategy, mode, budget, seed, observed, detectors)?.select(iteration))
}
