#![allow(dead_code)]

use std::sync::OnceLock;

use nerfloc::features::DetectorConfig;
use nerfloc::field::RadianceField;
use nerfloc::localizer::LocalizerConfig;
use nerfloc::scene_data::synthetic::{generate_synthetic_scene, SceneDescription};
use nerfloc::scene_data::Dataset;

pub const DESK_VIEWS: usize = 10;
pub const DESK_SIZE: u32 = 100;

/// The 100x100 desk scene shared by the experiment-level tests.
pub fn desk() -> &'static (Dataset, RadianceField) {
    static DESK: OnceLock<(Dataset, RadianceField)> = OnceLock::new();
    DESK.get_or_init(|| {
        generate_synthetic_scene(&SceneDescription::desk(), DESK_VIEWS, DESK_SIZE, 0)
            .expect("desk scene")
    })
}

/// Stable regions up to 10% of the image. At 100x100 the 1% default admits
/// only regions of at most 100 pixels, which leaves the desk frames with
/// almost no stable regions.
pub fn detectors() -> DetectorConfig {
    DetectorConfig {
        mser_max_area: Some((DESK_SIZE * DESK_SIZE / 10) as usize),
        ..DetectorConfig::default()
    }
}

pub fn base_config() -> LocalizerConfig {
    LocalizerConfig {
        detectors: detectors(),
        ..LocalizerConfig::default().scaled_to(desk().0.max_distance)
    }
}
