mod common;

use nalgebra::{Unit, Vector3};

use nerfloc::features::{select_pixels, DetectorConfig, Mode, Strategy};
use nerfloc::field::{ForwardPassLedger, MlpSpec};
use nerfloc::localizer::{evaluate_error, localize, LocalizerConfig, Resampler};
use nerfloc::render::RenderSettings;
use nerfloc::scene_data::synthetic::{generate_synthetic_scene, SceneDescription};
use nerfloc::scene_data::{pose_range_from_dataset, DEFAULT_MARGIN};

#[test]
fn true_pose_reproduces_the_observation() {
    let (d, f) = common::desk();
    let s = RenderSettings::new(d.near, d.far, 64, d.background).unwrap();
    for (i, frame) in d.frames.iter().enumerate() {
        let px = select_pixels(Strategy::Rand, &frame.image, 200, Mode::Pixel, 0, i as u64,
            &DetectorConfig::default()).unwrap();
        let e = evaluate_error(f, &frame.pose, &frame.image, &px, &d.intrinsics, &s,
            &ForwardPassLedger::new()).unwrap();
        assert!(e < 1e-6, "frame {i}: {e}");
    }
}

#[test]
fn random_network_scene_is_self_consistent() {
    let desc = SceneDescription::random_mlp(MlpSpec::standard());
    let (d, f) = generate_synthetic_scene(&desc, 1, 100, 7).unwrap();
    let frame = &d.frames[0];
    let s = RenderSettings::new(d.near, d.far, desc.render_points, d.background).unwrap();
    let px = select_pixels(Strategy::Rand, &frame.image, 300, Mode::Pixel, 0, 7,
        &DetectorConfig::default()).unwrap();
    let e = evaluate_error(&f, &frame.pose, &frame.image, &px, &d.intrinsics, &s,
        &ForwardPassLedger::new()).unwrap();
    assert!(e < 1e-6, "{e}");
}

#[test]
fn rotating_away_raises_the_error() {
    let (d, f) = common::desk();
    let s = RenderSettings::new(d.near, d.far, 16, d.background).unwrap();
    let x = Unit::new_normalize(Vector3::x());
    let mut wins = 0;
    for seed in 0..100u64 {
        let frame = &d.frames[seed as usize % d.frames.len()];
        let px = select_pixels(Strategy::Rand, &frame.image, 100, Mode::Pixel, 0, seed,
            &DetectorConfig::default()).unwrap();
        let err = |pose| {
            evaluate_error(f, pose, &frame.image, &px, &d.intrinsics, &s,
                &ForwardPassLedger::new()).unwrap()
        };
        let turned = frame.pose.rotated_local(&x, 30f64.to_radians());
        if err(&frame.pose) < err(&turned) {
            wins += 1;
        }
    }
    assert!(wins >= 95, "true pose better in only {wins}/100 pixel sets");
}

#[test]
fn pick_and_perturb_never_loses_its_best() {
    let (d, f) = common::desk();
    let range = pose_range_from_dataset(d, DEFAULT_MARGIN).unwrap();
    let config = LocalizerConfig {
        resampler: Resampler::PickPerturb,
        strategy: Strategy::RandFix,
        n_poses: 30,
        max_iter: 8,
        // the same pixels every iteration, so kept poses keep their error
        ..common::base_config()
    };
    for seed in 0..3 {
        let config = LocalizerConfig { seed, ..config.clone() };
        let r = localize(f, &d.frames[1].image, &config, &range, &d.intrinsics, d.near, d.far)
            .unwrap();
        for w in r.trace.windows(2) {
            assert!(w[1].best_error <= w[0].best_error, "seed {seed}: {} -> {}",
                w[0].best_error, w[1].best_error);
        }
    }
}
