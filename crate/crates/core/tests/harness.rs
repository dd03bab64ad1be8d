use std::fs;

use nerfloc::features::{Mode, Strategy};
use nerfloc::field::RadianceField;
use nerfloc::harness::report::passes_to_threshold;
use nerfloc::harness::{read_rows, run_grid, Experiment, GridSpec, ResultRow, RESULTS_VERSION_LINE};
use nerfloc::localizer::LocalizerConfig;
use nerfloc::scene_data::synthetic::{generate_synthetic_scene, SceneDescription};
use nerfloc::scene_data::Dataset;
use nerfloc::Error;

fn sphere() -> (Dataset, RadianceField) {
    let desc = SceneDescription::single_sphere(1.0, [0.8, 0.3, 0.2]);
    generate_synthetic_scene(&desc, 3, 24, 5).unwrap()
}

fn small_grid() -> GridSpec {
    GridSpec {
        dataset: "sphere".into(),
        n_pixels: vec![20],
        n_pts: vec![8],
        n_poses: vec![6, 9],
        strategies: vec![Strategy::Rand, Strategy::Orb],
        modes: vec![Mode::Pixel],
        seeds: 2,
        base: LocalizerConfig { max_iter: 3, ..LocalizerConfig::default() },
        ..GridSpec::default()
    }
}

fn assert_same(a: &[ResultRow], b: &[ResultRow]) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert!(x.same_outcome(y), "{:?} vs {:?}", x.key(), y.key());
    }
}

#[test]
fn interrupted_grid_resumes_to_the_same_rows() {
    let (d, f) = sphere();
    let exp = Experiment { dataset: &d, field: &f };
    let spec = small_grid();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("results.csv");

    let full = run_grid(&spec, &exp, Some(&path)).unwrap();
    assert_eq!(full.len(), 8);
    let text = fs::read_to_string(&path).unwrap();
    assert!(text.starts_with(RESULTS_VERSION_LINE));

    // keep the version line, header, three rows and half of the fourth
    let lines: Vec<&str> = text.lines().collect();
    let mut cut = lines[..5].join("\n");
    cut.push('\n');
    cut.push_str(&lines[5][..lines[5].len() / 2]);
    fs::write(&path, cut).unwrap();

    let resumed = run_grid(&spec, &exp, Some(&path)).unwrap();
    assert_same(&full, &resumed);
    let mut on_disk = read_rows(&path).unwrap();
    on_disk.sort_by_key(|r| r.key());
    assert_same(&full, &on_disk);

    // nothing left to do: the file is untouched
    let before = fs::read(&path).unwrap();
    run_grid(&spec, &exp, Some(&path)).unwrap();
    assert_eq!(before, fs::read(&path).unwrap());
}

#[test]
fn resume_after_only_the_version_line() {
    let (d, f) = sphere();
    let exp = Experiment { dataset: &d, field: &f };
    let spec = small_grid();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("results.csv");
    fs::write(&path, format!("{RESULTS_VERSION_LINE}\n")).unwrap();
    let rows = run_grid(&spec, &exp, Some(&path)).unwrap();
    assert_eq!(read_rows(&path).unwrap().len(), rows.len());
}

#[test]
fn foreign_results_file_is_refused() {
    let (d, f) = sphere();
    let exp = Experiment { dataset: &d, field: &f };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("results.csv");
    fs::write(&path, "a,b\n1,2\n").unwrap();
    let err = run_grid(&small_grid(), &exp, Some(&path)).unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
    assert_eq!(fs::read_to_string(&path).unwrap(), "a,b\n1,2\n");
}

#[test]
fn passes_only_count_runs_that_end_converged() {
    let (d, f) = sphere();
    let exp = Experiment { dataset: &d, field: &f };
    let base = run_grid(&small_grid(), &exp, None).unwrap().remove(0);
    // dips below the threshold at the first iteration but ends far away
    let mut rows = vec![ResultRow {
        point_error_pct: 40.0,
        point_error_trace: "5;40;40".into(),
        ..base.clone()
    }];
    let table = passes_to_threshold(&rows, 10.0);
    assert_eq!(table.values().copied().collect::<Vec<_>>(), vec![None]);

    rows.push(ResultRow {
        seed: base.seed + 100,
        point_error_pct: 5.0,
        point_error_trace: "50;8;5".into(),
        ..base.clone()
    });
    let table = passes_to_threshold(&rows, 10.0);
    let per_iter = base.forward_passes / base.max_iter as u64;
    assert_eq!(table.values().copied().collect::<Vec<_>>(), vec![Some(2 * per_iter)]);
}
