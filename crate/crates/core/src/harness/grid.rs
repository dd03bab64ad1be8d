//! Parameter sweeps with resumable CSV output.

use std::collections::HashSet;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;
use std::time::Instant;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Mode, Strategy};
use crate::field::RadianceField;
use crate::localizer::{localize, LocalizerConfig, Resampler};
use crate::metrics::{point_transform_error, PoseErrorReport, P_TEST};
use crate::scene_data::{pose_range_from_dataset, Dataset, DEFAULT_MARGIN};

/// First line of every results file.
pub const RESULTS_VERSION_LINE: &str = "# nerfloc-results v1";

/// Pose error (percent) counted as converged.
pub const CONVERGED_PCT: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    /// Label written into every row.
    pub dataset: String,
    pub n_pixels: Vec<usize>,
    pub n_pts: Vec<usize>,
    pub n_poses: Vec<usize>,
    pub strategies: Vec<Strategy>,
    pub modes: Vec<Mode>,
    /// Runs per cell; run `s` uses seed `seed_base + s`.
    pub seeds: usize,
    pub seed_base: u64,
    pub resampler: Resampler,
    /// Observed frames, cycled through by run index. Empty means all frames.
    pub frames: Vec<usize>,
    pub margin: f64,
    /// Remaining localizer settings (iterations, σ_e, detectors, ...).
    pub base: LocalizerConfig,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            dataset: "synthetic".into(),
            n_pixels: vec![50, 100],
            n_pts: vec![16, 64],
            n_poses: vec![15, 45],
            strategies: Strategy::ALL.to_vec(),
            modes: vec![Mode::Pixel, Mode::Patch],
            seeds: 10,
            seed_base: 0,
            resampler: Resampler::Cem,
            frames: Vec::new(),
            margin: DEFAULT_MARGIN,
            base: LocalizerConfig::default(),
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        let lists_ok = !self.n_pixels.is_empty()
            && !self.n_pts.is_empty()
            && !self.n_poses.is_empty()
            && !self.strategies.is_empty()
            && !self.modes.is_empty();
        if !lists_ok {
            return Err(Error::Config("grid lists must be non-empty".into()));
        }
        if self.seeds == 0 {
            return Err(Error::Config("grid needs at least one seed".into()));
        }
        Ok(())
    }

    /// Every (cell, seed) combination in a fixed order.
    pub fn tasks(&self) -> Vec<RowKey> {
        let mut out = Vec::new();
        for &strategy in &self.strategies {
            for &mode in &self.modes {
                for &n_pts in &self.n_pts {
                    for &n_poses in &self.n_poses {
                        for &n_pixels in &self.n_pixels {
                            for s in 0..self.seeds {
                                out.push(RowKey {
                                    dataset: self.dataset.clone(),
                                    strategy,
                                    mode,
                                    n_pixels,
                                    n_pts,
                                    n_poses,
                                    resampler: self.resampler,
                                    seed: self.seed_base + s as u64,
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }

    pub fn config_for(&self, key: &RowKey) -> LocalizerConfig {
        LocalizerConfig {
            n_pixels: key.n_pixels,
            n_pts: key.n_pts,
            n_poses: key.n_poses,
            strategy: key.strategy,
            mode: key.mode,
            resampler: key.resampler,
            seed: key.seed,
            ..self.base.clone()
        }
    }

    fn frame_for(&self, key: &RowKey, n_frames: usize) -> usize {
        let run = (key.seed - self.seed_base) as usize;
        if self.frames.is_empty() {
            run % n_frames
        } else {
            self.frames[run % self.frames.len()]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RowKey {
    pub dataset: String,
    pub strategy: Strategy,
    pub mode: Mode,
    pub n_pixels: usize,
    pub n_pts: usize,
    pub n_poses: usize,
    pub resampler: Resampler,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub dataset: String,
    pub strategy: Strategy,
    pub mode: Mode,
    pub n_pixels: usize,
    pub n_pts: usize,
    pub n_poses: usize,
    pub resampler: Resampler,
    pub seed: u64,
    pub frame: usize,
    pub max_iter: usize,
    pub point_error_pct: f64,
    pub translation_error_pct: f64,
    pub rotation_error_pct: f64,
    pub forward_passes: u64,
    pub wall_time_ms: f64,
    pub converged_below_10pct: bool,
    pub first_crossing_passes: Option<u64>,
    /// Point error of the top estimates after each iteration, `;`-separated.
    pub point_error_trace: String,
    /// Empty unless the run failed.
    pub error: String,
}

impl ResultRow {
    pub fn key(&self) -> RowKey {
        RowKey {
            dataset: self.dataset.clone(),
            strategy: self.strategy,
            mode: self.mode,
            n_pixels: self.n_pixels,
            n_pts: self.n_pts,
            n_poses: self.n_poses,
            resampler: self.resampler,
            seed: self.seed,
        }
    }

    pub fn failed(&self) -> bool {
        !self.error.is_empty()
    }

    pub fn error_trace(&self) -> Vec<f64> {
        self.point_error_trace
            .split(';')
            .filter(|s| !s.is_empty())
            .filter_map(|s| s.parse().ok())
            .collect()
    }

    /// Forward passes spent when the point error first reached
    /// `threshold_pct`, for runs whose final error is within the threshold.
    pub fn passes_to(&self, threshold_pct: f64) -> Option<u64> {
        if self.failed() || !(self.point_error_pct <= threshold_pct) {
            return None;
        }
        let per_iter = self.forward_passes / self.max_iter.max(1) as u64;
        self.error_trace()
            .iter()
            .position(|&e| e <= threshold_pct)
            .map(|i| per_iter * (i as u64 + 1))
    }

    /// Forward passes the localizer must have spent for this row's cell.
    pub fn expected_forward_passes(&self) -> u64 {
        (self.max_iter * self.n_poses * self.mode.effective_pixels(self.n_pixels) * self.n_pts)
            as u64
    }

    /// Equality ignoring wall time. NaN errors compare equal to NaN.
    pub fn same_outcome(&self, other: &ResultRow) -> bool {
        let bits = |r: &ResultRow| {
            [r.point_error_pct, r.translation_error_pct, r.rotation_error_pct].map(f64::to_bits)
        };
        let strip = |r: &ResultRow| ResultRow {
            wall_time_ms: 0.0,
            point_error_pct: 0.0,
            translation_error_pct: 0.0,
            rotation_error_pct: 0.0,
            ..r.clone()
        };
        bits(self) == bits(other) && strip(self) == strip(other)
    }
}

/// A dataset and the field it was captured from.
pub struct Experiment<'a> {
    pub dataset: &'a Dataset,
    pub field: &'a RadianceField,
}

pub fn run_one(spec: &GridSpec, exp: &Experiment<'_>, key: &RowKey) -> ResultRow {
    let frame = spec.frame_for(key, exp.dataset.frames.len());
    let config = spec.config_for(key);
    let started = Instant::now();
    let mut row = ResultRow {
        dataset: key.dataset.clone(),
        strategy: key.strategy,
        mode: key.mode,
        n_pixels: key.n_pixels,
        n_pts: key.n_pts,
        n_poses: key.n_poses,
        resampler: key.resampler,
        seed: key.seed,
        frame,
        max_iter: config.max_iter,
        point_error_pct: f64::NAN,
        translation_error_pct: f64::NAN,
        rotation_error_pct: f64::NAN,
        forward_passes: 0,
        wall_time_ms: 0.0,
        converged_below_10pct: false,
        first_crossing_passes: None,
        point_error_trace: String::new(),
        error: String::new(),
    };
    let outcome = (|| {
        let d = exp.dataset;
        let f = d
            .frames
            .get(frame)
            .ok_or_else(|| Error::Config(format!("frame {frame} not in dataset")))?;
        let range = pose_range_from_dataset(d, spec.margin)?;
        let result = localize(exp.field, &f.image, &config, &range, &d.intrinsics, d.near, d.far)?;
        Ok::<_, Error>((f.pose, result))
    })();
    match outcome {
        Ok((gt, result)) => {
            let d_max = exp.dataset.max_distance;
            let report = PoseErrorReport::new(&gt, &result.estimate_poses(), d_max);
            let p = Vector3::from(P_TEST);
            let trace: Vec<f64> = result
                .trace
                .iter()
                .map(|r| point_transform_error(&gt, &r.top_poses, &p, d_max))
                .collect();
            row.point_error_pct = report.point_error_pct;
            row.translation_error_pct = report.translation_error_pct;
            row.rotation_error_pct = report.rotation_error_pct;
            row.forward_passes = result.forward_passes;
            row.first_crossing_passes = trace
                .iter()
                .position(|&e| e <= CONVERGED_PCT)
                .map(|i| result.trace[i].forward_passes_cum);
            row.converged_below_10pct = report.point_error_pct <= CONVERGED_PCT;
            row.point_error_trace = trace
                .iter()
                .map(|e| e.to_string())
                .collect::<Vec<_>>()
                .join(";");
        }
        Err(e) => row.error = e.to_string(),
    }
    row.wall_time_ms = started.elapsed().as_secs_f64() * 1e3;
    row
}

pub fn read_rows(path: &Path) -> Result<Vec<ResultRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)?;
    reader
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

/// Checks the version line and cuts off a half-written last row, as left by
/// a run that was killed mid-write.
fn prepare_resume(path: &Path) -> Result<()> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if text.is_empty() {
        return Ok(());
    }
    if text.lines().next() != Some(RESULTS_VERSION_LINE) {
        return Err(Error::Config(format!(
            "{} does not start with `{RESULTS_VERSION_LINE}`",
            path.display()
        )));
    }
    if !text.ends_with('\n') {
        let keep = text.rfind('\n').map_or(0, |i| i + 1);
        log::warn!("{}: dropping incomplete last row", path.display());
        let file = OpenOptions::new().write(true).open(path).map_err(|e| Error::io(path, e))?;
        file.set_len(keep as u64).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

pub fn write_rows(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    writeln!(file, "{RESULTS_VERSION_LINE}").map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

struct Appender {
    writer: csv::Writer<std::fs::File>,
}

impl Appender {
    fn open(path: &Path) -> Result<Self> {
        let lines = match std::fs::read_to_string(path) {
            Ok(text) => text.lines().count(),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => 0,
            Err(e) => return Err(Error::io(path, e)),
        };
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        if lines == 0 {
            writeln!(file, "{RESULTS_VERSION_LINE}").map_err(|e| Error::io(path, e))?;
        }
        let writer = csv::WriterBuilder::new().has_headers(lines < 2).from_writer(file);
        Ok(Self { writer })
    }

    fn push(&mut self, row: &ResultRow) -> Result<()> {
        self.writer.serialize(row)?;
        self.writer
            .flush()
            .map_err(|e| Error::Io { path: "results".into(), source: e })
    }
}

/// Runs every (cell, seed) of the grid. With a results path, rows already in
/// the file are kept as they are and skipped; new rows are appended as they
/// finish. Returns all rows for the grid sorted by key.
pub fn run_grid(
    spec: &GridSpec,
    exp: &Experiment<'_>,
    results: Option<&Path>,
) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    let existing = match results {
        Some(p) if p.exists() => {
            prepare_resume(p)?;
            read_rows(p)?
        }
        _ => Vec::new(),
    };
    let done: HashSet<RowKey> = existing.iter().map(ResultRow::key).collect();
    let todo: Vec<RowKey> = spec.tasks().into_iter().filter(|k| !done.contains(k)).collect();
    let appender = results.map(Appender::open).transpose()?.map(Mutex::new);
    log::info!("grid: {} rows done, {} to run", done.len(), todo.len());

    let fresh = todo
        .par_iter()
        .map(|key| {
            let row = run_one(spec, exp, key);
            if let Some(a) = &appender {
                a.lock().expect("writer poisoned").push(&row)?;
            }
            Ok(row)
        })
        .collect::<Result<Vec<ResultRow>>>()?;

    let wanted: HashSet<RowKey> = spec.tasks().into_iter().collect();
    let mut rows: Vec<ResultRow> = existing
        .into_iter()
        .filter(|r| wanted.contains(&r.key()))
        .chain(fresh)
        .collect();
    rows.sort_by_key(|r| r.key());
    Ok(rows)
}
