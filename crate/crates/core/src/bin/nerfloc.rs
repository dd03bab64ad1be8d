use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;

use nerfloc::features::{fast::detect_corners, mser::detect_stable_regions, to_grayscale};
use nerfloc::features::{DetectorConfig, Detector, KeypointPool, Strategy};
use nerfloc::field::{ForwardPassLedger, MlpSpec, RadianceField};
use nerfloc::harness::{self, CurveSpec, Experiment, GridSpec, CONVERGED_PCT};
use nerfloc::localizer::{localize, LocalizerConfig};
use nerfloc::metrics::PoseErrorReport;
use nerfloc::render::{render_image, RenderSettings};
use nerfloc::scene_data::synthetic::{generate_synthetic_scene, SceneDescription};
use nerfloc::scene_data::{load_manifest, pose_range_from_dataset, Dataset, DEFAULT_MARGIN};
use nerfloc::{CameraPose, ColorImage, Error, Result};

#[derive(Parser)]
#[command(name = "nerfloc", version, about = "Sampling-based camera localization against radiance fields")]
struct Cli {
    /// Seed for every random choice; overrides the seed in --config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// JSON settings for the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum BuiltinScene {
    Desk,
    Sphere,
    RandomMlp,
}

#[derive(Clone, Copy, ValueEnum)]
enum DetectorArg {
    Corner,
    Stable,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic dataset and save it with its field.
    GenerateScene {
        /// Built-in scene, ignored when --config gives a scene description.
        #[arg(long, value_enum, default_value = "desk")]
        scene: BuiltinScene,
        #[arg(long, default_value_t = 10)]
        views: usize,
        #[arg(long, default_value_t = 100)]
        size: u32,
    },
    /// Render a full image of a field.
    Render {
        #[arg(long)]
        field: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Dataset frame whose pose is rendered, unless --pose is given.
        #[arg(long, default_value_t = 0)]
        frame: usize,
        /// JSON file with a 4x4 camera-to-world matrix.
        #[arg(long)]
        pose: Option<PathBuf>,
        #[arg(long, default_value_t = 64)]
        n_pts: usize,
    },
    /// Run a detector and write its keypoints and an overlay image.
    DetectFeatures {
        #[arg(long)]
        image: PathBuf,
        #[arg(long, value_enum)]
        detector: DetectorArg,
        /// Pixel budget; the corner detector keeps up to 4x this many.
        #[arg(long, default_value_t = 100)]
        budget: usize,
    },
    /// Estimate the pose of one dataset frame.
    Localize {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        field: PathBuf,
        #[arg(long, default_value_t = 0)]
        frame: usize,
        #[arg(long)]
        strategy: Option<Strategy>,
    },
    /// Run a parameter grid; resumes from an existing results file.
    Grid {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        field: PathBuf,
    },
    /// Likelihood as the true pose is rotated, one curve per strategy.
    LikelihoodCurve {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        field: PathBuf,
        #[arg(long, default_value_t = 0)]
        frame: usize,
        #[arg(long, value_delimiter = ',', default_value = "orb,mser,rand")]
        strategies: Vec<Strategy>,
    },
    /// Summaries, heatmaps and pass counts from results files.
    Report {
        #[arg(required = true)]
        results: Vec<PathBuf>,
        #[arg(long, default_value_t = CONVERGED_PCT)]
        threshold: f64,
    },
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn config_or<T: DeserializeOwned>(cli: &Cli, default: impl FnOnce() -> T) -> Result<T> {
    match &cli.config {
        Some(p) => read_json(p),
        None => Ok(default()),
    }
}

fn create_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn load(dataset: &Path, field: &Path) -> Result<(Dataset, RadianceField)> {
    Ok((load_manifest(dataset)?, RadianceField::load(field)?))
}

fn overlay(image: &ColorImage, pool: &KeypointPool) -> ColorImage {
    let mut out = image.clone();
    let mark = match pool.detector {
        Detector::Corner => [1.0, 0.0, 0.0],
        Detector::StableRegion => [0.0, 0.8, 1.0],
    };
    for k in &pool.points {
        out.set(k.row, k.col, mark);
    }
    out
}

fn run(cli: &Cli) -> Result<()> {
    let out = &cli.out;
    match &cli.command {
        Command::GenerateScene { scene, views, size } => {
            let desc = config_or(cli, || match scene {
                BuiltinScene::Desk => SceneDescription::desk(),
                BuiltinScene::Sphere => SceneDescription::single_sphere(1.0, [0.8, 0.3, 0.2]),
                BuiltinScene::RandomMlp => SceneDescription::random_mlp(MlpSpec::standard()),
            })?;
            let (dataset, field) = generate_synthetic_scene(&desc, *views, *size, cli.seed.unwrap_or(0))?;
            create_out(out)?;
            dataset.save(out)?;
            let field_path = out.join(format!("field.{}", field.file_extension()));
            field.save(&field_path)?;
            println!("{}", out.join("manifest.json").display());
            println!("{}", field_path.display());
        }
        Command::Render { field, dataset, frame, pose, n_pts } => {
            let (d, f) = load(dataset, field)?;
            let pose = match pose {
                Some(p) => {
                    let rows: [[f64; 4]; 4] = read_json(p)?;
                    CameraPose::from_rows(rows)
                        .map_err(|dev| Error::InvalidPose { frame: 0, deviation: dev })?
                }
                None => {
                    d.frames
                        .get(*frame)
                        .ok_or_else(|| Error::Config(format!("frame {frame} not in dataset")))?
                        .pose
                }
            };
            let settings = RenderSettings::new(d.near, d.far, *n_pts, d.background)?;
            let ledger = ForwardPassLedger::new();
            let img = render_image(&f, &pose, &d.intrinsics, &settings, &ledger)?;
            create_out(out)?;
            let path = out.join("render.png");
            img.save_png(&path)?;
            println!("{} ({} forward passes)", path.display(), ledger.total());
        }
        Command::DetectFeatures { image, detector, budget } => {
            let detectors: DetectorConfig = config_or(cli, DetectorConfig::default)?;
            let img = ColorImage::load_png(image, nerfloc::scene_data::WHITE)?;
            let gray = to_grayscale(&img);
            let pool = match detector {
                DetectorArg::Corner => detect_corners(
                    &gray,
                    detectors.fast_threshold,
                    detectors.max_keypoints.unwrap_or(4 * budget),
                ),
                DetectorArg::Stable => detect_stable_regions(
                    &gray,
                    &detectors.mser_params(gray.width(), gray.height()),
                ),
            };
            create_out(out)?;
            let name = match pool.detector {
                Detector::Corner => "corner",
                Detector::StableRegion => "stable",
            };
            let mut csv = String::from("row,col,score,detector\n");
            for k in &pool.points {
                csv.push_str(&format!("{},{},{},{name}\n", k.row, k.col, k.score));
            }
            write_file(&out.join("features.csv"), csv)?;
            overlay(&img, &pool).save_png(&out.join("features.png"))?;
            println!("{} keypoints", pool.len());
        }
        Command::Localize { dataset, field, frame, strategy } => {
            let (d, f) = load(dataset, field)?;
            let mut config: LocalizerConfig =
                config_or(cli, || LocalizerConfig::default().scaled_to(d.max_distance))?;
            if let Some(s) = cli.seed {
                config.seed = s;
            }
            if let Some(s) = strategy {
                config.strategy = *s;
            }
            let obs = d
                .frames
                .get(*frame)
                .ok_or_else(|| Error::Config(format!("frame {frame} not in dataset")))?;
            let range = pose_range_from_dataset(&d, DEFAULT_MARGIN)?;
            let result = localize(&f, &obs.image, &config, &range, &d.intrinsics, d.near, d.far)?;
            let report = PoseErrorReport::new(&obs.pose, &result.estimate_poses(), d.max_distance);
            create_out(out)?;
            let trace = out.join("trace.jsonl");
            write_file(&trace, result.trace_jsonl()?)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            println!("forward passes: {}", result.forward_passes);
            println!("trace: {}", trace.display());
        }
        Command::Grid { dataset, field } => {
            let (d, f) = load(dataset, field)?;
            let mut spec: GridSpec = config_or(cli, || GridSpec {
                base: LocalizerConfig::default().scaled_to(d.max_distance),
                ..GridSpec::default()
            })?;
            if let Some(s) = cli.seed {
                spec.seed_base = s;
            }
            create_out(out)?;
            let path = out.join("results.csv");
            let rows = harness::run_grid(&spec, &Experiment { dataset: &d, field: &f }, Some(&path))?;
            let failed = rows.iter().filter(|r| r.failed()).count();
            println!("{} rows ({failed} failed) in {}", rows.len(), path.display());
        }
        Command::LikelihoodCurve { dataset, field, frame, strategies } => {
            let (d, f) = load(dataset, field)?;
            let mut spec: CurveSpec = config_or(cli, CurveSpec::default)?;
            if let Some(s) = cli.seed {
                spec.seed = s;
            }
            create_out(out)?;
            println!("strategy,fwhm_deg,filled");
            for &strategy in strategies {
                let curve = harness::likelihood_curve(
                    &f,
                    &d,
                    *frame,
                    &CurveSpec { strategy, ..spec.clone() },
                )?;
                let path = out.join(format!("curve_{strategy}.csv"));
                let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
                curve.write_csv(file)?;
                println!("{strategy},{:.3},{}", curve.fwhm_deg, curve.filled);
            }
        }
        Command::Report { results, threshold } => {
            let mut rows = Vec::new();
            for p in results {
                rows.extend(harness::read_rows(p)?);
            }
            rows.sort_by_key(|r| r.key());
            create_out(out)?;
            for (name, contents) in harness::render_report(&rows, *threshold) {
                write_file(&out.join(name), contents)?;
            }
            print!("{}", harness::report::summary_markdown(&rows));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_data_error() { 2 } else { 1 })
        }
    }
}
