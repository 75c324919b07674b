//! Command-line front end: `stixel infer` segments disparity + semantic
//! images into a stixel world, `stixel eval` scores a world against ground
//! truth, `stixel synth` renders test scenes, and `stixel cuts-dump` shows
//! which rows the fast mode would keep.
//!
//! Exit codes: 0 success, 1 bad arguments or configuration, 2 file problems
//! (missing, malformed, mismatched shapes), 3 violated engine invariants.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use stixel_core::cuts::{generate_cuts, CutMode, CutParams};
use stixel_core::eval::{
    complexity_stats, disparity_outlier_rate, mean_iou, synthesize, ComplexityStats, EvalError,
    OutlierRule, SceneSpec,
};
use stixel_core::infer::infer_image;
use stixel_core::io::{
    downsample, load_pfm, load_pgm_labels, load_scores, load_world, render, save_pfm,
    save_pgm_labels, save_ppm_visualization, save_scores, save_world, ScoreIngest, VizMode,
};
use stixel_core::model::{ClassTaxonomy, Model, ModelConfig};

#[derive(Parser)]
#[command(
    name = "stixel",
    version,
    about = "Joint geometric and semantic column segmentation of stereo images",
    arg_required_else_help = true,
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: CommandKind,
}

#[derive(Subcommand)]
enum CommandKind {
    /// Segment a disparity map and semantic scores into a stixel world.
    Infer(InferArgs),
    /// Render a world and score it against ground-truth files.
    Eval(EvalArgs),
    /// Generate a synthetic scene with ground truth from a JSON spec.
    Synth(SynthArgs),
    /// Report the cut rows the fast mode would restrict each column to.
    CutsDump(CutsDumpArgs),
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Mode {
    /// Consider every row a candidate stixel boundary.
    Exact,
    /// Restrict boundaries to generated cut rows.
    Fast,
}

#[derive(Clone, Copy, ValueEnum)]
enum VizModeArg {
    /// Color stixels by their semantic class.
    Semantic,
    /// Shade stixels by disparity, near is warm.
    Depth,
}

#[derive(Args)]
struct InferArgs {
    /// Disparity map (PFM).
    #[arg(long)]
    disparity: PathBuf,
    /// Semantic score volume (SEMF).
    #[arg(long)]
    semantics: PathBuf,
    /// Optional per-pixel confidence map (PFM), values in (0, 1].
    #[arg(long)]
    confidence: Option<PathBuf>,
    /// Taxonomy and model parameters (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Stixel width in pixels.
    #[arg(long, default_value_t = 8)]
    width: usize,
    /// Vertical downsampling step in pixels.
    #[arg(long, default_value_t = 8)]
    vstep: usize,
    #[arg(long, value_enum, default_value_t = Mode::Exact)]
    mode: Mode,
    /// Output world file (JSON).
    #[arg(long)]
    out: PathBuf,
    /// Optional visualization image (PPM).
    #[arg(long)]
    viz: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = VizModeArg::Semantic, requires = "viz")]
    viz_mode: VizModeArg,
    /// Optional run statistics (JSON).
    #[arg(long)]
    stats: Option<PathBuf>,
    /// Treat semantic scores as logits and apply a softmax on load.
    #[arg(long)]
    softmax: bool,
    /// Worker threads; falls back to STIXEL_THREADS, then all cores.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    /// Stixel world to score (JSON).
    #[arg(long)]
    world: PathBuf,
    /// Ground-truth disparity (PFM).
    #[arg(long)]
    gt_disparity: PathBuf,
    /// Ground-truth labels (PGM).
    #[arg(long)]
    gt_labels: PathBuf,
    /// Output report (JSON).
    #[arg(long)]
    report: PathBuf,
    /// Count a pixel as an outlier when the error is over 3 px and/or 5%.
    #[arg(long, value_enum, default_value_t = OutlierRuleArg::And)]
    outlier_rule: OutlierRuleArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutlierRuleArg {
    And,
    Or,
}

#[derive(Args)]
struct SynthArgs {
    /// Scene description (JSON).
    #[arg(long)]
    spec: PathBuf,
    /// Directory receiving disparity.pfm, semantics.semf, gt_disparity.pfm
    /// and gt_labels.pgm.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct CutsDumpArgs {
    /// Disparity map (PFM).
    #[arg(long)]
    disparity: PathBuf,
    /// Semantic score volume (SEMF).
    #[arg(long)]
    semantics: PathBuf,
    /// Optional per-pixel confidence map (PFM).
    #[arg(long)]
    confidence: Option<PathBuf>,
    /// Taxonomy and model parameters (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Stixel width in pixels.
    #[arg(long, default_value_t = 8)]
    width: usize,
    /// Vertical downsampling step in pixels.
    #[arg(long, default_value_t = 8)]
    vstep: usize,
    /// Treat semantic scores as logits and apply a softmax on load.
    #[arg(long)]
    softmax: bool,
    /// Output cut listing (JSON).
    #[arg(long)]
    out: PathBuf,
}

/// Configuration file: the class taxonomy plus optional model and cut
/// parameter blocks, which default when omitted.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    taxonomy: ClassTaxonomy,
    #[serde(default)]
    model: ModelConfig,
    #[serde(default)]
    cuts: CutParams,
}

enum Failure {
    Usage(String),
    File(String),
    Invariant(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::File(_) => 2,
            Failure::Invariant(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::File(m) | Failure::Invariant(m) => m,
        }
    }
}

fn usage(e: impl Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn file(e: impl Display) -> Failure {
    Failure::File(e.to_string())
}

fn invariant(e: impl Display) -> Failure {
    Failure::Invariant(e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        CommandKind::Infer(args) => cmd_infer(args),
        CommandKind::Eval(args) => cmd_eval(args),
        CommandKind::Synth(args) => cmd_synth(args),
        CommandKind::CutsDump(args) => cmd_cuts_dump(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.exit_code())
        }
    }
}

fn load_config(path: &Path) -> Result<ConfigFile, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| file(format_args!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| usage(format_args!("{}: {e}", path.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| invariant(format_args!("serializing {}: {e}", path.display())))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| file(format_args!("{}: {e}", path.display())))
}

/// Resolves the worker count: the flag wins, then STIXEL_THREADS, then the
/// rayon default (all cores).
fn resolve_threads(flag: Option<usize>) -> Result<Option<usize>, Failure> {
    let requested = match flag {
        Some(n) => Some(n),
        None => match std::env::var("STIXEL_THREADS") {
            Ok(text) => Some(
                text.trim()
                    .parse::<usize>()
                    .map_err(|_| usage(format_args!("STIXEL_THREADS is not a number: {text:?}")))?,
            ),
            Err(std::env::VarError::NotPresent) => None,
            Err(std::env::VarError::NotUnicode(_)) => {
                return Err(usage("STIXEL_THREADS is not valid unicode"));
            }
        },
    };
    if requested == Some(0) {
        return Err(usage("thread count must be at least 1"));
    }
    Ok(requested)
}

struct LoadedInputs {
    measurements: stixel_core::energy::ImageMeasurements,
    config: ConfigFile,
    load_ms: f64,
    downsample_ms: f64,
}

/// Shared ingest path of `infer` and `cuts-dump`: read everything, check the
/// class counts line up, downsample to the stixel grid.
fn load_inputs(
    disparity: &Path,
    semantics: &Path,
    confidence: Option<&Path>,
    config: &Path,
    width: usize,
    vstep: usize,
    softmax: bool,
) -> Result<LoadedInputs, Failure> {
    if width == 0 || vstep == 0 {
        return Err(usage("--width and --vstep must be at least 1"));
    }
    let config = load_config(config)?;

    let start = Instant::now();
    let disparity = load_pfm(disparity).map_err(file)?;
    let ingest = if softmax { ScoreIngest::Logits } else { ScoreIngest::Probabilities };
    let scores = load_scores(semantics, ingest).map_err(file)?;
    let confidence = confidence.map(load_pfm).transpose().map_err(file)?;
    let load_ms = start.elapsed().as_secs_f64() * 1e3;

    if scores.classes() != config.taxonomy.class_count() {
        return Err(file(format_args!(
            "score volume has {} classes but the taxonomy defines {}",
            scores.classes(),
            config.taxonomy.class_count()
        )));
    }

    let start = Instant::now();
    let measurements =
        downsample(&disparity, confidence.as_ref(), &scores, width, vstep).map_err(file)?;
    let downsample_ms = start.elapsed().as_secs_f64() * 1e3;

    Ok(LoadedInputs { measurements, config, load_ms, downsample_ms })
}

#[derive(Serialize)]
struct StagesMs {
    load: f64,
    downsample: f64,
    infer: f64,
    write: f64,
}

#[derive(Serialize)]
struct StatsFile {
    mode: &'static str,
    threads: usize,
    grid_columns: usize,
    grid_rows: usize,
    total_energy: f64,
    complexity: ComplexityStats,
    stages_ms: StagesMs,
}

fn cmd_infer(args: InferArgs) -> Result<(), Failure> {
    let inputs = load_inputs(
        &args.disparity,
        &args.semantics,
        args.confidence.as_deref(),
        &args.config,
        args.width,
        args.vstep,
        args.softmax,
    )?;
    let model = Model::new(inputs.config.model, inputs.config.taxonomy).map_err(usage)?;
    let mode = match args.mode {
        Mode::Exact => CutMode::Exact,
        Mode::Fast => CutMode::Pruned(inputs.config.cuts),
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(resolve_threads(args.threads)?.unwrap_or(0))
        .build()
        .map_err(|e| file(format_args!("building the thread pool: {e}")))?;
    let start = Instant::now();
    let (world, stats) =
        pool.install(|| infer_image(&inputs.measurements, &model, mode)).map_err(invariant)?;
    let infer_ms = start.elapsed().as_secs_f64() * 1e3;

    let start = Instant::now();
    save_world(&args.out, &world).map_err(file)?;
    if let Some(viz) = &args.viz {
        let viz_mode = match args.viz_mode {
            VizModeArg::Semantic => VizMode::Semantic,
            VizModeArg::Depth => VizMode::Depth,
        };
        save_ppm_visualization(viz, &world, viz_mode).map_err(file)?;
    }
    let write_ms = start.elapsed().as_secs_f64() * 1e3;

    let total_energy: f64 = world.columns.iter().map(|c| c.total_energy).sum();
    if let Some(stats_path) = &args.stats {
        let report = StatsFile {
            mode: match args.mode {
                Mode::Exact => "exact",
                Mode::Fast => "fast",
            },
            threads: pool.current_num_threads(),
            grid_columns: world.grid_columns(),
            grid_rows: world.grid_rows(),
            total_energy,
            complexity: complexity_stats(&world, &stats, infer_ms),
            stages_ms: StagesMs {
                load: inputs.load_ms,
                downsample: inputs.downsample_ms,
                infer: infer_ms,
                write: write_ms,
            },
        };
        write_json(stats_path, &report)?;
    }
    println!(
        "{} columns, {} stixels, energy {:.6}, cut density {:.3} -> {}",
        world.columns.len(),
        world.stixel_count(),
        total_energy,
        stats.mean_cut_density,
        args.out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct ReportFile {
    outlier_rule: &'static str,
    outliers: stixel_core::eval::OutlierStats,
    iou: stixel_core::eval::IouStats,
}

fn map_eval_err(e: EvalError) -> Failure {
    match e {
        EvalError::Spec(m) => usage(m),
        EvalError::Shape(m) => file(m),
    }
}

fn cmd_eval(args: EvalArgs) -> Result<(), Failure> {
    let world = load_world(&args.world).map_err(file)?;
    let gt_disparity = load_pfm(&args.gt_disparity).map_err(file)?;
    let gt_labels = load_pgm_labels(&args.gt_labels).map_err(file)?;

    let rendered = render(&world).map_err(file)?;
    let rule = match args.outlier_rule {
        OutlierRuleArg::And => OutlierRule::And,
        OutlierRuleArg::Or => OutlierRule::Or,
    };
    let outliers =
        disparity_outlier_rate(&rendered.disparity, &gt_disparity, rule).map_err(map_eval_err)?;
    let iou = mean_iou(&rendered.labels, &gt_labels, world.taxonomy.class_count())
        .map_err(map_eval_err)?;

    let names: Vec<&str> = (0..world.taxonomy.class_count()).map(|k| world.taxonomy.name(k)).collect();
    print!("{}", iou.text_table(&names));
    println!(
        "outliers  {:5.2}%  ({} of {} pixels)",
        outliers.rate_percent, outliers.outliers, outliers.evaluated
    );

    let report = ReportFile {
        outlier_rule: match args.outlier_rule {
            OutlierRuleArg::And => "and",
            OutlierRuleArg::Or => "or",
        },
        outliers,
        iou,
    };
    write_json(&args.report, &report)
}

fn cmd_synth(args: SynthArgs) -> Result<(), Failure> {
    let text = std::fs::read_to_string(&args.spec)
        .map_err(|e| file(format_args!("{}: {e}", args.spec.display())))?;
    let spec: SceneSpec = serde_json::from_str(&text)
        .map_err(|e| usage(format_args!("{}: {e}", args.spec.display())))?;
    let scene = synthesize(&spec).map_err(map_synth_err)?;

    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| file(format_args!("{}: {e}", args.out_dir.display())))?;
    save_pfm(args.out_dir.join("disparity.pfm"), &scene.disparity).map_err(file)?;
    save_scores(args.out_dir.join("semantics.semf"), &scene.scores).map_err(file)?;
    save_pfm(args.out_dir.join("gt_disparity.pfm"), &scene.gt_disparity).map_err(file)?;
    save_pgm_labels(args.out_dir.join("gt_labels.pgm"), &scene.gt_labels).map_err(file)?;
    let (width, height) = spec.dims;
    println!("{width}x{height} scene -> {}", args.out_dir.display());
    Ok(())
}

fn map_synth_err(e: EvalError) -> Failure {
    // Everything synthesize rejects is a problem with the provided spec.
    usage(e)
}

#[derive(Serialize)]
struct CutsFile {
    columns: Vec<CutsColumn>,
    mean_density: f64,
}

#[derive(Serialize)]
struct CutsColumn {
    index: usize,
    rows: Vec<usize>,
    density: f64,
}

fn cmd_cuts_dump(args: CutsDumpArgs) -> Result<(), Failure> {
    let inputs = load_inputs(
        &args.disparity,
        &args.semantics,
        args.confidence.as_deref(),
        &args.config,
        args.width,
        args.vstep,
        args.softmax,
    )?;
    let taxonomy = &inputs.config.taxonomy;
    let columns: Vec<CutsColumn> = inputs
        .measurements
        .columns()
        .iter()
        .enumerate()
        .map(|(index, col)| {
            let cuts = generate_cuts(col, taxonomy, &inputs.config.cuts);
            CutsColumn { index, rows: cuts.rows().to_vec(), density: cuts.density() }
        })
        .collect();
    let mean_density = if columns.is_empty() {
        0.0
    } else {
        columns.iter().map(|c| c.density).sum::<f64>() / columns.len() as f64
    };
    let listing = CutsFile { columns, mean_density };
    write_json(&args.out, &listing)?;
    println!("mean cut density {mean_density:.3} -> {}", args.out.display());
    Ok(())
}
