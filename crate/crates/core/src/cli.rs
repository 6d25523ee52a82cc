//! Command implementations behind the `gaffine` binary.
//!
//! Each `cmd_*` function does the work of one subcommand and returns what it
//! would print, so the commands can be exercised without spawning a process.
//! Output files are only created once every input has been read and
//! processed successfully.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::config::{ConfigError, DetectorConfig};
use crate::eval::{
    aggregate, emit_curves, evaluate, linspace, run_trials, write_report_csv, write_sweep_csv, Curve, EvalReport,
    SweepConfig, SweepRow,
};
use crate::featio::{read_features, write_features, FeatureFileError};
use crate::imgio::{load_pgm, save_pgm, ImageError};
use crate::pipeline::detect_features;
use crate::scalespace::ScaleSpaceError;
use crate::synth::{
    add_gaussian_noise, quantize, read_truth_csv, render_many, write_truth_csv, GaussianSignalSpec, SpecRanges,
    SynthError,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    ScaleSpace(#[from] ScaleSpaceError),
    #[error(transparent)]
    FeatureFile(#[from] FeatureFileError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Usage(String),
}

#[derive(Debug, Parser)]
#[command(name = "gaffine", version, about = "Closed-form affine Gaussian blob detector")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Detect features in a PGM image and write a feature file.
    Detect(DetectArgs),
    /// Render Gaussian test signals to a PGM plus a ground-truth CSV.
    Synth(SynthArgs),
    /// Score a feature file against a ground-truth CSV.
    Eval(EvalArgs),
    /// Run a randomized accuracy sweep and write aggregate statistics.
    Sweep(SweepArgs),
    /// Tabulate the analytic curves of the shape solver.
    Curves(CurvesArgs),
}

/// Detector settings: an optional `key = value` file, then `--set` overrides.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// Plain `key = value` configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one configuration key (repeatable), e.g. `--set r_max=100`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<DetectorConfig, CliError> {
        let mut cfg = DetectorConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        for (i, kv) in self.overrides.iter().enumerate() {
            let (k, v) =
                kv.split_once('=').ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            cfg.set(k.trim(), v.trim(), i + 1)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args)]
pub struct DetectArgs {
    /// Input PGM image.
    pub image: PathBuf,
    /// Output feature file.
    #[arg(short, long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Output PGM; the truth CSV is written next to it unless `--truth` is given.
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Read specs from a truth CSV instead of the shape flags.
    #[arg(long, conflicts_with_all = ["alpha", "beta", "nominal", "aspect"])]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub cx: Option<f64>,
    #[arg(long)]
    pub cy: Option<f64>,
    /// Short radius.
    #[arg(long, requires = "beta", conflicts_with_all = ["nominal", "aspect"])]
    pub alpha: Option<f64>,
    /// Long radius.
    #[arg(long, requires = "alpha")]
    pub beta: Option<f64>,
    /// Nominal radius `√(αβ)`, used with `--aspect`.
    #[arg(long, default_value_t = 8.0)]
    pub nominal: f64,
    /// Aspect ratio `β/α`, used with `--nominal`.
    #[arg(long, default_value_t = 1.0)]
    pub aspect: f64,
    /// Long-axis angle in radians, counterclockwise as displayed.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub theta: f64,
    #[arg(long, default_value_t = 200.0, allow_hyphen_values = true)]
    pub contrast: f64,
    #[arg(long, default_value_t = 30.0)]
    pub baseline: f64,
    /// Standard deviation of additive Gaussian noise.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 256)]
    pub width: usize,
    #[arg(long, default_value_t = 256)]
    pub height: usize,
}

impl SynthArgs {
    fn flag_spec(&self) -> GaussianSignalSpec {
        let (alpha, beta) = match (self.alpha, self.beta) {
            (Some(a), Some(b)) => (a, b),
            _ => (self.nominal / self.aspect.sqrt(), self.nominal * self.aspect.sqrt()),
        };
        GaussianSignalSpec {
            cx: self.cx.unwrap_or(self.width as f64 / 2.0),
            cy: self.cy.unwrap_or(self.height as f64 / 2.0),
            alpha,
            beta,
            theta: self.theta,
            c: self.contrast,
            d: self.baseline,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    pub features: PathBuf,
    pub truth: PathBuf,
    /// Per-match report CSV.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Largest center distance, in pixels, for a detection to match a truth.
    #[arg(long, default_value_t = 8.0)]
    pub max_dist: f64,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long, default_value_t = 50)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Noise standard deviations, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub noise: Vec<f64>,
    #[arg(long, default_value_t = 5.0)]
    pub nominal_min: f64,
    #[arg(long, default_value_t = 40.0)]
    pub nominal_max: f64,
    #[arg(long, default_value_t = 1.0)]
    pub aspect_min: f64,
    #[arg(long, default_value_t = 30.0)]
    pub aspect_max: f64,
    /// Smallest contrast magnitude drawn.
    #[arg(long, default_value_t = 16.0)]
    pub c_floor: f64,
    #[arg(long, default_value_t = 256)]
    pub width: usize,
    #[arg(long, default_value_t = 256)]
    pub height: usize,
    #[arg(long, default_value_t = 8.0)]
    pub max_dist: f64,
    /// Aggregate CSV; standard output when omitted.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Clone, Args)]
pub struct CurvesArgs {
    /// `H_vs_r`, `k_vs_r` or `ridge`.
    pub which: Curve,
    #[arg(long, default_value_t = 1.0)]
    pub min: f64,
    #[arg(long, default_value_t = 1000.0)]
    pub max: f64,
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
    /// Range and sample count of the second axis (`k`) of the ridge surface.
    #[arg(long, default_value_t = 1.0)]
    pub k_min: f64,
    #[arg(long, default_value_t = 10.0)]
    pub k_max: f64,
    #[arg(long, default_value_t = 50)]
    pub k_steps: usize,
    /// Output CSV; standard output when omitted.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.display().to_string(), source }
}

/// Detects features and writes the feature file. Returns the feature count.
pub fn cmd_detect(args: &DetectArgs) -> Result<usize, CliError> {
    let cfg = args.config.resolve()?;
    let img = load_pgm(&args.image)?;
    let feats = detect_features(&img, &cfg)?;
    write_features(&args.output, &feats)?;
    Ok(feats.len())
}

/// Paths written by [`cmd_synth`] and any warnings raised on the way.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutcome {
    pub image: PathBuf,
    pub truth: PathBuf,
    pub specs: Vec<GaussianSignalSpec>,
    pub warnings: Vec<String>,
}

pub fn cmd_synth(args: &SynthArgs) -> Result<SynthOutcome, CliError> {
    if args.width == 0 || args.height == 0 {
        return Err(CliError::Usage("image size must be positive".into()));
    }
    if !(args.noise >= 0.0) {
        return Err(CliError::Usage("noise must be non-negative".into()));
    }
    let mut specs = match &args.spec {
        Some(path) => read_truth_csv(path)?,
        None => vec![args.flag_spec()],
    };
    let mut warnings = Vec::new();
    for (i, s) in specs.iter_mut().enumerate() {
        s.validate()?;
        if !s.in_reference_ranges() {
            warnings.push(format!("spec {i} lies outside the reference experiment ranges"));
        }
        if !s.fits(args.width, args.height) {
            s.cx = args.width as f64 / 2.0;
            s.cy = args.height as f64 / 2.0;
            let note = if s.fits(args.width, args.height) { "" } else { "; it still exceeds the frame" };
            warnings.push(format!("spec {i} does not fit the frame; recentered{note}"));
        }
    }
    // Same order as the sweep: quantize the clean render, add noise, quantize again.
    let clean = render_many(&specs, args.width, args.height, true)?;
    let img = if args.noise > 0.0 { quantize(&add_gaussian_noise(&clean, args.noise, args.seed)) } else { clean };
    let truth = args.truth.clone().unwrap_or_else(|| args.output.with_extension("csv"));
    save_pgm(&img, &args.output)?;
    write_truth_csv(&truth, &specs)?;
    Ok(SynthOutcome { image: args.output.clone(), truth, specs, warnings })
}

pub fn cmd_eval(args: &EvalArgs) -> Result<EvalReport, CliError> {
    let detected: Vec<_> = read_features(&args.features)?.iter().map(|r| r.to_feature()).collect();
    let truth = read_truth_csv(&args.truth)?;
    let report = evaluate(&detected, &truth, args.max_dist);
    if let Some(out) = &args.output {
        write_report_csv(out, &report)?;
    }
    Ok(report)
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<Vec<SweepRow>, CliError> {
    if args.trials == 0 {
        return Err(CliError::Usage("--trials must be at least 1".into()));
    }
    let mut cfg = args.config.resolve()?;
    cfg.seed = args.seed;
    let sweep = SweepConfig {
        trials: args.trials,
        seed: args.seed,
        noise_levels: args.noise.clone(),
        ranges: SpecRanges {
            nominal: (args.nominal_min, args.nominal_max),
            aspect: (args.aspect_min, args.aspect_max),
            c_floor: args.c_floor,
            width: args.width,
            height: args.height,
            ..SpecRanges::default()
        },
        max_match_dist: args.max_dist,
    };
    let results = run_trials(&sweep, &cfg)?;
    let rows = aggregate(&results, &sweep.noise_levels);
    match &args.output {
        Some(path) => write_sweep_csv(fs::File::create(path).map_err(io_err(path))?, &rows)?,
        None => write_sweep_csv(std::io::stdout().lock(), &rows)?,
    }
    Ok(rows)
}

pub fn cmd_curves(args: &CurvesArgs) -> Result<usize, CliError> {
    let primary = linspace(args.min, args.max, args.steps);
    let secondary = linspace(args.k_min, args.k_max, args.k_steps);
    let table = emit_curves(args.which, &primary, &secondary);
    match &args.output {
        Some(path) => table.write_csv(fs::File::create(path).map_err(io_err(path))?)?,
        None => table.write_csv(std::io::stdout().lock())?,
    }
    Ok(table.rows.len())
}

/// Runs one parsed command line, printing summaries to standard output and
/// warnings to standard error.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Detect(a) => {
            let n = cmd_detect(a)?;
            println!("{n} features written to {}", a.output.display());
        }
        Command::Synth(a) => {
            let out = cmd_synth(a)?;
            for w in &out.warnings {
                eprintln!("warning: {w}");
            }
            println!("wrote {} and {}", out.image.display(), out.truth.display());
        }
        Command::Eval(a) => {
            for line in cmd_eval(a)?.summary_lines() {
                println!("{line}");
            }
        }
        Command::Sweep(a) => {
            cmd_sweep(a)?;
        }
        Command::Curves(a) => {
            cmd_curves(a)?;
        }
    }
    Ok(())
}
