//! Library half of the `pcrd` command: argument types, the five
//! subcommands as functions returning their output text, and the mapping
//! from failures to exit codes.

mod output;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use pcrd::codec::{self, format_real, CodecError, ProxyCodecConfig};
use pcrd::metrics::MetricsConfig;
use pcrd::optimizer::{solve, SolveError, SolverConfig};
use pcrd::rdmodel::{fit, RdModels};
use pcrd::PointCloud;
use serde_json::{Map, Value};
use thiserror::Error;

pub use output::to_json;

#[derive(Debug, Parser)]
#[command(name = "pcrd", version, about = "Point-cloud rate-distortion toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Distortion report for a reference/test pair of PLY files (JSON).
    Metrics {
        reference: PathBuf,
        test: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Nine-pair pre-encoding sweep with the proxy codec (CSV).
    Sweep {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        common: Common,
    },
    /// Fit rate and distortion models to a measurement CSV (JSON).
    Fit {
        measurements: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Choose QPs for one or more target rates (JSON).
    Optimize {
        /// Models written by `fit`.
        #[arg(long)]
        models: PathBuf,
        #[command(flatten)]
        targets: Targets,
        #[command(flatten)]
        common: Common,
    },
    /// Sweep, fit, optimize and re-encode at each target rate (CSV).
    Pipeline {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        targets: Targets,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Args)]
pub struct Input {
    /// Input cloud (PLY).
    #[arg(required_unless_present = "synthetic", conflicts_with = "synthetic")]
    pub input: Option<PathBuf>,
    /// Use a generated textured cloud with this many points instead of a
    /// file; the seed comes from PCRD_SEED.
    #[arg(long, value_name = "POINTS")]
    pub synthetic: Option<usize>,
}

#[derive(Debug, Args)]
pub struct Targets {
    /// Target rate in Mbps; repeat for several.
    #[arg(long = "target-rate", value_name = "MBPS", required = true)]
    pub target_rates: Vec<f64>,
}

#[derive(Debug, Args, Default)]
pub struct Common {
    /// Write the result here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Neighbors used for normal estimation.
    #[arg(long = "normals-k", global = true)]
    pub normals_k: Option<usize>,
    /// Frames per second for bit-rate normalization.
    #[arg(long = "frame-rate", global = true)]
    pub frame_rate: Option<f64>,
    /// JSON object (inline, or a path to a file) overriding solver and
    /// codec settings by field name.
    #[arg(long, global = true, value_name = "JSON")]
    pub config: Option<String>,
}

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad input: unreadable or malformed files, invalid flags or config.
    #[error("{stage}: {message}")]
    Input { stage: &'static str, message: String },
    /// The solver could not produce a result (infeasible budget, blow-up).
    #[error("{stage}: {message}")]
    Solver { stage: &'static str, message: String },
    /// A broken internal invariant or an output failure.
    #[error("{stage}: {message}")]
    Internal { stage: &'static str, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input { .. } => 2,
            CliError::Solver { .. } => 3,
            CliError::Internal { .. } => 4,
        }
    }

    fn input(stage: &'static str, e: impl std::fmt::Display) -> Self {
        CliError::Input {
            stage,
            message: e.to_string(),
        }
    }
}

fn solver_error(stage: &'static str, e: SolveError) -> CliError {
    match e {
        SolveError::InvalidConfig(_) | SolveError::InvalidTarget(_) => CliError::input(stage, e),
        SolveError::Infeasible { .. } | SolveError::NonFinite { .. } => CliError::Solver {
            stage,
            message: e.to_string(),
        },
    }
}

fn codec_error(stage: &'static str, e: CodecError) -> CliError {
    match e {
        CodecError::Metric(_) => CliError::Internal {
            stage,
            message: e.to_string(),
        },
        _ => CliError::input(stage, e),
    }
}

/// Every tunable setting after `--config` and the dedicated flags.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    pub solver: SolverConfig,
    pub codec: ProxyCodecConfig,
    pub metrics: MetricsConfig,
}

fn field_names<T: serde::Serialize>(value: &T) -> Vec<String> {
    match serde_json::to_value(value) {
        Ok(Value::Object(map)) => map.keys().cloned().collect(),
        _ => Vec::new(),
    }
}

impl Settings {
    /// Applies `--config` first, then `--normals-k` and `--frame-rate`.
    pub fn from_flags(common: &Common) -> Result<Self, CliError> {
        let mut settings = Settings::default();
        if let Some(raw) = &common.config {
            settings.apply_json(raw)?;
        }
        if let Some(k) = common.normals_k {
            settings.metrics.normals_k = k;
        }
        if let Some(fps) = common.frame_rate {
            settings.codec.frame_rate = fps;
        }
        if settings.metrics.normals_k < 3 {
            return Err(CliError::input("config", "normals_k must be at least 3"));
        }
        settings.solver.validate().map_err(|e| CliError::input("config", e))?;
        settings.codec.validate().map_err(|e| CliError::input("config", e))?;
        Ok(settings)
    }

    fn apply_json(&mut self, raw: &str) -> Result<(), CliError> {
        let text = if raw.trim_start().starts_with('{') {
            raw.to_string()
        } else {
            std::fs::read_to_string(raw).map_err(|e| CliError::input("config", format!("{raw}: {e}")))?
        };
        let overrides: Map<String, Value> =
            serde_json::from_str(&text).map_err(|e| CliError::input("config", format!("not a JSON object: {e}")))?;

        let solver_fields = field_names(&self.solver);
        let codec_fields = field_names(&self.codec);
        let mut solver = serde_json::to_value(self.solver).expect("config serializes");
        let mut codec = serde_json::to_value(&self.codec).expect("config serializes");
        let mut metrics = serde_json::to_value(self.metrics).expect("config serializes");
        for (key, value) in overrides {
            let target = if solver_fields.contains(&key) {
                &mut solver
            } else if codec_fields.contains(&key) {
                &mut codec
            } else if key == "normals_k" {
                &mut metrics
            } else {
                return Err(CliError::input("config", format!("unknown setting {key:?}")));
            };
            target[key.as_str()] = value;
        }
        let bad = |e: serde_json::Error| CliError::input("config", e);
        self.solver = serde_json::from_value(solver).map_err(bad)?;
        self.codec = serde_json::from_value(codec).map_err(bad)?;
        self.metrics = serde_json::from_value(metrics).map_err(bad)?;
        Ok(())
    }
}

fn load_cloud(path: &Path) -> Result<PointCloud, CliError> {
    pcrd::load_ply(path).map_err(|e| CliError::input("read", format!("{}: {e}", path.display())))
}

fn input_cloud(input: &Input) -> Result<PointCloud, CliError> {
    match (&input.input, input.synthetic) {
        (_, Some(points)) => {
            if points == 0 {
                return Err(CliError::input("read", "--synthetic needs at least one point"));
            }
            Ok(pcrd::synth::textured_blob(points, pcrd::synth::seed_from_env(0)))
        }
        (Some(path), None) => load_cloud(path),
        (None, None) => Err(CliError::input("read", "no input cloud given")),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, stage: &'static str) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::input(stage, format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::input(stage, format!("{}: {e}", path.display())))
}

pub fn cmd_metrics(reference: &Path, test: &Path, settings: &Settings) -> Result<String, CliError> {
    let reference = load_cloud(reference)?;
    let test = load_cloud(test)?;
    let report = pcrd::full_report(&reference, &test, &settings.metrics).map_err(|e| match e {
        pcrd::metrics::MetricError::EmptyCloud => CliError::input("metrics", e),
        _ => CliError::Internal {
            stage: "metrics",
            message: e.to_string(),
        },
    })?;
    Ok(to_json(&report))
}

pub fn cmd_sweep(cloud: &PointCloud, settings: &Settings) -> Result<String, CliError> {
    let sweep = codec::preencode_sweep(cloud, &settings.codec, &settings.metrics).map_err(|e| codec_error("sweep", e))?;
    let mut out = Vec::new();
    codec::write_csv(&sweep, &mut out).expect("writing to memory");
    Ok(String::from_utf8(out).expect("CSV is ASCII"))
}

pub fn cmd_fit(measurements: &Path) -> Result<String, CliError> {
    let rows = codec::ingest_csv(measurements).map_err(|e| CliError::input("fit", format!("{}: {e}", measurements.display())))?;
    let models = fit(&rows).map_err(|e| CliError::input("fit", e))?;
    Ok(to_json(&models))
}

/// One result object for a single target, an array for several.
pub fn cmd_optimize(models: &RdModels, targets: &[f64], settings: &Settings) -> Result<String, CliError> {
    let results = targets
        .iter()
        .map(|&t| solve(models, t, &settings.solver).map_err(|e| solver_error("optimize", e)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(match results.as_slice() {
        [single] => to_json(single),
        many => to_json(&many),
    })
}

/// Header of the rate-distortion table written by `pipeline`.
pub const PIPELINE_HEADER: &str = "target_rate,achieved_rate,model_rate,q_g,q_c,D,pc_psnr";

/// One pipeline row per target rate, in the order given.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineRow {
    pub target_rate: f64,
    /// Rate the proxy codec spends at the chosen QPs.
    pub achieved_rate: f64,
    /// Model rate at the chosen QPs.
    pub model_rate: f64,
    pub q_g: u32,
    pub q_c: u32,
    /// Measured unified distortion at the chosen QPs.
    pub distortion: f64,
    pub pc_psnr: f64,
}

pub fn run_pipeline(cloud: &PointCloud, targets: &[f64], settings: &Settings) -> Result<Vec<PipelineRow>, CliError> {
    let reference = codec::prepare_reference(cloud, &settings.metrics).map_err(|e| codec_error("sweep", e))?;
    let sweep =
        codec::preencode_sweep(&reference, &settings.codec, &settings.metrics).map_err(|e| codec_error("sweep", e))?;
    let models = fit(&sweep).map_err(|e| CliError::input("fit", e))?;
    targets
        .iter()
        .map(|&target| {
            let result = solve(&models, target, &settings.solver).map_err(|e| solver_error("optimize", e))?;
            let measured = codec::measure(&reference, result.q_g_star, result.q_c_star, &settings.codec, &settings.metrics)
                .map_err(|e| codec_error("encode", e))?;
            Ok(PipelineRow {
                target_rate: target,
                achieved_rate: measured.measurement.rate,
                model_rate: result.model_rate,
                q_g: result.q_g_star,
                q_c: result.q_c_star,
                distortion: measured.report.D,
                pc_psnr: measured.report.pc_psnr,
            })
        })
        .collect()
}

pub fn pipeline_csv(rows: &[PipelineRow]) -> String {
    let mut out = String::new();
    writeln!(out, "{PIPELINE_HEADER}").unwrap();
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            format_real(r.target_rate),
            format_real(r.achieved_rate),
            format_real(r.model_rate),
            r.q_g,
            r.q_c,
            format_real(r.distortion),
            format_real(r.pc_psnr)
        )
        .unwrap();
    }
    out
}

pub fn cmd_pipeline(cloud: &PointCloud, targets: &[f64], settings: &Settings) -> Result<String, CliError> {
    Ok(pipeline_csv(&run_pipeline(cloud, targets, settings)?))
}

/// Executes a parsed command line and returns the text to emit.
pub fn execute(cli: &Cli) -> Result<String, CliError> {
    match &cli.command {
        Command::Metrics {
            reference,
            test,
            common,
        } => cmd_metrics(reference, test, &Settings::from_flags(common)?),
        Command::Sweep { input, common } => {
            let settings = Settings::from_flags(common)?;
            cmd_sweep(&input_cloud(input)?, &settings)
        }
        Command::Fit { measurements, common } => {
            Settings::from_flags(common)?;
            cmd_fit(measurements)
        }
        Command::Optimize {
            models,
            targets,
            common,
        } => {
            let settings = Settings::from_flags(common)?;
            let models: RdModels = read_json(models, "optimize")?;
            cmd_optimize(&models, &targets.target_rates, &settings)
        }
        Command::Pipeline { input, targets, common } => {
            let settings = Settings::from_flags(common)?;
            cmd_pipeline(&input_cloud(input)?, &targets.target_rates, &settings)
        }
    }
}

fn out_path(cli: &Cli) -> Option<&Path> {
    let common = match &cli.command {
        Command::Metrics { common, .. }
        | Command::Sweep { common, .. }
        | Command::Fit { common, .. }
        | Command::Optimize { common, .. }
        | Command::Pipeline { common, .. } => common,
    };
    common.out.as_deref()
}

/// Parses `args`, runs the command and writes its output. Returns the
/// process exit code; usage errors are reported by clap itself.
pub fn main_with_args(args: impl IntoIterator<Item = impl Into<OsString> + Clone>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = execute(&cli).and_then(|text| match out_path(&cli) {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::Internal {
            stage: "write",
            message: format!("{}: {e}", path.display()),
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("pcrd: {e}");
            e.exit_code()
        }
    }
}
