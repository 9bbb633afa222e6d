//! Command-line driver: corpus simulation, generator training, outlier
//! generation by all four methods, open-set evaluation, experiment sweeps,
//! and report/plot emission.
//!
//! Exit codes: 0 success, 2 usage/config error, 3 runtime failure.

mod cmds;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

#[derive(Parser)]
#[command(name = "openrf", version, about = "Open-set RF fingerprint authentication experiments")]
struct Cli {
    /// Master seed; every stochastic stage derives from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for generated files (default: current directory).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Use the full-scale experiment defaults (71 transmitters, 200-1500
    /// packets, 30 held-out unknowns). Much slower than the desk defaults.
    #[arg(long, global = true)]
    paper_scale: bool,
    /// Optional JSON config file; explicit flags win over file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ChannelArg {
    Awgn,
    Rayleigh,
    Rician,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelArg {
    Vae,
    Cvae,
    Ae,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Vae,
    Cvae,
    Ellipsoid,
    LatentOpt,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SweepKindArg {
    Supervised,
    Blind,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate a labeled transmitter corpus.
    Simulate(SimulateArgs),
    /// Train a generative model (vae/cvae/ae) on corpus transmitters.
    TrainGen(TrainGenArgs),
    /// Generate outlier samples with a trained model or blind method.
    Generate(GenerateArgs),
    /// Train a One-vs-All classifier on a split and report test accuracy.
    Evaluate(EvaluateArgs),
    /// Run an experiment sweep and emit CSV, manifest and SVG plots.
    Sweep(SweepArgs),
    /// Re-plot and summarize an existing sweep CSV.
    Report(ReportArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Number of transmitters.
    #[arg(long)]
    tx: Option<usize>,
    #[arg(long)]
    packets_min: Option<u32>,
    #[arg(long)]
    packets_max: Option<u32>,
    /// SNR in dB (>= 200 means noiseless).
    #[arg(long)]
    snr: Option<f64>,
    #[arg(long, value_enum)]
    channel: Option<ChannelArg>,
    /// Rician K-factor in dB (rician channel only).
    #[arg(long)]
    rician_k: Option<f64>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct TrainGenArgs {
    #[arg(long, value_enum)]
    model: ModelArg,
    #[arg(long)]
    corpus: PathBuf,
    /// Transmitter ids the model trains on; for cvae the class index is the
    /// position in this list.
    #[arg(long, value_delimiter = ',')]
    ids: Vec<u16>,
    #[arg(long)]
    latent: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    method: MethodArg,
    /// Number of outlier samples to generate.
    #[arg(long)]
    count: Option<usize>,
    /// Trained model file (vae/cvae for supervised, ae for blind methods).
    #[arg(long)]
    model: PathBuf,
    /// Corpus with the authorized samples (blind methods).
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Authorized transmitter ids (blind methods).
    #[arg(long, value_delimiter = ',')]
    ids: Vec<u16>,
    /// Shell thickness (ellipsoid method).
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    outer_iters: Option<usize>,
    #[arg(long)]
    inner_steps: Option<usize>,
    #[arg(long)]
    inner_lr: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    judge_epochs: Option<usize>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, value_delimiter = ',')]
    authorized: Vec<u16>,
    /// Known-outlier transmitters included in training.
    #[arg(long, value_delimiter = ',')]
    known: Vec<u16>,
    #[arg(long, value_delimiter = ',')]
    test_outliers: Vec<u16>,
    /// Generated-outlier corpus appended to training.
    #[arg(long)]
    augment: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    /// Also write the result as JSON.
    #[arg(long)]
    out_json: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_enum)]
    kind: SweepKindArg,
    #[arg(long)]
    corpus: PathBuf,
    /// Methods to run: vae,cvae (supervised) or ellipsoid,latent-opt (blind).
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Known-outlier set sizes (supervised).
    #[arg(long, value_delimiter = ',')]
    k_sizes: Option<Vec<usize>>,
    /// Authorized set sizes (blind).
    #[arg(long, value_delimiter = ',')]
    a_sizes: Option<Vec<usize>>,
    /// Authorized set size (supervised).
    #[arg(long)]
    a_size: Option<usize>,
    /// Held-out unknown transmitter count.
    #[arg(long)]
    o_size: Option<usize>,
    /// Generated-outlier budget per cell.
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    latent: Option<usize>,
    /// One-vs-All training epoch cap.
    #[arg(long)]
    epochs: Option<usize>,
    /// Generator training epochs.
    #[arg(long)]
    gen_epochs: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    delta_grid: Option<Vec<f64>>,
    #[arg(long)]
    inner_steps: Option<usize>,
    #[arg(long)]
    outer_iters: Option<usize>,
    /// Base name for the output files.
    #[arg(long)]
    name: Option<String>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    csv: PathBuf,
    #[arg(long)]
    delta_csv: Option<PathBuf>,
    #[arg(long)]
    name: Option<String>,
}

/// Optional JSON defaults; any explicit flag wins.
#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    out_dir: Option<PathBuf>,
    jobs: Option<usize>,
    paper_scale: Option<bool>,
    tx: Option<usize>,
    packets_min: Option<u32>,
    packets_max: Option<u32>,
    snr: Option<f64>,
    budget: Option<usize>,
    latent: Option<usize>,
    epochs: Option<usize>,
    gen_epochs: Option<usize>,
    tau: Option<f64>,
    seeds: Option<Vec<u64>>,
    delta_grid: Option<Vec<f64>>,
}

pub(crate) enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => m,
        }
    }
}

pub(crate) fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub(crate) fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Resolved global settings after merging flags and the config file.
pub(crate) struct Globals {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub paper_scale: bool,
    pub file: FileConfig,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let file: FileConfig = match &cli.config {
        Some(path) => match std::fs::read_to_string(path)
            .map_err(|e| e.to_string())
            .and_then(|s| serde_json::from_str(&s).map_err(|e| e.to_string()))
        {
            Ok(cfg) => cfg,
            Err(e) => {
                eprintln!("error: config file {}: {e}", path.display());
                return ExitCode::from(2);
            }
        },
        None => FileConfig::default(),
    };

    if let Some(jobs) = cli.jobs.or(file.jobs) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(2);
        }
    }

    let globals = Globals {
        seed: cli.seed.or(file.seed).unwrap_or(0),
        out_dir: cli
            .out_dir
            .clone()
            .or_else(|| file.out_dir.clone())
            .unwrap_or_else(|| PathBuf::from(".")),
        paper_scale: cli.paper_scale || file.paper_scale.unwrap_or(false),
        file,
    };

    let result = match cli.cmd {
        Cmd::Simulate(args) => cmds::simulate(&globals, &args),
        Cmd::TrainGen(args) => cmds::train_gen(&globals, &args),
        Cmd::Generate(args) => cmds::generate(&globals, &args),
        Cmd::Evaluate(args) => cmds::evaluate(&globals, &args),
        Cmd::Sweep(args) => cmds::sweep(&globals, &args),
        Cmd::Report(args) => cmds::report(&globals, &args),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
