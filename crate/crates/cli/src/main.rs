//! `l2h`: label construction, training, tiled prediction and accuracy
//! assessment for weakly supervised land-cover mapping.

mod commands;
mod manifest;
mod render;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "l2h",
    version,
    about = "Weakly supervised land-cover mapping from coarse labels",
    arg_required_else_help = true
)]
struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic scene: image, truth, three noisy products, roads.
    Synth(SynthArgs),
    /// Harmonize and intersect three products, then overlay roads.
    Fuse(FuseArgs),
    /// Train the network on an image and its coarse labels.
    Train(TrainArgs),
    /// Predict a class map with tiled inference.
    Predict(PredictArgs),
    /// Accuracy assessment.
    #[command(subcommand)]
    Assess(AssessCommand),
    /// Run synth (or given inputs), fuse, train, predict and assess in one go.
    Pipeline(PipelineArgs),
    /// Network utilities.
    #[command(subcommand)]
    Net(NetCommand),
}

/// Repeatable `key=value` overrides applied on top of the config file.
#[derive(Args, Debug, Clone, Default)]
pub struct Overrides {
    /// Flat `key = value` config file.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override a config key, e.g. `--set epochs=5` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[command(flatten)]
    pub cfg: Overrides,
    /// Alias of `--config` for scene specs.
    #[arg(long, value_name = "FILE", conflicts_with = "config")]
    pub spec: Option<PathBuf>,
    #[arg(long, value_name = "SEED")]
    pub seed: Option<u64>,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Also write PNG renderings of the truth and products.
    #[arg(long)]
    pub png: bool,
}

#[derive(Args, Debug)]
pub struct FuseArgs {
    #[arg(long, value_name = "LCR")]
    pub a: PathBuf,
    #[arg(long, value_name = "LCR")]
    pub b: PathBuf,
    #[arg(long, value_name = "LCR")]
    pub c: PathBuf,
    #[arg(long = "table-a", value_name = "FILE")]
    pub table_a: PathBuf,
    #[arg(long = "table-b", value_name = "FILE")]
    pub table_b: PathBuf,
    #[arg(long = "table-c", value_name = "FILE")]
    pub table_c: PathBuf,
    /// Road polylines; omit for no roads.
    #[arg(long, value_name = "FILE")]
    pub roads: Option<PathBuf>,
    #[arg(long = "road-width", value_name = "PX", default_value_t = 1)]
    pub road_width: usize,
    /// `override` (roads win) or `fill-only` (roads fill unlabeled pixels).
    #[arg(long, default_value = "override")]
    pub overlay: String,
    #[arg(long, value_name = "LCR")]
    pub out: PathBuf,
    #[arg(long, value_name = "JSON")]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub cfg: Overrides,
    #[arg(long, value_name = "LCR")]
    pub image: PathBuf,
    #[arg(long, value_name = "LCR")]
    pub labels: PathBuf,
    #[arg(long, value_name = "SEED")]
    pub seed: Option<u64>,
    #[arg(long, value_name = "N")]
    pub epochs: Option<usize>,
    /// Output directory for `model.l2hp`, `train_log.jsonl`, `run_manifest.json`.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long, value_name = "L2HP")]
    pub model: PathBuf,
    #[arg(long, value_name = "LCR")]
    pub image: PathBuf,
    #[arg(long, value_name = "LCR")]
    pub out: PathBuf,
    /// Per-pixel top probability grid.
    #[arg(long, value_name = "LCR")]
    pub cp: Option<PathBuf>,
    /// RGB rendering; a `.legend.json` is written next to it.
    #[arg(long, value_name = "PNG")]
    pub png: Option<PathBuf>,
    #[arg(long, value_name = "PX")]
    pub tile: Option<usize>,
    #[arg(long, value_name = "PX")]
    pub overlap: Option<usize>,
    /// `crop-center` or `prob-average`.
    #[arg(long)]
    pub blend: Option<String>,
    /// Skip tiling and run one forward pass over the whole image.
    #[arg(long, conflicts_with_all = ["tile", "overlap", "blend"])]
    pub full: bool,
}

#[derive(Subcommand, Debug)]
pub enum AssessCommand {
    /// Build a confusion matrix from a map and a reference grid.
    Matrix(MatrixArgs),
    /// OA, Kappa and per-class accuracies from a confusion matrix CSV.
    Metrics(MetricsArgs),
    /// Per-region area misestimation against reference shares.
    Areas(AreasArgs),
}

#[derive(Args, Debug)]
pub struct MatrixArgs {
    #[arg(long, value_name = "LCR")]
    pub map: PathBuf,
    #[arg(long, value_name = "LCR")]
    pub reference: PathBuf,
    /// Number of sample points; 0 compares every pixel.
    #[arg(long, default_value_t = 0)]
    pub samples: usize,
    /// `uniform` or `stratified`.
    #[arg(long, default_value = "stratified")]
    pub strategy: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_name = "CSV")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct MetricsArgs {
    #[arg(long, value_name = "CSV")]
    pub matrix: PathBuf,
    /// Write the metrics as JSON.
    #[arg(long, value_name = "JSON")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AreasArgs {
    #[arg(long, value_name = "LCR")]
    pub map: PathBuf,
    /// u8 grid of region ids (0 = outside every region).
    #[arg(long, value_name = "LCR")]
    pub regions: PathBuf,
    /// `region,class,share` CSV.
    #[arg(long, value_name = "CSV")]
    pub reference: PathBuf,
    #[arg(long, value_name = "CSV")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct PipelineArgs {
    #[command(flatten)]
    pub cfg: Overrides,
    #[arg(long, value_name = "SEED")]
    pub seed: Option<u64>,
    #[arg(long, value_name = "N")]
    pub epochs: Option<usize>,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Subcommand, Debug)]
pub enum NetCommand {
    /// Print layer shapes and the parameter count.
    Inspect(InspectArgs),
}

#[derive(Args, Debug)]
pub struct InspectArgs {
    /// Checkpoint to describe; without it the default backbone is shown.
    #[arg(long, value_name = "L2HP")]
    pub model: Option<PathBuf>,
    #[arg(long = "input-channels", default_value_t = 3)]
    pub input_channels: usize,
    #[arg(long, default_value_t = 11)]
    pub classes: usize,
    #[arg(long)]
    pub json: bool,
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("L2H_LOG", "warn");
    env_logger::Builder::from_env(env)
        .format_timestamp(None)
        .init();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: cannot start thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    let threads = rayon::current_num_threads();
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a, threads),
        Command::Fuse(a) => commands::fuse(a, threads),
        Command::Train(a) => commands::train(a, threads),
        Command::Predict(a) => commands::predict(a, threads),
        Command::Assess(AssessCommand::Matrix(a)) => commands::assess_matrix(a, threads),
        Command::Assess(AssessCommand::Metrics(a)) => commands::assess_metrics(a),
        Command::Assess(AssessCommand::Areas(a)) => commands::assess_areas(a, threads),
        Command::Pipeline(a) => commands::pipeline(a, threads),
        Command::Net(NetCommand::Inspect(a)) => commands::net_inspect(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::json!({ "error": e.name(), "message": e.to_string() });
            eprintln!("{line}");
            ExitCode::from(1)
        }
    }
}
