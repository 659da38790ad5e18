use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "pcm", version, about = "Point cloud Mamba: serialization analysis, inference, verification and benchmarks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Serialize a cloud and report locality metrics.
    Serialize(SerializeArgs),
    /// Run the model on a cloud and write logits or per-point labels as CSV.
    Forward(ForwardArgs),
    /// Run the invariant and gradient check suites.
    Verify(VerifyArgs),
    /// Time the bidirectional Mamba stack against a naive attention baseline.
    Bench(BenchArgs),
    /// Print parameter counts and analytic multiply-accumulates.
    Inspect(InspectArgs),
    /// Linear probe on frozen random-init features of a synthetic corpus.
    Probe(ProbeArgs),
}

/// Where the point cloud comes from.
#[derive(Debug, Clone, Args)]
pub struct CloudArgs {
    /// ASCII `x y z [features...]` file.
    #[arg(long, conflicts_with = "gen", required_unless_present = "gen")]
    pub input: Option<PathBuf>,
    /// Generated cloud: sphere, cube, torus, plane, uniform or grid
    /// (grid needs a perfect-cube --n).
    #[arg(long)]
    pub gen: Option<String>,
    #[arg(long, default_value_t = 1024)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Paper,
    Bijective,
}

#[derive(Debug, Clone, Args)]
pub struct SerializeArgs {
    #[command(flatten)]
    pub cloud: CloudArgs,
    #[arg(long, default_value = "xyz")]
    pub order: String,
    #[arg(long, default_value_t = 64)]
    pub grid: u64,
    #[arg(long, value_enum, default_value_t = ModeArg::Bijective)]
    pub mode: ModeArg,
    /// Neighbour count for the adjacency rate.
    #[arg(long, default_value_t = 8)]
    pub window: usize,
    /// Report every order name instead of only --order.
    #[arg(long)]
    pub compare_all: bool,
    /// Write the permutation as CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Cls,
    Seg,
}

#[derive(Debug, Clone, Args)]
pub struct ForwardArgs {
    /// Preset name (pcm, pcm-tiny) or TOML file.
    #[arg(long, default_value = "pcm-tiny")]
    pub config: String,
    #[arg(long, value_enum, default_value_t = TaskArg::Cls)]
    pub task: TaskArg,
    #[command(flatten)]
    pub cloud: CloudArgs,
    /// Weight archive; without it the model is randomly initialised from --seed.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Serialization,
    Ssm,
    Gam,
    Model,
    All,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[arg(long, value_enum, default_value_t = Suite::All)]
    pub suite: Suite,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Baseline {
    None,
    Attention,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "1024,2048,4096,8192")]
    pub lengths: Vec<usize>,
    #[arg(long, default_value_t = 64)]
    pub channels: usize,
    #[arg(long, default_value_t = 3)]
    pub repeat: usize,
    #[arg(long, value_enum, default_value_t = Baseline::Attention)]
    pub baseline: Baseline,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct InspectArgs {
    #[arg(long, default_value = "pcm-tiny")]
    pub config: String,
}

#[derive(Debug, Clone, Args)]
pub struct ProbeArgs {
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    #[arg(long, default_value_t = 100)]
    pub per_class: usize,
    #[arg(long, default_value_t = 1024)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}
