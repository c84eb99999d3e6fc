use std::path::PathBuf;

use bkc_core::bconv::Padding;
use bkc_core::codec::Layout;
use bkc_core::stats::RankLayout;
use clap::{Args, Parser, Subcommand, ValueEnum};

pub const DEFAULT_LAYOUT: &str = "0:5,10:6,110:6,1110:8";

#[derive(Debug, Parser)]
#[command(
    name = "bkc",
    version,
    about = "Compression toolkit for binary 3x3 convolution kernels"
)]
pub struct Cli {
    /// Seed for every randomized fixture.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Packing register width R in bits.
    #[arg(long, global = true, default_value_t = 128)]
    pub register_width: usize,
    /// Code layout as prefix:index_bits pairs.
    #[arg(long, global = true, default_value = DEFAULT_LAYOUT)]
    pub layout: Layout,
    /// Write the JSON report here instead of stdout.
    #[arg(long, global = true)]
    pub json_out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic kernels with target coverage.
    Synth(SynthArgs),
    /// Generate a random feature map.
    SynthMap(SynthMapArgs),
    /// Sequence frequency and coverage per input group.
    Analyze(AnalyzeArgs),
    /// Encode kernels into a BNC1 file.
    Compress(CompressArgs),
    /// Substitute rare sequences by frequent hamming-1 neighbours.
    Cluster(ClusterArgs),
    /// Run a 3x3 binary convolution.
    Eval(EvalArgs),
    /// Decode a BNC1 file on the decoding-unit model.
    Simulate(SimulateArgs),
    /// Tabulate ratios from earlier reports.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RankOrder {
    NearHead,
    Shuffled,
}

impl From<RankOrder> for RankLayout {
    fn from(r: RankOrder) -> Self {
        match r {
            RankOrder::NearHead => RankLayout::NearHead,
            RankOrder::Shuffled => RankLayout::Shuffled,
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Use the coverage profile of reference block 1..=13.
    #[arg(long, conflicts_with_all = ["top64", "top256"])]
    pub block: Option<usize>,
    #[arg(long, requires = "top256")]
    pub top64: Option<f64>,
    #[arg(long, requires = "top64")]
    pub top256: Option<f64>,
    #[arg(long, default_value_t = 1 << 17)]
    pub channels: usize,
    /// Rank tier boundaries, e.g. 32,160,416.
    #[arg(long, value_delimiter = ',')]
    pub tiers: Option<Vec<usize>>,
    #[arg(long, value_enum, default_value = "near-head")]
    pub rank_order: RankOrder,
    /// Place the all-minus and all-plus sequences at ranks 0 and 1.
    #[arg(long)]
    pub anchors: bool,
    #[arg(long, default_value_t = 128)]
    pub in_channels: usize,
    #[arg(long, default_value_t = 256)]
    pub out_channels: usize,
    /// Output directory for the kernel files.
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthMapArgs {
    #[arg(long)]
    pub channels: usize,
    #[arg(long)]
    pub height: usize,
    #[arg(long)]
    pub width: usize,
    /// Store sign bits packed at --register-width instead of floats.
    #[arg(long)]
    pub packed: bool,
    /// Fill every value with this constant instead of N(0, 1) samples.
    #[arg(long, allow_negative_numbers = true)]
    pub fill: Option<f32>,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Kernel files or directories; each argument is one group.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompressArgs {
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Output file, or directory with --per-kernel.
    #[arg(short, long)]
    pub output: PathBuf,
    /// One code per kernel instead of one per block.
    #[arg(long)]
    pub per_kernel: bool,
    /// Substitute rare sequences before encoding.
    #[arg(long)]
    pub cluster: bool,
    #[arg(long, default_value_t = 32)]
    pub m: usize,
    #[arg(long, default_value_t = 256)]
    pub n: usize,
    /// Row label used by `report`; defaults to the first input's name.
    #[arg(long)]
    pub label: Option<String>,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, default_value_t = 32)]
    pub m: usize,
    #[arg(long, default_value_t = 256)]
    pub n: usize,
    /// Grid over --m-values x --n-values and report ratios only.
    #[arg(long)]
    pub sweep: bool,
    #[arg(long, value_delimiter = ',', default_value = "16,32,64,128")]
    pub m_values: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "64,128,192,256")]
    pub n_values: Vec<usize>,
    /// Directory for the substituted kernels.
    #[arg(short, long, required_unless_present = "sweep")]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub label: Option<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq, Eq)]
pub enum PaddingArg {
    Valid,
    MinusOne,
}

impl From<PaddingArg> for Padding {
    fn from(p: PaddingArg) -> Self {
        match p {
            PaddingArg::Valid => Padding::Valid,
            PaddingArg::MinusOne => Padding::MinusOne,
        }
    }
}

#[derive(Debug, Args)]
#[group(id = "mode", multiple = false)]
pub struct EvalMode {
    /// xnor/popcount path (default).
    #[arg(long)]
    pub packed: bool,
    /// Plain ±1 arithmetic.
    #[arg(long)]
    pub reference: bool,
    /// Run both paths and fail on any difference.
    #[arg(long)]
    pub check: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// BNK1 kernel or BNP1 packed kernel.
    #[arg(long)]
    pub kernel: PathBuf,
    /// BNF1 feature map.
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub mode: EvalMode,
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    #[arg(long, value_enum, default_value = "valid")]
    pub padding: PaddingArg,
    /// BNO1 output file.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Earlier BNO1 output to diff against.
    #[arg(long)]
    pub baseline: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    pub input: PathBuf,
    /// Kernel shape OUTxIN for the packed output; defaults to 1xCOUNT.
    #[arg(long)]
    pub shape: Option<String>,
    #[arg(long)]
    pub fetch_granularity: Option<usize>,
    #[arg(long)]
    pub input_buffer: Option<usize>,
    #[arg(long)]
    pub table_bytes: Option<usize>,
    #[arg(long)]
    pub register_file: Option<usize>,
    #[arg(long)]
    pub mem_latency: Option<u64>,
    #[arg(long)]
    pub consumer_cycles: Option<u64>,
    /// BNP1 file for the packed kernel.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// JSON reports written by compress or cluster.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// JSON map of component to storage share; must include conv3x3.
    #[arg(long)]
    pub shares: Option<PathBuf>,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}
