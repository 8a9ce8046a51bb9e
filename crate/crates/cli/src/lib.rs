//! The `dashpc` command-line tool.

pub mod commands;
pub mod error;
pub mod seq;

use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dashpc_core::acuity::DEFAULT_UNITS_PER_INCH;
use dashpc_core::subsample::{DEFAULT_GRID, DEFAULT_LEAF_THRESHOLD};
use dashpc_core::{Method, PlyEncoding};

pub use error::{CliError, ExitCode};
pub use seq::SequencePattern;

#[derive(Debug, Parser)]
#[command(
    name = "dashpc",
    version,
    about = "Adaptive point cloud streaming toolkit"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Reduce point density by a ratio or keep-percentage.
    Subsample(SubsampleArgs),
    /// Scale point coordinates by a percentage.
    Scale(ScaleArgs),
    /// Sub-sample to the lowest density the viewer can still resolve.
    Optimize(OptimizeArgs),
    /// Build a representation ladder and manifest from PLY frames.
    Package(PackageArgs),
    /// Serve a package directory over HTTP, optionally throttled.
    Serve(ServeArgs),
    /// Stream a manifest adaptively and write the session log.
    Stream(StreamArgs),
    /// Point-to-point PSNR of a degraded cloud against a reference.
    Psnr(PsnrArgs),
    /// Print PLY header information.
    Info(InfoArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Alg1,
    Alg2,
    Alg3,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Alg1 => Method::SortedCluster,
            MethodArg::Alg2 => Method::DensityTree,
            MethodArg::Alg3 => Method::OctreeNeighbors,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EncodingArg {
    Binary,
    Ascii,
}

impl From<EncodingArg> for PlyEncoding {
    fn from(e: EncodingArg) -> PlyEncoding {
        match e {
            EncodingArg::Binary => PlyEncoding::BinaryLittleEndian,
            EncodingArg::Ascii => PlyEncoding::Ascii,
        }
    }
}

/// One input file, or a numbered sequence.
#[derive(Debug, Args)]
pub struct InputArgs {
    /// Input PLY file.
    #[arg(required_unless_present = "seq", conflicts_with = "seq")]
    pub input: Option<PathBuf>,
    /// Frame sequence `<pattern>:<start>:<count>`, e.g. `f_%04d.ply:0:30`.
    #[arg(long)]
    pub seq: Option<SequencePattern>,
    /// Output file, or directory (required for sequences).
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = EncodingArg::Binary)]
    pub encoding: EncodingArg,
}

#[derive(Debug, Args)]
pub struct MethodArgs {
    #[arg(long, value_enum, default_value_t = MethodArg::Alg1)]
    pub method: MethodArg,
    /// Level-0 grid resolution (alg2).
    #[arg(long, default_value_t = DEFAULT_GRID)]
    pub grid: u32,
    /// Leaf occupancy bound (alg2).
    #[arg(long, default_value_t = DEFAULT_LEAF_THRESHOLD)]
    pub leaf: usize,
    /// Neighborhood size (alg3); defaults to the rounded ratio.
    #[arg(long)]
    pub cluster: Option<usize>,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct AmountArgs {
    /// Input-to-output point ratio (>= 1).
    #[arg(long)]
    pub ratio: Option<f64>,
    /// Percentage of points to keep, in (0, 100].
    #[arg(long)]
    pub percentage: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SubsampleArgs {
    #[command(flatten)]
    pub io: InputArgs,
    #[command(flatten)]
    pub amount: AmountArgs,
    #[command(flatten)]
    pub method: MethodArgs,
}

#[derive(Debug, Args)]
pub struct ScaleArgs {
    #[command(flatten)]
    pub io: InputArgs,
    /// Scale factor in percent (100 = unchanged).
    #[arg(long)]
    pub percentage: f64,
}

#[derive(Debug, Args)]
pub struct GeometryArgs {
    /// Eye-to-screen distance in inches.
    #[arg(long, default_value_t = 20.0)]
    pub distance: f64,
    /// Virtual camera to model distance in inches.
    #[arg(long, default_value_t = 0.0)]
    pub camera_distance: f64,
    /// Model scale factor.
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    /// Model coordinate units per inch.
    #[arg(long, default_value_t = DEFAULT_UNITS_PER_INCH)]
    pub units_per_inch: f64,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub io: InputArgs,
    #[command(flatten)]
    pub geometry: GeometryArgs,
    #[command(flatten)]
    pub method: MethodArgs,
}

#[derive(Debug, Args)]
pub struct PackageArgs {
    /// Input PLY frames, in playback order.
    #[arg(required_unless_present = "seq", conflicts_with = "seq")]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub seq: Option<SequencePattern>,
    /// Comma-separated ladder of ratios, highest density first.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16")]
    pub ratios: Vec<f64>,
    #[command(flatten)]
    pub method: MethodArgs,
    /// Output directory.
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = EncodingArg::Binary)]
    pub encoding: EncodingArg,
    /// Manifest-level BaseURL.
    #[arg(long)]
    pub base_url: Option<String>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Directory to serve.
    #[arg(long)]
    pub root: PathBuf,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: std::net::IpAddr,
    /// Rate (`2MB/s`, `8Mbps`), inline schedule (`0:8Mbps,5:1Mbps`) or a
    /// schedule file with one `<seconds> <rate>` per line.
    #[arg(long)]
    pub throttle: Option<String>,
    /// Access log file (line-delimited records).
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StreamArgs {
    /// Manifest URL or local path.
    #[arg(long)]
    pub mpd: String,
    #[command(flatten)]
    pub geometry: GeometryArgs,
    /// Throughput smoothing factor in (0, 1].
    #[arg(long, default_value_t = dashpc_net::client::DEFAULT_ALPHA)]
    pub alpha: f64,
    /// Decoded frames buffered ahead of playback.
    #[arg(long, default_value_t = dashpc_net::client::DEFAULT_BUFFER)]
    pub buffer: usize,
    /// Playback rate in frames per second.
    #[arg(long, default_value_t = 30.0)]
    pub fps: f64,
    /// Fraction of estimated throughput the client may spend.
    #[arg(long, default_value_t = dashpc_net::client::DEFAULT_SAFETY)]
    pub safety: f64,
    /// AdaptationSet id; the first set when omitted.
    #[arg(long)]
    pub adaptation_set: Option<String>,
    /// Listen for a viewer on this address.
    #[arg(long)]
    pub bridge: Option<SocketAddr>,
    /// With --bridge, wait for a viewer before streaming.
    #[arg(long, requires = "bridge")]
    pub wait_viewer: bool,
    /// Session log file; written to stdout when omitted.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AggregationArg {
    Max,
    Mean,
}

#[derive(Debug, Args)]
pub struct PsnrArgs {
    pub reference: PathBuf,
    pub degraded: PathBuf,
    /// Peak value; the reference bounding-box diagonal by default.
    #[arg(long, conflicts_with = "voxel_bits")]
    pub peak: Option<f64>,
    /// Use the voxel-grid peak `2^bits - 1`.
    #[arg(long)]
    pub voxel_bits: Option<u32>,
    #[arg(long, value_enum, default_value_t = AggregationArg::Max)]
    pub aggregation: AggregationArg,
    /// Print a JSON record instead of key=value lines.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct InfoArgs {
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
}
