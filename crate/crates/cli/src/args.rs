use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "cvdsm",
    version,
    about = "Cross-view geo-localization: polar alignment and circular correlation matching"
)]
pub struct Cli {
    /// Worker threads for data-parallel stages (1 runs everything sequentially; default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Seed for every random choice made by the run.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Log verbosity on standard error.
    #[arg(long, global = true, value_enum, default_value_t = LogLevel::Warn)]
    pub log_level: LogLevel,

    /// Omit the wall-clock timestamp from reports so identical runs give identical files.
    #[arg(long, global = true)]
    pub no_timestamp: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LogLevel {
    Error,
    Warn,
    Info,
    Debug,
    Trace,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Polar-transform a square aerial image into the ground-view frame.
    Polar(PolarArgs),
    /// Extract feature volumes for every manifest row into a feature store.
    Extract(ExtractArgs),
    /// Generate synthetic aerial/ground pairs with exact orientation ground truth.
    Synth(SynthArgs),
    /// Validate and normalize an aerial feature store for querying.
    Index(IndexArgs),
    /// Match one ground volume against one aerial volume.
    Match(MatchArgs),
    /// Rank the index for every query volume and write the top K per query.
    Query(QueryArgs),
    /// Query, then report recall, distance recall and orientation metrics.
    Evaluate(EvaluateArgs),
    /// Time spectral and spatial query paths and report the flop model.
    Bench(BenchArgs),
    /// Train the toy linear embedder with the triplet loss.
    TrainToy(TrainToyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PathArg {
    Spatial,
    Fft,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ViewArg {
    Ground,
    Aerial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    BlockMean,
    GradientHistogram,
}

#[derive(Debug, Args)]
pub struct PolarArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Aerial image side in pixels.
    #[arg(long)]
    pub sa: usize,
    /// Output height in pixels.
    #[arg(long)]
    pub hg: usize,
    /// Output width in pixels.
    #[arg(long)]
    pub wg: usize,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// CSV with header pair_id,ground,aerial[,lat,lon][,azimuth]; paths relative to the CSV.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Feature grid height.
    #[arg(long, default_value_t = 4)]
    pub hg: usize,
    /// Feature grid width for a full panorama.
    #[arg(long, default_value_t = 64)]
    pub wg: usize,
    /// Channels per cell.
    #[arg(long, default_value_t = 16)]
    pub c: usize,
    #[arg(long, value_enum, default_value_t = ViewArg::Ground)]
    pub view: ViewArg,
    #[arg(long, value_enum, default_value_t = ModeArg::BlockMean)]
    pub mode: ModeArg,
    /// Polar image height used for aerial images.
    #[arg(long, default_value_t = 16)]
    pub polar_h: usize,
    /// Polar image width used for aerial images.
    #[arg(long, default_value_t = 64)]
    pub polar_w: usize,
    /// Ground field of view in degrees; narrower views keep the leftmost columns.
    #[arg(long, default_value_t = 360.0)]
    pub fov: f64,
    /// Rotate each ground panorama by this many degrees before cropping.
    #[arg(long, conflicts_with = "random_azimuth")]
    pub azimuth: Option<f64>,
    /// Rotate each ground panorama by a seeded random column shift.
    #[arg(long)]
    pub random_azimuth: bool,
    /// Write query_id,aerial_id,azimuth ground truth for the extracted queries.
    #[arg(long)]
    pub gt_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 256)]
    pub n: u32,
    /// Aerial image side in pixels.
    #[arg(long, default_value_t = 128)]
    pub sa: usize,
    /// Ground panorama height in pixels.
    #[arg(long, default_value_t = 16)]
    pub hg: usize,
    /// Ground panorama width in pixels.
    #[arg(long, default_value_t = 64)]
    pub wg: usize,
    /// Gaussian pixel noise added to ground panoramas, in gray levels.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    /// Aerial feature store.
    #[arg(long)]
    pub aerial: PathBuf,
    /// Normalized feature store to write.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MatchArgs {
    /// Aerial volume as <store>:<id>.
    #[arg(long)]
    pub aerial: String,
    /// Ground volume as <store>:<id>.
    #[arg(long)]
    pub ground: String,
    #[arg(long, value_enum, default_value_t = PathArg::Fft)]
    pub path: PathArg,
    /// Tie policy: first, or random:<seed>.
    #[arg(long, default_value = "first")]
    pub tie: String,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, value_enum, default_value_t = PathArg::Fft)]
    pub path: PathArg,
    /// CSV of query_id,rank,aerial_id,distance,shift,azimuth_deg; standard output if omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub queries: PathBuf,
    /// CSV with header query_id,aerial_id[,azimuth].
    #[arg(long)]
    pub gt: PathBuf,
    /// Query field of view in degrees.
    #[arg(long, default_value_t = 360.0)]
    pub fov: f64,
    #[arg(long, value_delimiter = ',', default_value = "1,5,10")]
    pub k: Vec<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub pct: f64,
    /// CSV with header id,lat,lon for database entries; queries sit at their true entry.
    #[arg(long)]
    pub geo: Option<PathBuf>,
    #[arg(long, default_value_t = 5.0)]
    pub radius: f64,
    #[arg(long, value_enum, default_value_t = PathArg::Fft)]
    pub path: PathArg,
    /// JSON report path; standard output if omitted.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Index store to benchmark.
    #[arg(
        long,
        conflicts_with = "synthetic",
        required_unless_present = "synthetic"
    )]
    pub index: Option<PathBuf>,
    /// Benchmark a random 4x64x16 index with this many entries instead.
    #[arg(long)]
    pub synthetic: Option<u32>,
    /// Queries timed on the spectral path.
    #[arg(long, default_value_t = 10)]
    pub queries: usize,
    /// Queries timed on the spatial path.
    #[arg(long, default_value_t = 3)]
    pub spatial_queries: usize,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainToyArgs {
    /// Store whose records alternate ground, aerial for each pair.
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.5)]
    pub step: f64,
    /// Output channels of the embedder.
    #[arg(long, default_value_t = 4)]
    pub d_out: usize,
    #[arg(long, default_value_t = 10.0)]
    pub alpha: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
}
