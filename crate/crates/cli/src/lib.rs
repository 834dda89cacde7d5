//! The `geowalk` command line: normalize meshes, generate shards, verify
//! and summarize datasets, and build condition velocity blocks.

use std::num::NonZeroUsize;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use geowalk::walk::{FeatureKind, StickingMode, VectorConvention};
use geowalk::Category;

pub mod catalog;
mod condition;
mod generate;
mod normalize;
mod stats;
pub mod verify;

/// Process exit statuses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success = 0,
    /// Some work failed, or a validation check did not pass.
    Failure = 1,
    Usage = 2,
}

impl Status {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug, Parser)]
#[command(name = "geowalk", version, about = "Dynamics-lifted geometric supervision data from triangle meshes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate and normalize raw meshes.
    Normalize(NormalizeArgs),
    /// Generate shards and a manifest from normalized meshes.
    Generate(GenerateArgs),
    /// Check shard integrity and conservation for a dataset.
    Verify(VerifyArgs),
    /// Build a condition velocity block from a spec file and a point file.
    Condition(ConditionArgs),
    /// Summarize a dataset.
    Stats(StatsArgs),
}

#[derive(Debug, Args)]
pub struct NormalizeArgs {
    /// Directory of .obj / .stl meshes, optionally in category subdirectories.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Target length of the x extent.
    #[arg(long, default_value_t = geowalk::mesh::DEFAULT_TARGET_X_LENGTH)]
    pub x_length: f64,
    /// Category for meshes not inside a category subdirectory.
    #[arg(long, default_value = "other")]
    pub category: Category,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Clamped,
    Literal,
}

impl From<ModeArg> for StickingMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Clamped => StickingMode::RayClamped,
            ModeArg::Literal => StickingMode::Literal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FeatureArg {
    Vecdist,
    Sdf,
}

impl From<FeatureArg> for FeatureKind {
    fn from(f: FeatureArg) -> Self {
        match f {
            FeatureArg::Vecdist => FeatureKind::VectorDistance,
            FeatureArg::Sdf => FeatureKind::Sdf,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConventionArg {
    QueryToSurface,
    SurfaceToQuery,
}

impl From<ConventionArg> for VectorConvention {
    fn from(c: ConventionArg) -> Self {
        match c {
            ConventionArg::QueryToSurface => VectorConvention::QueryToSurface,
            ConventionArg::SurfaceToQuery => VectorConvention::SurfaceToQuery,
        }
    }
}

#[derive(Debug, Args)]
pub struct WorkerArgs {
    /// Worker threads; defaults to the number of logical cores.
    #[arg(long, env = "GEOWALK_WORKERS")]
    pub workers: Option<NonZeroUsize>,
}

impl WorkerArgs {
    pub fn count(&self) -> usize {
        self.workers
            .or_else(|| std::thread::available_parallelism().ok())
            .map_or(1, NonZeroUsize::get)
    }

    pub fn pool(&self) -> anyhow::Result<rayon::ThreadPool> {
        Ok(rayon::ThreadPoolBuilder::new().num_threads(self.count()).build()?)
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Directory of normalized meshes, optionally in category subdirectories.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = geowalk::sampling::DEFAULT_N_VOLUME)]
    pub n_volume: usize,
    #[arg(long, default_value_t = geowalk::sampling::DEFAULT_N_SURFACE)]
    pub n_surface: usize,
    #[arg(long, default_value_t = geowalk::sampling::DEFAULT_TAU)]
    pub tau: usize,
    #[arg(long, default_value_t = geowalk::sampling::DEFAULT_V_MAX)]
    pub v_max: f64,
    #[arg(long, default_value_t = geowalk::sampling::DEFAULT_N_DYN)]
    pub n_dyn: usize,
    /// Master seed.
    #[arg(long, env = "GEOWALK_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Seed for the category-balanced geometry order.
    #[arg(long, default_value_t = 0)]
    pub epoch_seed: u64,
    #[command(flatten)]
    pub workers: WorkerArgs,
    #[arg(long, value_enum, default_value = "clamped")]
    pub mode: ModeArg,
    #[arg(long, value_enum, default_value = "vecdist")]
    pub feature: FeatureArg,
    #[arg(long, value_enum, default_value = "query-to-surface")]
    pub convention: ConventionArg,
    /// On-surface tolerance; defaults to 1e-7 of the normalized x-length.
    #[arg(long)]
    pub surf_eps: Option<f64>,
    /// Outward offset for surface samples; 0 keeps them on the surface.
    #[arg(long, default_value_t = 0.0)]
    pub surface_offset: f64,
    /// Draw new positions for every dynamics field.
    #[arg(long)]
    pub resample_positions: bool,
    /// Only these categories (repeatable).
    #[arg(long = "category")]
    pub categories: Vec<Category>,
    /// Category for meshes not inside a category subdirectory.
    #[arg(long, default_value = "other")]
    pub default_category: Category,
    #[arg(long, default_value = "geowalk")]
    pub name: String,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[command(flatten)]
    pub workers: WorkerArgs,
    /// Also print one tab-separated line per shard: `verify<TAB>PASS|FAIL<TAB>path<TAB>reason`.
    #[arg(long)]
    pub machine: bool,
}

#[derive(Debug, Args)]
pub struct ConditionArgs {
    /// key = value spec file.
    #[arg(long)]
    pub spec: PathBuf,
    /// Points, one `x y z` per line (OBJ `v` records also accepted).
    #[arg(long)]
    pub points: PathBuf,
    /// Output velocity block.
    #[arg(long)]
    pub out: PathBuf,
    /// Rotate the built field about z by this many degrees.
    #[arg(long, default_value_t = 0.0)]
    pub shift_deg: f64,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[command(flatten)]
    pub workers: WorkerArgs,
    /// Write positions and stuck flags of one shard as OBJ point records.
    #[arg(long)]
    pub dump_obj: Option<PathBuf>,
    /// Manifest index of the shard to dump.
    #[arg(long, default_value_t = 0)]
    pub dump_shard: usize,
}

pub fn run(cli: Cli) -> Status {
    let result = match cli.command {
        Command::Normalize(a) => normalize::run(&a),
        Command::Generate(a) => generate::run(&a),
        Command::Verify(a) => verify::run(&a),
        Command::Condition(a) => condition::run(&a),
        Command::Stats(a) => stats::run(&a),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        Status::Failure
    })
}
