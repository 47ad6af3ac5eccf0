//! Command-line front end.
//!
//! Every flag can also come from a TOML config file passed with `--config`,
//! one table per subcommand (`[encode]`, `[partition]`, ...). Paths in the
//! file are relative to the file; flags on the command line win. Each command
//! writes its fully resolved configuration next to its outputs.

mod commands;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "slag", version, about = "Embed language features into Gaussian splat scenes and query them")]
pub struct Cli {
    /// TOML config file; command-line flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute the per-Gaussian embedding table.
    Encode(EncodeArgs),
    /// Split the embedded scene into spatial snapshot files.
    Partition(PartitionArgs),
    /// Retrieve Gaussians matching a text query.
    Query(QueryArgs),
    /// Score retrieval or classification against ground truth.
    Eval(EvalArgs),
    /// Measure encode throughput and query latency on synthetic data.
    Bench(BenchArgs),
    /// Write a synthetic dataset with exact masks and ground truth.
    GenFixture(FixtureArgs),
}

impl Command {
    fn section(&self) -> &'static str {
        match self {
            Command::Encode(_) => "encode",
            Command::Partition(_) => "partition",
            Command::Query(_) => "query",
            Command::Eval(_) => "eval",
            Command::Bench(_) => "bench",
            Command::GenFixture(_) => "gen-fixture",
        }
    }
}

/// Merging and path handling shared by all argument structs.
trait Section: Serialize + DeserializeOwned + Sized {
    /// Fills every unset field from `file`.
    fn or(self, file: Self) -> Self;
    fn paths(&mut self) -> Vec<&mut Option<PathBuf>>;

    fn rebase(&mut self, base: &Path) {
        for path in self.paths().into_iter().flatten() {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
    }

    fn absolutize(&mut self) -> Result<()> {
        let cwd = std::env::current_dir().map_err(|e| Error::io(".", e))?;
        self.rebase(&cwd);
        Ok(())
    }
}

macro_rules! section {
    ($t:ty; paths: $($p:ident),*; values: $($v:ident),*) => {
        impl Section for $t {
            fn or(self, file: Self) -> Self {
                Self {
                    $($p: self.$p.or(file.$p),)*
                    $($v: self.$v.or(file.$v),)*
                }
            }

            fn paths(&mut self) -> Vec<&mut Option<PathBuf>> {
                vec![$(&mut self.$p),*]
            }
        }
    };
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncodeArgs {
    /// Scene PLY.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Dataset manifest (TOML).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Output embedding table.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for rasterization and aggregation [default: 1].
    #[arg(long)]
    pub workers: Option<usize>,
    /// Gaussian rows aggregated per chunk [default: all].
    #[arg(long)]
    pub chunk_rows: Option<usize>,
    /// Give each worker a contiguous block of images instead of dealing round-robin.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub contiguous: Option<bool>,
    /// Use the bare Gaussian falloff as weight, ignoring opacity and occlusion.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub literal_weights: Option<bool>,
    /// Spill masked weights to this directory instead of keeping them in memory.
    #[arg(long)]
    pub spill_dir: Option<PathBuf>,
    /// Entries a worker keeps in memory before spilling [default: 0].
    #[arg(long)]
    pub spill_threshold: Option<usize>,
}
section!(EncodeArgs; paths: scene, manifest, out, spill_dir; values: workers, chunk_rows, contiguous, literal_weights, spill_threshold);

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionArgs {
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Embedding table from `encode`.
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Directory for the snapshots and `partitions.toml`.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Edge length of the partition grid cells, in scene units.
    #[arg(long)]
    pub cell_size: Option<f64>,
}
section!(PartitionArgs; paths: scene, table, out_dir; values: cell_size);

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryArgs {
    /// Query text.
    #[arg(long)]
    pub text: Option<String>,
    /// `partitions.toml` written by `partition`.
    #[arg(long)]
    pub partitions: Option<PathBuf>,
    /// Scene PLY, used with `--table` when no partitions are given.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Return the k best matches.
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Return every match with cosine similarity at least this [default: 0.28].
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Only search partitions intersecting the ball around this point (`x,y,z`).
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub center: Option<Vec<f64>>,
    #[arg(long)]
    pub radius: Option<f64>,
    /// Label-to-vector table (`label<TAB>v1 ... vD`).
    #[arg(long)]
    pub lookup: Option<PathBuf>,
    /// Fail on labels missing from the lookup table instead of synthesising them.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub strict: Option<bool>,
    /// Write matches as tab-separated text.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write matched Gaussians as PLY.
    #[arg(long)]
    pub ply: Option<PathBuf>,
}
section!(QueryArgs; paths: partitions, scene, table, lookup, out, ply; values: text, top_k, threshold, center, radius, strict);

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    /// Per-label retrieval projected to 2D and compared with masks.
    Binary,
    /// Per-point class assignment compared with labeled points.
    Multiclass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AccuracyKind {
    /// Fraction of query views with IoU above 0.5.
    Localization,
    /// Fraction of correctly classified pixels.
    Pixel,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalArgs {
    #[arg(long, value_enum)]
    pub protocol: Option<Protocol>,
    #[arg(long)]
    pub scene: Option<PathBuf>,
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Class list, one label per line; line order gives class ids.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Label-to-vector table; labels missing from it are synthesised unless `--strict`.
    #[arg(long)]
    pub lookup: Option<PathBuf>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub strict: Option<bool>,
    /// Dataset manifest supplying the evaluation cameras (binary).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Directory of ground-truth mask files `NNNN.rle`, mask id = class id (binary).
    #[arg(long)]
    pub gt_dir: Option<PathBuf>,
    /// Retrieval cosine threshold (binary) [default: 0.28].
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Accumulated alpha above which a projected pixel is foreground (binary) [default: 0.5].
    #[arg(long)]
    pub alpha_threshold: Option<f64>,
    /// Accuracy reported as mAcc (binary) [default: localization].
    #[arg(long, value_enum)]
    pub accuracy: Option<AccuracyKind>,
    /// Labeled point cloud `x y z class` (multiclass).
    #[arg(long)]
    pub points: Option<PathBuf>,
    /// Point classes to score directly instead of assigning them from the table (multiclass).
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Segment id per point; enables majority filtering (multiclass).
    #[arg(long)]
    pub segments: Option<PathBuf>,
    /// Class ids to score [default: all].
    #[arg(long, value_delimiter = ',')]
    pub subset: Option<Vec<u32>>,
    /// Write the key = value report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
section!(EvalArgs; paths: scene, table, labels, lookup, manifest, gt_dir, points, predictions, segments, out;
    values: protocol, strict, threshold, alpha_threshold, accuracy, subset);

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchArgs {
    /// Gaussians in the encode workload [default: 100000].
    #[arg(long)]
    pub gaussians: Option<usize>,
    /// Images in the encode workload [default: 200].
    #[arg(long)]
    pub images: Option<usize>,
    #[arg(long)]
    pub width: Option<u32>,
    #[arg(long)]
    pub height: Option<u32>,
    #[arg(long)]
    pub dim: Option<usize>,
    /// Worker counts to time [default: 1,2,4,8].
    #[arg(long, value_delimiter = ',')]
    pub workers: Option<Vec<usize>>,
    /// Store sizes for query latency [default: 10000,100000,1000000].
    #[arg(long, value_delimiter = ',')]
    pub store_sizes: Option<Vec<usize>>,
    /// Matches requested per top-k query [default: 10000].
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Queries timed per store size [default: 5].
    #[arg(long)]
    pub queries: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write the key = value report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
section!(BenchArgs; paths: out; values: gaussians, images, width, height, dim, workers, store_sizes, top_k, queries, seed);

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureArgs {
    /// Output directory.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub objects: Option<usize>,
    #[arg(long)]
    pub gaussians_per_object: Option<usize>,
    #[arg(long)]
    pub views: Option<usize>,
    #[arg(long)]
    pub width: Option<u32>,
    #[arg(long)]
    pub height: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub dim: Option<usize>,
    /// Store masks at this multiple of the raster resolution.
    #[arg(long)]
    pub mask_scale: Option<u32>,
    #[arg(long)]
    pub points_per_object: Option<usize>,
    #[arg(long)]
    pub segments_per_object: Option<usize>,
}
section!(FixtureArgs; paths: out_dir; values: objects, gaussians_per_object, views, width, height, seed, dim,
    mask_scale, points_per_object, segments_per_object);

fn load_section<T: Section + Default>(config: Option<&Path>, name: &str) -> Result<T> {
    let Some(path) = config else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut table: toml::Table =
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let Some(value) = table.remove(name) else {
        return Ok(T::default());
    };
    let mut section: T = value
        .try_into()
        .map_err(|e| Error::Config(format!("{}: [{name}]: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let base = if base.is_absolute() {
        base.to_path_buf()
    } else {
        std::env::current_dir().map_err(|e| Error::io(".", e))?.join(base)
    };
    section.rebase(&base);
    Ok(section)
}

fn merged<T: Section + Default>(cli: T, config: Option<&Path>, name: &str) -> Result<T> {
    let mut cli = cli;
    cli.absolutize()?;
    Ok(cli.or(load_section(config, name)?))
}

/// Writes `[name]` with the resolved arguments to `path`.
fn save_config<T: Serialize>(args: &T, name: &str, path: &Path) -> Result<()> {
    let value = toml::Value::try_from(args).map_err(|e| Error::Invariant(e.to_string()))?;
    let mut table = toml::Table::new();
    table.insert(name.to_string(), value);
    let text = toml::to_string(&table).map_err(|e| Error::Invariant(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// `<path>.config.toml`.
fn config_path_for(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".config.toml");
    PathBuf::from(s)
}

fn required<T: Clone>(v: &Option<T>, flag: &str) -> Result<T> {
    v.clone().ok_or_else(|| Error::Config(format!("--{flag} is required")))
}

/// Runs a parsed command line and returns the process exit code.
pub fn execute(cli: Cli) -> i32 {
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).format_timestamp(None).try_init();
    let name = cli.command.section();
    let config = cli.config.as_deref();
    let result = match cli.command {
        Command::Encode(a) => merged(a, config, name).and_then(|a| commands::encode(a, name)),
        Command::Partition(a) => merged(a, config, name).and_then(|a| commands::partition(a, name)),
        Command::Query(a) => merged(a, config, name).and_then(|a| commands::query(a, name)),
        Command::Eval(a) => merged(a, config, name).and_then(|a| commands::eval(a, name)),
        Command::Bench(a) => merged(a, config, name).and_then(|a| commands::bench(a, name)),
        Command::GenFixture(a) => merged(a, config, name).and_then(|a| commands::gen_fixture(a, name)),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::Pipeline { worker_status, .. } = &e {
                for s in worker_status {
                    eprintln!("  {s}");
                }
            }
            e.exit_code()
        }
    }
}

/// Parses `std::env::args` and runs; clap usage errors exit with 2.
pub fn run() -> i32 {
    execute(Cli::parse())
}
