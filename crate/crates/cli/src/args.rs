use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

#[derive(Parser, Debug)]
#[command(name = "pickleguard", version, about = "Static scanner for pickle-based model files")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Scan files and directories.
    Scan(ScanArgs),
    /// Search interchange AST dumps for gadget candidates.
    Ddg(DdgArgs),
    /// Write the benign fixture corpus.
    Forge(ForgeArgs),
    /// Check or list a gadget database.
    Db {
        #[command(subcommand)]
        action: DbAction,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum, PartialEq, Eq)]
pub enum OutFormat {
    Human,
    Json,
}

#[derive(Args, Debug)]
pub struct OutputArgs {
    #[arg(long, value_enum, default_value = "human")]
    pub format: OutFormat,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ScanArgs {
    #[arg(required = true)]
    pub paths: Vec<PathBuf>,
    /// denylist-only, hybrid or strict-allowlist.
    #[arg(long, default_value = "hybrid")]
    pub policy: String,
    #[arg(long, env = "PICKLEGUARD_DB")]
    pub gadget_db: Option<PathBuf>,
    /// Extra allowlist; the only allowlist under strict-allowlist.
    #[arg(long)]
    pub allowlist: Option<PathBuf>,
    /// Extra denylist merged over the shipped one.
    #[arg(long)]
    pub denylist: Option<PathBuf>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    /// Decoded bytes per container layer.
    #[arg(long)]
    pub node_budget: Option<u64>,
    /// Decoded bytes per input file.
    #[arg(long)]
    pub scan_budget: Option<u64>,
    #[arg(long, default_value_t = 0, help = "Worker threads (0 = all cores)")]
    pub jobs: usize,
    /// Only scan the files directly inside directory arguments.
    #[arg(long)]
    pub no_recurse: bool,
    #[arg(long)]
    pub follow_symlinks: bool,
    /// Zero timing fields so reports diff cleanly.
    #[arg(long)]
    pub mask_timing: bool,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Args, Debug)]
pub struct DdgArgs {
    /// Dump files, or directories searched for `*.ast.json`.
    pub dumps: Vec<PathBuf>,
    /// Sink specs merged over the defaults.
    #[arg(long)]
    pub sinks: Option<PathBuf>,
    /// Labels to evaluate the candidates against.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Args, Debug)]
pub struct ForgeArgs {
    /// all, rows, eop, gadgets, bombs, fuzz, or one family such as row-07.
    #[arg(long, default_value = "all")]
    pub family: String,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Seed for fuzz inputs.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of fuzz inputs.
    #[arg(long, default_value_t = 10_000)]
    pub count: usize,
    /// Decompressed size of the ratio bomb.
    #[arg(long, default_value_t = 4 << 20)]
    pub bomb_size: usize,
}

#[derive(Subcommand, Debug)]
pub enum DbAction {
    /// Schema and duplicate check with a category histogram.
    Verify(DbArgs),
    /// Print every entry.
    List(DbArgs),
}

#[derive(Args, Debug)]
pub struct DbArgs {
    /// Database file; falls back to PICKLEGUARD_DB, then the seed database.
    #[arg(env = "PICKLEGUARD_DB")]
    pub path: Option<PathBuf>,
}
