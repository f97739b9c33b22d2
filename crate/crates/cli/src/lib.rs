//! The `shellforge` command line.
//!
//! File-only subcommands (`validate`, `classify`, `assess`, `recommend`,
//! `convert`, `invoke` without `--server`) never open a socket. Exit codes:
//! 0 success, 1 domain error, 2 usage error.

pub mod bench;
mod commands;
mod config;
pub mod demo;
mod runtime;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;

pub use config::FileConfig;

#[derive(Debug, Parser)]
#[command(name = "shellforge", version, about = "Runtime framework for software-heavy asset administration shells")]
pub struct Cli {
    /// Machine-readable output.
    #[arg(long, global = true)]
    pub json: bool,
    /// Flat JSON configuration file (default: ./shellforge.json when present).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a package against every model rule.
    Validate { file: PathBuf },
    /// Print the heaviness level of a package.
    Classify { file: PathBuf },
    /// Quality ratings per level.
    Assess {
        #[arg(long, value_parser = clap::value_parser!(u8).range(0..=5))]
        level: Option<u8>,
    },
    /// Rank levels for a use case.
    Recommend(RecommendArgs),
    /// Host packages over HTTP.
    Serve(ServeArgs),
    /// Convert a package between runtime strategies.
    Convert(ConvertArgs),
    /// Invoke an operation, on a file or on a running server.
    Invoke(InvokeArgs),
    /// Run the simulated machine.
    Sim(SimArgs),
    /// Scripted end-to-end run over the level fixtures.
    Demo(DemoArgs),
    /// Measure request latency per level.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TargetArg {
    CustomerSide,
    ProviderInternal,
    Research,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum VisibilityArg {
    WhiteBox,
    BlackBox,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ComplexityArg {
    Simple,
    Complex,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FleetArg {
    Single,
    Many,
}

#[derive(Debug, Args)]
pub struct RecommendArgs {
    #[arg(long, value_enum)]
    pub target: TargetArg,
    #[arg(long, value_enum)]
    pub visibility: VisibilityArg,
    #[arg(long, value_enum)]
    pub complexity: ComplexityArg,
    #[arg(long, value_enum)]
    pub fleet: FleetArg,
    /// Data from several sources must be consolidated.
    #[arg(long)]
    pub consolidation: bool,
    /// The provider needs the raw data.
    #[arg(long)]
    pub raw_data: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Directory of `.aaspkg` files to host.
    #[arg(long)]
    pub dir: Option<PathBuf>,
    /// Overrides SHELLFORGE_PORT and the config file.
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long)]
    pub host: Option<String>,
    /// Serve a standalone bundle directory instead.
    #[arg(long, conflicts_with = "dir")]
    pub bundle: Option<PathBuf>,
    /// Require this bearer token on mutating routes.
    #[arg(long)]
    pub token: Option<String>,
    /// Do not start sync loops.
    #[arg(long)]
    pub no_sync: bool,
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    pub file: PathBuf,
    /// passive, server-hosted or standalone.
    #[arg(long)]
    pub to: String,
    /// Strategy the package currently runs under.
    #[arg(long, default_value = "server-hosted")]
    pub from: String,
    /// Output file (passive) or bundle directory (standalone).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated runtime features for a standalone bundle.
    #[arg(long, value_delimiter = ',')]
    pub features: Vec<String>,
    #[arg(long)]
    pub include_build_cache: bool,
    /// Report only; write nothing.
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Debug, Args)]
pub struct InvokeArgs {
    pub file: PathBuf,
    /// `Submodel.Operation`, or a bare operation name.
    pub operation: String,
    /// Arguments as a JSON object.
    #[arg(long, default_value = "{}")]
    pub args: String,
    /// Shell id; defaults to the package's first shell.
    #[arg(long)]
    pub shell: Option<String>,
    /// Invoke on this running server instead of the file.
    #[arg(long)]
    pub server: Option<String>,
    #[arg(long)]
    pub token: Option<String>,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 1.0)]
    pub time_scale: f64,
    /// Stop the clock at this simulated time.
    #[arg(long)]
    pub freeze: Option<f64>,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    /// Run without the simulator; sync failures are reported, not fatal.
    #[arg(long)]
    pub no_sim: bool,
    /// Directory holding lvl0..lvl5 fixtures.
    #[arg(long)]
    pub fixtures: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Benchmark a running server instead of an in-process one.
    #[arg(long)]
    pub server: Option<String>,
    #[arg(long)]
    pub fixtures: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub requests: usize,
    /// Run fault injection against `--server` as well.
    #[arg(long)]
    pub faults: bool,
    #[arg(long)]
    pub token: Option<String>,
}

/// A failure that maps to an exit code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CliError {
    Usage(String),
    Domain(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Domain(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Domain(m) => f.write_str(m),
        }
    }
}

pub fn domain(e: impl fmt::Display) -> CliError {
    CliError::Domain(e.to_string())
}

/// What a subcommand produced: text for people, JSON for programs.
pub struct Report {
    pub text: String,
    pub json: Value,
}

impl Report {
    pub fn new(text: impl Into<String>, json: Value) -> Self {
        Self { text: text.into(), json }
    }
}

/// Default fixture directory: `./fixtures/levels`, else the one in the source tree.
pub fn default_fixtures() -> PathBuf {
    let local = PathBuf::from("fixtures/levels");
    if local.is_dir() {
        local
    } else {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/levels")
    }
}

fn runtime() -> tokio::runtime::Runtime {
    tokio::runtime::Builder::new_multi_thread().enable_all().build().expect("tokio runtime")
}

fn dispatch(cli: Cli) -> Result<Report, CliError> {
    let json = cli.json;
    let cfg = FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Validate { file } => commands::validate(&file),
        Command::Classify { file } => commands::classify(&file),
        Command::Assess { level } => commands::assess(level),
        Command::Recommend(args) => commands::recommend(&args),
        Command::Convert(args) => commands::convert(&args),
        Command::Invoke(args) => match args.server.clone() {
            None => commands::invoke_passive(&args),
            Some(server) => runtime().block_on(commands::invoke_remote(&args, &server)),
        },
        Command::Serve(args) => runtime().block_on(runtime::serve(&args, &cfg, json)),
        Command::Sim(args) => runtime().block_on(runtime::sim(&args, json)),
        Command::Demo(args) => runtime().block_on(demo::run(&args)),
        Command::Bench(args) => runtime().block_on(bench::run(&args)),
    }
}

/// Run the command line and return the process exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let json = cli.json;
    match dispatch(cli) {
        Ok(report) => {
            if json {
                println!("{}", serde_json::to_string_pretty(&report.json).expect("json output"));
            } else {
                print!("{}", report.text);
                if !report.text.ends_with('\n') {
                    println!();
                }
            }
            0
        }
        Err(e) => {
            if json {
                let kind = if e.exit_code() == 2 { "usage" } else { "error" };
                println!("{}", serde_json::json!({ kind: e.to_string() }));
            }
            match &e {
                CliError::Usage(m) => eprintln!("error: {m}\nusage: shellforge <validate|classify|assess|recommend|serve|convert|invoke|sim|demo|bench> [flags]"),
                CliError::Domain(m) => eprintln!("error: {m}"),
            }
            e.exit_code()
        }
    }
}
