pub mod commands;

use std::path::PathBuf;
use std::ffi::OsString;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Hierarchical Tucker LSTM toolkit and accelerator simulator.
#[derive(Debug, Parser)]
#[command(name = "fdht", version)]
pub struct Cli {
    /// Subcommand config file (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Directory for machine-readable outputs.
    #[arg(long, global = true, default_value = "fdht-out")]
    pub out: PathBuf,
    /// Print the machine report as JSON instead of a summary.
    #[arg(long, global = true)]
    pub json: bool,
    /// Print nothing on success.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Ucf11,
    Ytc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    I,
    Ii,
    Iii,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScopeArg {
    Tensor,
    Layer,
    Lstm,
    Transform,
    Sram,
    All,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parameter count and compression ratio of an HT LSTM.
    Params(ParamsArgs),
    /// Per-format complexity curves as CSV.
    Formats(FormatsArgs),
    /// Run oracle check suites.
    Verify {
        #[arg(long, value_enum, default_value_t = ScopeArg::All)]
        scope: ScopeArg,
    },
    /// Train the synthetic sequence task.
    TrainToy {
        /// Overrides the configured epoch count.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Cycle report of one HT layer on the accelerator model.
    Simulate(SimulateArgs),
    /// Dump and check the index table of a transformation.
    Transform(TransformArgs),
}

#[derive(Debug, Args)]
pub struct ParamsArgs {
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Length of the raw input vector; defaults to 57600 for presets and to
    /// the product of the input modes otherwise.
    #[arg(long)]
    pub input_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FormatsArgs {
    #[arg(long, default_value_t = 5)]
    pub d: usize,
    #[arg(long, default_value_t = 10)]
    pub in_max: usize,
    #[arg(long, default_value_t = 4)]
    pub out_max: usize,
    #[arg(long, default_value_t = 2)]
    pub rmin: usize,
    #[arg(long, default_value_t = 30)]
    pub rmax: usize,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Hardware config file; the default is the 14-bank reference geometry.
    #[arg(long)]
    pub hw: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub batch: usize,
    /// Non-leaf ranks to sweep, as `A..B` or a comma list.
    #[arg(long)]
    pub sweep: Option<String>,
    /// Overlap each transformation's write phase with the product feeding it.
    #[arg(long)]
    pub overlap: bool,
    /// Also write the memory access trace as CSV.
    #[arg(long)]
    pub trace: bool,
}

#[derive(Debug, Args)]
pub struct TransformArgs {
    #[arg(long = "type", value_enum)]
    pub kind: Kind,
    /// Comma-separated dimensions: `A,B1,B2`, `A1,A2,A3,B1,B2` or `A1,A2,A3,B`.
    #[arg(long, value_delimiter = ',')]
    pub dims: Vec<usize>,
    /// Use the uncorrected column formula for type II.
    #[arg(long)]
    pub literal: bool,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run_from<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { commands::EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match commands::run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code()
        }
    }
}
