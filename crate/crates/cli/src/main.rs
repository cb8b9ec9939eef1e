//! `sepsis` command-line front end.
//!
//! Every command that writes artifacts creates one run directory under the
//! output root (`--out`, `SEPSIS_OUT`, the configured `paths.output`, or
//! `runs`). An existing run directory is never overwritten unless `--force`
//! is given. Failures print a single line `error: <kind>: <message>` to
//! stderr and exit with status 1; usage errors exit with status 2.

mod commands;
mod run;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sepsis_core::features::Task;
use sepsis_core::gold::{Category, DEFAULT_BANDS_TOML};
use sepsis_core::models::ModelKind;
use sepsis_core::Error;

#[derive(Debug, Parser)]
#[command(name = "sepsis", version, about = "Sepsis detection and prediction from ICU vital signs")]
pub struct Cli {
    /// Run configuration file (TOML).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Output root; each run writes one directory below it (default:
    /// `paths.output` of the configuration, else `runs`).
    #[arg(long, global = true, env = "SEPSIS_OUT", value_name = "DIR")]
    out: Option<PathBuf>,

    /// Run directory name (default: `<command>-<id>` derived from the
    /// configuration and arguments).
    #[arg(long, global = true, value_name = "NAME")]
    run: Option<String>,

    /// Replace an existing run directory.
    #[arg(long, global = true)]
    force: bool,

    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,

    /// Override the master seed of the configuration.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    /// Print the embedded default band tables and exit.
    #[arg(long)]
    print_bands: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Clone, Args)]
pub struct Inputs {
    /// Vitals CSV (`episode_id,age,unit,channel,minute,value`).
    #[arg(long, value_name = "FILE")]
    vitals: Option<PathBuf>,

    /// Annotations CSV (`episode_id,annotation,hour`).
    #[arg(long, value_name = "FILE")]
    annotations: Option<PathBuf>,

    /// Band tables (TOML); the embedded defaults when omitted.
    #[arg(long, value_name = "FILE")]
    bands: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct CellArgs {
    /// detection or prediction.
    #[arg(long, value_parser = parse_task)]
    task: Option<Task>,

    /// sepsis, severe_sepsis or septic_shock.
    #[arg(long, value_parser = parse_category)]
    category: Option<Category>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Parse, bin and impute; report inclusion per episode.
    Ingest(Inputs),
    /// Positive hours per category and rule scores per hour.
    Label(Inputs),
    /// Export split feature datasets.
    Featurize {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        cell: CellArgs,
    },
    /// Train one model (or the stacked ensemble) for one cell.
    Train {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        cell: CellArgs,
        /// logistic, forest, boosted, mlp or stacked.
        #[arg(long, default_value = "stacked", value_parser = parse_trainable)]
        model: Trainable,
    },
    /// Benchmark every configured cell and write the experiment report.
    Evaluate(Inputs),
    /// Single-vital feature ranking.
    Rank(Inputs),
    /// Prefix ablation over the six vitals.
    Ablate {
        #[command(flatten)]
        inputs: Inputs,
        /// Comma-separated vital order, e.g. `temp,hr,rr,sbp,dbp,spo2`.
        #[arg(long, value_delimiter = ',')]
        order: Option<Vec<String>>,
    },
    /// SOFA, qSOFA and MEWS per episode hour.
    Score(Inputs),
    /// Generate a synthetic cohort.
    Synth {
        /// Generator configuration (TOML).
        #[arg(long, value_name = "FILE")]
        synth_config: Option<PathBuf>,
        /// Episodes per septic category.
        #[arg(long, value_name = "N")]
        septic: Option<usize>,
        /// Negative episodes.
        #[arg(long, value_name = "N")]
        negatives: Option<usize>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::Label(_) => "label",
            Command::Featurize { .. } => "featurize",
            Command::Train { .. } => "train",
            Command::Evaluate(_) => "evaluate",
            Command::Rank(_) => "rank",
            Command::Ablate { .. } => "ablate",
            Command::Score(_) => "score",
            Command::Synth { .. } => "synth",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trainable {
    Single(ModelKind),
    Stacked,
}

impl Trainable {
    fn name(self) -> &'static str {
        match self {
            Trainable::Single(k) => k.name(),
            Trainable::Stacked => "stacked",
        }
    }
}

fn parse_task(s: &str) -> Result<Task, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_category(s: &str) -> Result<Category, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_trainable(s: &str) -> Result<Trainable, String> {
    if s == "stacked" {
        return Ok(Trainable::Stacked);
    }
    s.parse::<ModelKind>().map(Trainable::Single).map_err(|e| e.to_string())
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn dispatch<I, T>(argv: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    if cli.print_bands {
        print!("{DEFAULT_BANDS_TOML}");
        return ExitCode::SUCCESS;
    }
    let Some(command) = cli.command.clone() else {
        use clap::CommandFactory;
        eprintln!("{}", Cli::command().render_help());
        return ExitCode::from(2);
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    if let Some(n) = cli.jobs {
        if n == 0 {
            return fail(&Error::Config("--jobs must be positive".into()));
        }
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match commands::execute(&cli, &command) {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}

fn fail(e: &Error) -> ExitCode {
    let msg = e.to_string().replace(['\n', '\r'], " ");
    eprintln!("error: {}: {}", e.kind(), msg.trim_end());
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    dispatch(std::env::args_os())
}
