mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use emgtype_core::Error;

#[derive(Debug, Parser)]
#[command(name = "emgtype", version, about = "Keystroke decoding from wrist sEMG recordings")]
pub struct Cli {
    /// TOML settings file; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random draw.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for multi-session commands.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Log more (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct DecodeArgs {
    /// Session files.
    #[arg(required = true)]
    pub sessions: Vec<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// ARPA character LM; beam search when given, greedy otherwise.
    #[arg(long)]
    pub lm: Option<PathBuf>,
    #[arg(long)]
    pub beam_size: Option<usize>,
    #[arg(long)]
    pub lm_weight: Option<f64>,
    #[arg(long)]
    pub insertion_bonus: Option<f64>,
    /// Rolling normalization window in seconds (cumulative when absent).
    #[arg(long)]
    pub rtn_window: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decode whole sessions in one pass.
    Decode(DecodeArgs),
    /// Decode sessions frame by frame, feeding fixed-size chunks.
    Stream {
        #[command(flatten)]
        decode: DecodeArgs,
        /// Samples per chunk.
        #[arg(long)]
        chunk: Option<usize>,
    },
    /// Decode sessions and report per-session and pooled CER.
    EvalCer {
        #[command(flatten)]
        decode: DecodeArgs,
        /// Use the frame-by-frame path.
        #[arg(long)]
        streaming: bool,
    },
    /// Encoder FLOPs for an input duration.
    Flops {
        /// Preset names; all presets when neither this nor a checkpoint is given.
        #[arg(long)]
        preset: Vec<String>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        seconds: Option<f64>,
    },
    /// Encoder parameter counts.
    Params {
        #[arg(long)]
        preset: Vec<String>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Monte-Carlo statistics of channel masking.
    AugmentStats {
        #[arg(long)]
        draws: Option<usize>,
        #[arg(long)]
        f_max: Option<usize>,
        #[arg(long)]
        apply_probability: Option<f64>,
    },
    /// Write synthetic sessions.
    Simulate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long)]
        duration: Option<f64>,
        /// Keys to type, cycled; random keys when absent.
        #[arg(long)]
        text: Option<String>,
    },
    /// Parse an ARPA LM and report its shape and normalization.
    LmCheck {
        lm: PathBuf,
        /// Fail when some context's mass exceeds one.
        #[arg(long)]
        strict: bool,
    },
    /// Write a randomly initialized or hand-rigged checkpoint.
    InitCheckpoint {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, conflicts_with = "rigged")]
        preset: Option<String>,
        /// Hand-set model that types keys from the synthetic generator.
        #[arg(long)]
        rigged: bool,
    },
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    /// Same exit status, different text.
    fn with_message(self, message: String) -> Self {
        match self {
            CliError::Usage(_) => CliError::Usage(message),
            CliError::Data(_) => CliError::Data(message),
            CliError::Numeric(_) => CliError::Numeric(message),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numeric(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            e if e.is_numeric() => CliError::Numeric(e.to_string()),
            Error::InvalidConfig(m) => CliError::Usage(format!("invalid config: {m}")),
            e => CliError::Data(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();

    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
