//! The `daal` command line: generate, train, eval, gradcheck, compare, plot.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 numeric
//! failure. With `--json` the command's JSON document goes to stdout
//! instead of the text summary.

mod commands;
pub mod config;
pub mod plot;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
pub use commands::Output;
pub use config::ExperimentConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "daal", version, about = "Density-aware adaptive line metric learning workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment config (JSON). Missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Print the JSON document instead of a text summary.
    #[arg(long)]
    json: bool,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the synthetic dataset as CSV.
    Generate(Common),
    /// Train a network and write checkpoint, segments and history.
    Train {
        #[command(flatten)]
        common: Common,
        /// Override the training loss (e.g. softmax, softmax+daal, arcface).
        #[arg(long)]
        loss: Option<String>,
    },
    /// Score a checkpoint: NMI, Recall@K and R@Average.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Directory holding network.json (defaults to the output directory).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Feature CSV (defaults to test.csv in the checkpoint directory).
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Finite-difference checks of the loss gradients.
    Gradcheck {
        /// Loss name, or "all".
        #[arg(long, default_value = "all")]
        loss: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Random points per loss.
        #[arg(long, default_value_t = crate::gradcheck::DEFAULT_POINTS)]
        points: usize,
        #[arg(long)]
        json: bool,
    },
    /// Train and evaluate every comparison arm over the seed list.
    Compare(Common),
    /// Scatter a 2-D checkpoint's embeddings with its segments as SVG.
    Plot {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
    },
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NonFinite { .. } | Error::Domain(_) | Error::DegenerateVector => EXIT_NUMERIC,
        _ => EXIT_CONFIG,
    }
}

fn resolve(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    cfg.resolve()
}

fn dispatch(command: Command) -> (bool, Result<Output>) {
    match command {
        Command::Generate(c) => (c.json, resolve(&c).and_then(|cfg| commands::generate(&cfg))),
        Command::Train { common, loss } => {
            let result = resolve(&common).and_then(|mut cfg| {
                if let Some(name) = &loss {
                    cfg.train.loss = crate::model::LossKind::from_name(name)?;
                }
                commands::train(&cfg)
            });
            (common.json, result)
        }
        Command::Eval { common, checkpoint, data } => {
            let result = resolve(&common).and_then(|cfg| commands::eval(&cfg, checkpoint.as_deref(), data.as_deref()));
            (common.json, result)
        }
        Command::Gradcheck { loss, seed, points, json } => (json, commands::gradcheck(&loss, seed, points)),
        Command::Compare(c) => (c.json, resolve(&c).and_then(|cfg| commands::compare(&cfg))),
        Command::Plot { common, checkpoint, data } => {
            let result = resolve(&common).and_then(|cfg| commands::plot(&cfg, checkpoint.as_deref(), data.as_deref()));
            (common.json, result)
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let (json, result) = dispatch(cli.command);
    match result {
        Ok(out) => {
            if json {
                println!("{}", serde_json::to_string_pretty(&out.json).expect("json value"));
            } else {
                print!("{}", out.text);
            }
            out.code
        }
        Err(err) => {
            let code = exit_code(&err);
            if json {
                let doc = serde_json::json!({ "error": err.to_string(), "exit_code": code });
                println!("{}", serde_json::to_string_pretty(&doc).expect("json value"));
            }
            eprintln!("error: {err}");
            code
        }
    }
}
