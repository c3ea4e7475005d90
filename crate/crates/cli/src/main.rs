//! `tbsm` command-line front end.
//!
//! Every command writes into an output directory (`--out`, defaulting to
//! `$TBSM_OUT` or `out`) and exits non-zero with a single
//! `error[E_CODE]: message` line on failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "tbsm",
    version,
    about = "Time-based sequence model for click-through prediction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug)]
pub struct ConfigArgs {
    /// Experiment config (TOML, top-level keys only).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a config key, e.g. `--set variant=8-inner`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Args, Clone, Debug)]
pub struct OutArgs {
    /// Output directory.
    #[arg(long, env = "TBSM_OUT", default_value = "out")]
    pub out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic train/test pair.
    SynthGen(commands::SynthGenArgs),
    /// Generate a raw `user,item,category,timestamp` corpus.
    SynthRaw(commands::SynthRawArgs),
    /// Turn a raw or processed corpus into sampled train/test sets.
    Prep(commands::PrepArgs),
    /// Train every configured seed and summarize test AUCs.
    Train(commands::TrainArgs),
    /// Score a checkpoint, or a freshly initialized model, on a dataset.
    Eval(commands::EvalArgs),
    /// Full-model finite-difference check on the toy configuration.
    Gradcheck(commands::GradcheckArgs),
    /// Assemble the result table across head variants.
    Report(commands::ReportArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::SynthGen(a) => commands::synth_gen(a),
        Command::SynthRaw(a) => commands::synth_raw(a),
        Command::Prep(a) => commands::prep(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
        Command::Report(a) => commands::report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg: Vec<String> = e
                .to_string()
                .lines()
                .map(|l| l.trim().to_string())
                .filter(|l| !l.is_empty())
                .collect();
            eprintln!("error[{}]: {}", e.code(), msg.join(" "));
            ExitCode::FAILURE
        }
    }
}
