//! `adlab` command-line driver.
//!
//! Exit codes: 0 on success, 1 for usage or config errors, 2 for data errors.

use std::path::PathBuf;
use std::process::ExitCode;

use adlab::optim::WeightMode;
use adlab::pipeline::{RunConfig, Run};
use adlab::Error;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "adlab", version, about = "CTR-driven ad text generation pipeline")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML run config; defaults apply when absent.
    #[arg(long, global = true, env = "ADLAB_CONFIG")]
    config: Option<PathBuf>,
    /// Overrides the global seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Accept inputs produced under a different config hash.
    #[arg(long, global = true)]
    force: bool,
    /// Weight mode to train or evaluate, or `all` for every mode.
    #[arg(long, global = true)]
    weight_mode: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic items, held-out items and exemplars.
    GenData,
    /// Generate candidates for every item.
    Sample,
    /// Run the simulated A/B/n test with its AA mirror.
    Simulate,
    /// Turn arm statistics into weighted preference pairs.
    BuildPrefs,
    /// Fit the reference and train one policy per weight mode.
    Train,
    /// Evaluate trained policies on held-out items.
    Eval,
    /// Run every stage, generating data first if it is missing.
    RunAll,
}

fn modes(arg: Option<&str>, config: &RunConfig) -> Result<Vec<WeightMode>, Error> {
    match arg {
        None => Ok(vec![config.train.weight_mode]),
        Some("all") => Ok(WeightMode::ALL.to_vec()),
        Some(s) => Ok(vec![s.parse()?]),
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let g = cli.global;
    let mut config = match &g.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = g.seed {
        config.seed = seed;
    }
    if let Some(dir) = g.out_dir {
        config.out_dir = dir;
    }
    let modes = modes(g.weight_mode.as_deref(), &config)?;
    if let Some(mode) = g.weight_mode.as_deref().filter(|m| *m != "all") {
        config.train.weight_mode = mode.parse()?;
    }
    let run = Run::new(config, g.force)?;
    log::debug!("stage hashes: {:?}", run.hashes);
    match cli.command {
        Command::GenData => run.gen_data(),
        Command::Sample => run.sample().map(drop),
        Command::Simulate => run.simulate().map(drop),
        Command::BuildPrefs => run.build_prefs().map(drop),
        Command::Train => run.train(&modes),
        Command::Eval => run.eval(&modes).map(drop),
        Command::RunAll => run.run_all(&modes).map(drop),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
