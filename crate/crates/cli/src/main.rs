//! `cstn`: taxi OD demand forecasting from the command line.

/// `println!` that ignores write errors, so a closed stdout (say, piped into
/// `head`) never aborts a command before its artifacts and manifest exist.
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

mod commands;
mod config;
mod failure;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;
use failure::Failure;
use manifest::Manifest;

#[derive(Parser, Debug)]
#[command(name = "cstn", version, about = "Citywide taxi origin-destination demand forecasting")]
struct Cli {
    /// Settings file with `key = value` lines.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,

    /// Override one setting; may be repeated. Applied after the file.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Bin trip and meteorology CSVs into a dataset cache.
    Ingest,
    /// Generate a synthetic dataset cache.
    Synth,
    /// Train a model and write a checkpoint and a loss log.
    Train,
    /// Write denormalized predictions for test windows.
    Predict,
    /// Report MAPE/RMSE of a checkpoint on the test split.
    Evaluate,
    /// Fit and report a reference predictor.
    Baseline,
    /// Print every setting with its resolved value.
    Settings,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Ingest => "ingest",
            Command::Synth => "synth",
            Command::Train => "train",
            Command::Predict => "predict",
            Command::Evaluate => "evaluate",
            Command::Baseline => "baseline",
            Command::Settings => "settings",
        }
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        cfg.load_file(path)?;
    }
    for o in &cli.overrides {
        cfg.apply_override(o)?;
    }
    Ok(cfg)
}

fn print_settings(cfg: &RunConfig) {
    for (key, _, help) in config::KEYS {
        say!("{key} = {}    # {help}", cfg.raw(key));
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match resolve(&cli) {
        Ok(c) => c,
        Err(f) => {
            eprintln!("cstn: {f}");
            return ExitCode::from(f.kind.exit_code() as u8);
        }
    };
    if let Command::Settings = cli.command {
        print_settings(&cfg);
        return ExitCode::SUCCESS;
    }
    let out_dir = PathBuf::from(cfg.raw("out_dir"));
    let mut manifest = Manifest::new(cli.command.name());
    let outcome = std::fs::create_dir_all(&out_dir)
        .map_err(Failure::from)
        .and_then(|()| {
            let mut ctx = commands::Ctx {
                cfg: &cfg,
                manifest: &mut manifest,
                out_dir: out_dir.clone(),
            };
            match cli.command {
                Command::Ingest => commands::ingest_cmd(&mut ctx),
                Command::Synth => commands::synth_cmd(&mut ctx),
                Command::Train => commands::train_cmd(&mut ctx),
                Command::Predict => commands::predict_cmd(&mut ctx),
                Command::Evaluate => commands::evaluate_cmd(&mut ctx),
                Command::Baseline => commands::baseline_cmd(&mut ctx),
                Command::Settings => unreachable!(),
            }
        });
    if let Err(e) = manifest.write(&out_dir, &cfg, &outcome) {
        eprintln!("cstn: could not write manifest: {e}");
    }
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("cstn: {f}");
            ExitCode::from(f.kind.exit_code() as u8)
        }
    }
}
