//! `lsgd`: federated local-SGD training with Hessian-spectral diagnostics.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lsgd_cli::artifacts::sha256_hex;
use lsgd_cli::commands::{dispatch, Ctx};
use lsgd_cli::config::load_config;
use lsgd_cli::CliResult;

#[derive(Parser)]
#[command(
    name = "lsgd",
    version,
    about = "Federated local-SGD training, Hessian-spectral diagnostics, and gradient-residue experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run federated training; write metrics, checkpoints, and loss curves.
    Train(CommonArgs),
    /// Eigendecompose checkpointed rounds; write CPDF curves and
    /// prediction-error reports.
    Diagnose(CommonArgs),
    /// Estimate the gradient-model residue along local trajectories from
    /// checkpointed rounds.
    Residue(CommonArgs),
    /// Check the finished run against the analysis assumptions, including
    /// the learning-rate condition.
    Audit(CommonArgs),
    /// Train, diagnose, residue, and audit in one pass.
    Report(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Path to the TOML experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the training seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the analyzed round list (comma separated).
    #[arg(long, value_delimiter = ',')]
    rounds: Option<Vec<usize>>,
    /// Override the residue trial count.
    #[arg(long)]
    trials: Option<usize>,
    /// Omit wall-clock metadata so every artifact is byte-stable.
    #[arg(long)]
    deterministic: bool,
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn run() -> CliResult<()> {
    let cli = Cli::parse();
    let (name, args) = match &cli.command {
        Command::Train(a) => ("train", a),
        Command::Diagnose(a) => ("diagnose", a),
        Command::Residue(a) => ("residue", a),
        Command::Audit(a) => ("audit", a),
        Command::Report(a) => ("report", a),
    };

    let loaded = load_config(&args.config)?;
    let mut config = loaded.config;
    if let Some(out) = &args.out {
        config.output.dir = out.clone();
    }
    if let Some(seed) = args.seed {
        config.federation.seed = seed;
    }
    if let Some(rounds) = &args.rounds {
        match name {
            "diagnose" | "audit" => config.diagnostics.rounds = rounds.clone(),
            "residue" => config.residue.rounds = rounds.clone(),
            // train and report checkpoint/analyze the same rounds everywhere
            _ => {
                config.diagnostics.rounds = rounds.clone();
                config.residue.rounds = rounds.clone();
            }
        }
    }
    if let Some(trials) = args.trials {
        config.residue.trials = trials;
    }
    config.validate()?;

    let ctx = Ctx {
        out_dir: config.output.dir.clone(),
        config,
        config_path: loaded.path,
        config_sha256: sha256_hex(&loaded.raw),
        deterministic: args.deterministic,
    };
    dispatch(name, &ctx)?;
    println!("artifacts written to {}", ctx.out_dir.display());
    Ok(())
}
