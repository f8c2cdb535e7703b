use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use truncated_lr::config::{parse_config_with, CommandKind, Command, Overrides};
use truncated_lr::run::run;

#[derive(Parser)]
#[command(name = "truncated-lr", version, about = "Compare and maximize marginal likelihoods of latent-variable models")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Decide which of two parameter values has the larger likelihood.
    Compare(Common),
    /// Proposal-based likelihood ascent; writes a trace CSV.
    Maximize(Common),
    /// Check the ordering identity on random table models.
    Verify(Common),
    /// EM baseline for the Gaussian mixture; writes an iteration CSV.
    Em(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output path (overrides `output` in the config).
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    #[arg(long)]
    step: Option<f64>,
    /// Replaces the command's seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, common) = match cli.command {
        Sub::Compare(c) => (CommandKind::Compare, c),
        Sub::Maximize(c) => (CommandKind::Maximize, c),
        Sub::Verify(c) => (CommandKind::Verify, c),
        Sub::Em(c) => (CommandKind::Em, c),
    };
    let text = match std::fs::read_to_string(&common.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", common.config.display());
            return ExitCode::from(2);
        }
    };
    let overrides = Overrides {
        burn_in: common.burn_in,
        thin: common.thin,
        step: common.step,
        seed: common.seed,
        output: common.output,
        expect: Some(kind),
    };
    let config = match parse_config_with(&text, &overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    // compare and verify write the report itself to the output path
    let report_path = match config.command {
        Command::Compare { .. } | Command::Verify { .. } => config.output.clone(),
        _ => None,
    };
    let report = run(config);
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    println!("{json}");
    if let Some(path) = report_path {
        if let Err(e) = std::fs::write(&path, format!("{json}\n")) {
            eprintln!("error: cannot write {}: {e}", path.display());
            return ExitCode::from(1);
        }
    }
    if let Some(err) = &report.error {
        eprintln!("error: {err}");
    }
    ExitCode::from(report.exit_code() as u8)
}
