//! `mstates`: market-state detection pipeline over sector correlation
//! features, with per-day relevance explanations and a surrogate-network
//! comparison of feature selections.

mod config;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use config::PipelineConfig;

#[derive(Parser)]
#[command(
    name = "mstates",
    version,
    about = "Detect market states from rolling sector correlations and explain them"
)]
struct Cli {
    /// JSON config file; command-line flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Global seed; every stage derives its own stream from it.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory for all artifacts.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load prices, filter and interpolate, build sector returns.
    Ingest,
    /// Normalize returns and build rolling correlation features.
    Preprocess,
    /// Fit the k-means market states.
    Cluster,
    /// Score every day's features against its assigned state.
    Explain,
    /// Aggregate per-day relevance into per-state profiles.
    Aggregate,
    /// Find the relevance cutoff on each sorted profile.
    Changepoint {
        /// Scan a standalone one-column curve file instead of the
        /// aggregates from this output directory.
        #[arg(long, value_name = "CSV")]
        curve: Option<PathBuf>,
    },
    /// Train surrogate networks and compare feature selections.
    Surrogate,
    /// Generate synthetic inputs.
    Synth {
        #[arg(long, value_enum, default_value_t = SynthKind::Prices)]
        kind: SynthKind,
    },
    /// Run every stage in order, generating prices if none are configured.
    Pipeline,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SynthKind {
    /// Sector-correlated price table plus matching sector map.
    Prices,
    /// Feature vectors with planted cluster structure.
    Planted,
}

fn run(command: &Command, config: &PipelineConfig) -> anyhow::Result<()> {
    config.write_effective()?;
    match command {
        Command::Ingest => stages::ingest(config),
        Command::Preprocess => stages::preprocess(config),
        Command::Cluster => stages::cluster(config),
        Command::Explain => stages::explain(config),
        Command::Aggregate => stages::aggregate(config),
        Command::Changepoint { curve: Some(path) } => stages::changepoint_curve(config, path),
        Command::Changepoint { curve: None } => stages::changepoint(config),
        Command::Surrogate => stages::surrogate(config),
        Command::Synth { kind: SynthKind::Prices } => stages::synth_prices(config),
        Command::Synth { kind: SynthKind::Planted } => stages::synth_planted(config),
        Command::Pipeline => stages::pipeline(config),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let config =
        match PipelineConfig::resolve(cli.config.as_deref(), cli.seed, cli.out.as_deref()) {
            Ok(config) => config,
            Err(e) => {
                eprintln!("mstates: {e:#}");
                return ExitCode::from(1);
            }
        };
    match run(&cli.command, &config) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mstates: {e:#}");
            ExitCode::from(2)
        }
    }
}
