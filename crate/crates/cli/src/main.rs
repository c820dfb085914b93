//! `ffoundry`: runs the forecasting-question pipeline one stage at a time.
//!
//! Exit codes: 0 success, 1 other error, 2 configuration error, 3 missing or
//! stale upstream stage, 4 stage finished with failed items.

use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Parser, Subcommand, ValueEnum};
use ffoundry_core::Strategy;
use ffoundry_pipeline::config::BackendMode;
use ffoundry_pipeline::{run_stage, Config, ConfigError, Gateway, Overrides, RunDir, RunError, Stage, StageOptions, StageSummary};

const EXIT_OTHER: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_UPSTREAM: u8 = 3;
const EXIT_PARTIAL: u8 = 4;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BackendArg {
    Mock,
    Live,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StrategyArg {
    Direct,
    Subq,
}

#[derive(Debug, Parser)]
#[command(name = "ffoundry", version, about = "Generate, verify, forecast and resolve forecasting questions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run directory holding all stage outputs.
    #[arg(long, global = true)]
    run_dir: Option<PathBuf>,
    /// Configuration file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Process at most this many new work items.
    #[arg(long, global = true)]
    limit: Option<usize>,
    /// Force every backend to the mock, or require live backends.
    #[arg(long, global = true, value_enum)]
    backend: Option<BackendArg>,
    /// Root seed for all sampling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Resolution date (YYYY-MM-DD).
    #[arg(long, global = true)]
    as_of: Option<NaiveDate>,
    #[arg(long, global = true, value_enum, default_value = "direct")]
    strategy: StrategyArg,
    /// Backend id used for forecasting.
    #[arg(long, global = true)]
    forecaster: Option<String>,
    /// Backend id used for research.
    #[arg(long, global = true)]
    researcher: Option<String>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Ingest seed articles.
    Seed,
    /// Generate proto-questions from seeds.
    Generate,
    /// Refine proto-questions into full questions.
    Refine,
    /// Run the verifier agents and the gate.
    Verify,
    /// Remove near-duplicate questions.
    Dedup,
    /// Cluster questions by topic and audit diversity.
    Audit,
    /// Research each final question.
    Research,
    /// Forecast each researched question.
    Forecast,
    /// Resolve questions whose window has closed.
    Resolve,
    /// Score forecasts against resolutions.
    Score,
    /// Write the markdown report.
    Report,
    /// Run every stage in order.
    All,
}

impl Command {
    fn stage(self) -> Option<Stage> {
        Some(match self {
            Command::Seed => Stage::Seed,
            Command::Generate => Stage::Generate,
            Command::Refine => Stage::Refine,
            Command::Verify => Stage::Verify,
            Command::Dedup => Stage::Dedup,
            Command::Audit => Stage::Audit,
            Command::Research => Stage::Research,
            Command::Forecast => Stage::Forecast,
            Command::Resolve => Stage::Resolve,
            Command::Score => Stage::Score,
            Command::Report => Stage::Report,
            Command::All => return None,
        })
    }
}

enum Failure {
    Config(String),
    Run(RunError),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        Failure::Run(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) | Failure::Run(RunError::Config(_)) => EXIT_CONFIG,
            Failure::Run(RunError::MissingUpstream { .. } | RunError::Incomplete(_)) => EXIT_UPSTREAM,
            Failure::Run(_) => EXIT_OTHER,
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Config(m) => format!("configuration error: {m}"),
            Failure::Run(e) => e.to_string(),
        }
    }
}

fn print_summary(name: &str, s: &StageSummary) {
    println!(
        "{name}: processed {}, skipped {}, failed {}, pending {}, rejected {}, parked {}",
        s.processed, s.skipped, s.failed, s.pending, s.rejected, s.parked
    );
}

fn run(cli: &Cli) -> Result<bool, Failure> {
    let config = cli
        .config
        .as_ref()
        .ok_or_else(|| Failure::Config("--config is required".into()))?;
    let run_dir = cli
        .run_dir
        .as_ref()
        .ok_or_else(|| Failure::Config("--run-dir is required".into()))?;
    let mut cfg = Config::load(config)?;
    cfg.apply(&Overrides {
        backend: cli.backend.map(|b| match b {
            BackendArg::Mock => BackendMode::Mock,
            BackendArg::Live => BackendMode::Live,
        }),
        seed: cli.seed,
        forecaster: cli.forecaster.clone(),
        researcher: cli.researcher.clone(),
    })?;
    let run = RunDir::open(run_dir)?;
    let gw = Gateway::from_config(&cfg, &run.transcripts())?;
    let strategy = match cli.strategy {
        StrategyArg::Direct => Strategy::Direct,
        StrategyArg::Subq => Strategy::Subquestions,
    };
    let opts = StageOptions {
        limit: cli.limit,
        as_of: cli.as_of,
        strategy,
    };

    let plan: Vec<(Stage, Strategy)> = match cli.command.stage() {
        Some(stage) => vec![(stage, strategy)],
        None => {
            let mut p = Vec::new();
            for st in Stage::ALL {
                p.push((st, Strategy::Direct));
                if st == Stage::Forecast && cfg.forecast.subq_sample > 0 {
                    p.push((st, Strategy::Subquestions));
                }
            }
            p
        }
    };
    let mut clean = true;
    for (stage, strategy) in plan {
        let opts = StageOptions { strategy, ..opts.clone() };
        let summary = run_stage(stage, &cfg, &run, &gw, &opts)?;
        let name = match (stage, strategy) {
            (Stage::Forecast, Strategy::Subquestions) => "forecast (subquestions)".to_string(),
            _ => stage.to_string(),
        };
        print_summary(&name, &summary);
        clean &= summary.failed == 0;
    }
    Ok(clean)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_env("FFOUNDRY_LOG")
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("some items failed; rerun the same command to retry them");
            ExitCode::from(EXIT_PARTIAL)
        }
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
