//! `indukt`: run hypothesis-search experiments and analyze their logs.
//!
//! Exit status: 0 ok, 1 i/o error, 2 bad configuration, 3 infrastructure
//! failure, 4 replay transcript miss.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use indukt::harness::AcquisitionDefinition;

use commands::{AnalyzeArgs, CliError, JudgeKind, MetricsArgs, Source};
use config::Settings;

#[derive(Parser)]
#[command(name = "indukt", version, about = "LLM-guided hypothesis search for list functions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write one log per run.
    Run(RunArgs),
    /// Re-run an experiment from a recorded transcript.
    Replay {
        #[arg(long)]
        transcript: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Acquisition curve and mean test accuracy from run logs.
    Metrics {
        /// Run log files or directories holding run-N.ndjson files.
        #[arg(required = true)]
        runlogs: Vec<PathBuf>,
        #[arg(long, default_value = "cumulative")]
        definition: AcquisitionDefinition,
        /// First trial counted in mean test accuracy.
        #[arg(long, default_value_t = 2)]
        min_trial: usize,
        /// `literature` for the bundled reference figures, or a JSON file.
        #[arg(long)]
        overlay: Option<String>,
        #[arg(long, default_value = "indukt")]
        label: String,
        #[arg(long, default_value = "metrics")]
        out: PathBuf,
    },
    /// Per-module error analysis of run logs or the bundled fixture.
    Analyze {
        runlogs: Vec<PathBuf>,
        /// Analyze a bundled table instead of run logs (only `table2`).
        #[arg(long, value_parser = ["table2"])]
        fixture: Option<String>,
        #[arg(long, value_enum, default_value = "exact")]
        judge: JudgeKind,
        #[arg(long, default_value = "mini")]
        corpus: String,
        /// Model behind the `live` judge.
        #[arg(long, default_value = "gpt-4o")]
        model: String,
        #[arg(long, default_value = "https://api.openai.com/v1/chat/completions")]
        endpoint: String,
        #[arg(long, default_value = "analysis")]
        out: PathBuf,
    },
}

/// Run settings. Flags override the config file, which overrides defaults.
#[derive(Args)]
struct RunArgs {
    /// Flat `key = value` settings file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Any setting as KEY=VALUE; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_pair)]
    set: Vec<(String, String)>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    provider: Option<String>,
    #[arg(long)]
    corpus: Option<String>,
    #[arg(long)]
    runs: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    executor: Option<String>,
    #[arg(long)]
    concurrency: Option<String>,
    /// Record every model exchange to the transcript file.
    #[arg(long)]
    record: bool,
    #[arg(long = "transcript-out")]
    transcript_out: Option<String>,
}

fn parse_pair(s: &str) -> Result<(String, String), String> {
    let (k, v) = s.split_once('=').ok_or("expected KEY=VALUE")?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

impl RunArgs {
    fn settings(&self) -> Result<Settings, CliError> {
        let mut flags = self.set.clone();
        let named = [
            ("mode", &self.mode),
            ("provider", &self.provider),
            ("corpus", &self.corpus),
            ("runs", &self.runs),
            ("seed", &self.seed),
            ("out", &self.out),
            ("model", &self.model),
            ("executor", &self.executor),
            ("concurrency", &self.concurrency),
            ("transcript", &self.transcript_out),
        ];
        flags.extend(named.iter().filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone()))));
        if self.record {
            flags.push(("record".into(), "true".into()));
        }
        Ok(Settings::layer(self.config.as_deref(), &flags)?)
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(args) => commands::run(&args.settings()?, Source::Fresh),
        Command::Replay { transcript, run } => commands::run(&run.settings()?, Source::Replay(&transcript)),
        Command::Metrics {
            runlogs,
            definition,
            min_trial,
            overlay,
            label,
            out,
        } => commands::metrics(MetricsArgs {
            runlogs: &runlogs,
            definition,
            min_trial,
            overlay: overlay.as_deref(),
            label: &label,
            out: &out,
        }),
        Command::Analyze {
            runlogs,
            fixture,
            judge,
            corpus,
            model,
            endpoint,
            out,
        } => commands::analyze(AnalyzeArgs {
            runlogs: &runlogs,
            fixture: fixture.is_some(),
            judge,
            corpus: &corpus,
            model: &model,
            endpoint: &endpoint,
            out: &out,
        }),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("indukt: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
