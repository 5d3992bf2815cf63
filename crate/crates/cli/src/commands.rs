use std::path::{Path, PathBuf};
use std::sync::Arc;

use indukt::analysis::{analyze_fixture, analyze_logs, judge_logs, ExactJudge, Judge, LlmJudge, Table2Fixture};
use indukt::corpus::{load_corpus, Corpus};
use indukt::executor::Executor;
use indukt::harness::{
    AcquisitionDefinition, Experiment, ExperimentConfig, ExecutorSnapshot, Literature, MetricsReport, PerRun,
    RunLog, COMPARISON_CSV,
};
use indukt::providers::{
    LiveConfig, LiveProvider, PromptSet, Provider, ProviderError, RecordingProvider, ReplayProvider,
    SyntheticConfig, SyntheticProvider, API_KEY_ENV,
};

use crate::config::{ConfigError, ProviderKind, RunConfig, Settings};

/// Failure classes, each with its own exit status.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Infrastructure(String),
    #[error("{0}")]
    ReplayMiss(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Infrastructure(_) => 3,
            CliError::ReplayMiss(_) => 4,
            CliError::Io(_) => 1,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

fn io<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Io(e.to_string())
}

fn credential_error(e: ProviderError) -> CliError {
    match e {
        ProviderError::CredentialMissing(_) => {
            CliError::Config(format!("the live provider needs an API key in the {API_KEY_ENV} environment variable"))
        }
        other => CliError::Config(other.to_string()),
    }
}

pub fn load_corpus_arg(spec: &str) -> Result<Corpus, CliError> {
    if spec == "mini" {
        Ok(Corpus::mini())
    } else {
        load_corpus(spec).map_err(|e| CliError::Config(format!("corpus {spec}: {e}")))
    }
}

fn live_provider(c: &RunConfig) -> Result<LiveProvider, CliError> {
    LiveProvider::from_env(LiveConfig {
        endpoint: c.endpoint.clone(),
        requests_per_minute: c.requests_per_minute,
        multi_sample: c.multi_sample,
        ..Default::default()
    })
    .map_err(credential_error)
}

/// Where a run's model responses come from.
pub enum Source<'a> {
    Fresh,
    Replay(&'a Path),
}

pub fn run(settings: &Settings, source: Source<'_>) -> Result<(), CliError> {
    let c = RunConfig::from_settings(settings)?;
    let corpus = load_corpus_arg(&c.corpus)?;
    let prompts = match &c.prompts {
        Some(dir) => PromptSet::from_dir(dir).map_err(|e| CliError::Config(e.to_string()))?,
        None => PromptSet::default(),
    };
    let executor = Executor::new(c.executor.clone()).map_err(|e| CliError::Config(e.to_string()))?;
    let simulation = match c.provider {
        ProviderKind::Synthetic => serde_json::to_value(c.synthetic).expect("config serializes"),
        ProviderKind::Live => serde_json::Value::Null,
    };
    let config = ExperimentConfig {
        mode: c.mode,
        pipeline: c.pipeline.clone(),
        executor: ExecutorSnapshot::of(&executor),
        master_seed: c.seed,
        n_runs: c.runs,
        corpus_digest: corpus.digest(),
        simulation,
    };
    std::fs::create_dir_all(&c.out).map_err(io)?;

    let (base, replay): (Box<dyn Provider>, Option<Arc<ReplayProvider>>) = match source {
        Source::Replay(path) => {
            let r = Arc::new(
                ReplayProvider::from_file(path).map_err(|e| CliError::Config(format!("transcript {}: {e}", path.display())))?,
            );
            (Box::new(r.clone()), Some(r))
        }
        Source::Fresh => match c.provider {
            ProviderKind::Synthetic => {
                let sc = c.synthetic;
                let corpus = &corpus;
                let per_run = PerRun::new(c.seed, c.runs, |_, seed| {
                    SyntheticProvider::new(corpus, SyntheticConfig { seed, ..sc })
                });
                (Box::new(per_run), None)
            }
            ProviderKind::Live => (Box::new(live_provider(&c)?), None),
        },
    };
    let recorder = if c.record && replay.is_none() {
        if let Some(dir) = c.transcript.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(io)?;
        }
        Some(RecordingProvider::to_file(base.as_ref(), &c.transcript).map_err(io)?)
    } else {
        None
    };
    let provider: &dyn Provider = match &recorder {
        Some(r) => r,
        None => base.as_ref(),
    };

    let result = Experiment {
        corpus: &corpus,
        provider,
        executor: &executor,
        prompts: &prompts,
        config: &config,
        concurrency: c.concurrency,
    }
    .run()
    .map_err(|e| CliError::Infrastructure(e.to_string()))?;
    if let Some(r) = &recorder {
        r.flush().map_err(io)?;
    }

    for log in &result.logs {
        log.write(c.out.join(RunLog::file_name(log.header.run_id))).map_err(io)?;
    }
    std::fs::write(c.out.join("config.txt"), settings.to_file()).map_err(io)?;
    let report = MetricsReport::compute(&result.logs, AcquisitionDefinition::Cumulative, 2).map_err(io)?;
    report.export(&c.out).map_err(io)?;
    print_metrics(&report);

    if let Some(r) = &replay {
        let misses = r.misses();
        if let Some(first) = misses.first() {
            return Err(CliError::ReplayMiss(format!(
                "{} requests missing from the transcript; first fingerprint {first}",
                misses.len()
            )));
        }
    }
    if !result.failures.is_empty() {
        let lines: Vec<String> = result.failures.iter().map(|f| f.to_string()).collect();
        return Err(CliError::Infrastructure(lines.join("\n")));
    }
    Ok(())
}

fn print_metrics(report: &MetricsReport) {
    let curve: Vec<String> = report.acquisition_curve.iter().map(|v| format!("{v:.2}")).collect();
    println!("acquisition ({}): {}", report.definition, curve.join(" "));
    println!(
        "mean test accuracy (trials >= {}): {:.4} (std {:.4}) over {} runs",
        report.min_trial, report.mean_test_accuracy, report.std_test_accuracy, report.n_runs
    );
}

/// Expands directories into the run logs they contain.
pub fn collect_runlogs(paths: &[PathBuf]) -> Result<Vec<RunLog>, CliError> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(io)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| {
                    let name = f.file_name().and_then(|n| n.to_str()).unwrap_or_default();
                    name.starts_with("run-") && name.ends_with(".ndjson")
                })
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    if files.is_empty() {
        return Err(CliError::Config("no run logs given".into()));
    }
    let mut logs = files
        .iter()
        .map(|f| RunLog::read(f).map_err(|e| CliError::Config(e.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    logs.sort_by_key(|l| l.header.run_id);
    Ok(logs)
}

pub struct MetricsArgs<'a> {
    pub runlogs: &'a [PathBuf],
    pub definition: AcquisitionDefinition,
    pub min_trial: usize,
    pub overlay: Option<&'a str>,
    pub label: &'a str,
    pub out: &'a Path,
}

pub fn metrics(a: MetricsArgs<'_>) -> Result<(), CliError> {
    let logs = collect_runlogs(a.runlogs)?;
    let report =
        MetricsReport::compute(&logs, a.definition, a.min_trial).map_err(|e| CliError::Config(e.to_string()))?;
    std::fs::create_dir_all(a.out).map_err(io)?;
    report.export(a.out).map_err(io)?;
    if let Some(spec) = a.overlay {
        let literature = if spec == "literature" {
            Literature::bundled()
        } else {
            Literature::from_file(spec).map_err(|e| CliError::Config(e.to_string()))?
        };
        report
            .write_comparison(a.label, &literature, a.out.join(COMPARISON_CSV))
            .map_err(io)?;
    }
    print_metrics(&report);
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum JudgeKind {
    Exact,
    Synthetic,
    Live,
}

pub struct AnalyzeArgs<'a> {
    pub runlogs: &'a [PathBuf],
    pub fixture: bool,
    pub judge: JudgeKind,
    pub corpus: &'a str,
    pub model: &'a str,
    pub endpoint: &'a str,
    pub out: &'a Path,
}

pub fn analyze(a: AnalyzeArgs<'_>) -> Result<(), CliError> {
    let report = if a.fixture {
        if !a.runlogs.is_empty() {
            return Err(CliError::Config("give either --fixture or run logs, not both".into()));
        }
        analyze_fixture(&Table2Fixture::bundled()).map_err(|e| CliError::Config(e.to_string()))?
    } else {
        let logs = collect_runlogs(a.runlogs)?;
        let corpus = load_corpus_arg(a.corpus)?;
        let prompts = PromptSet::default();
        let synthetic;
        let live;
        let judge: Box<dyn Judge + '_> = match a.judge {
            JudgeKind::Exact => Box::new(ExactJudge),
            JudgeKind::Synthetic => {
                synthetic = SyntheticProvider::new(&corpus, SyntheticConfig::default());
                Box::new(LlmJudge::new(&synthetic, &prompts, a.model))
            }
            JudgeKind::Live => {
                live = LiveProvider::from_env(LiveConfig {
                    endpoint: a.endpoint.to_string(),
                    ..Default::default()
                })
                .map_err(credential_error)?;
                Box::new(LlmJudge::new(&live, &prompts, a.model))
            }
        };
        let verdicts = judge_logs(&logs, &corpus, judge.as_ref()).map_err(|e| CliError::Config(e.to_string()))?;
        analyze_logs(&logs, &verdicts).map_err(|e| CliError::Config(e.to_string()))?
    };
    std::fs::create_dir_all(a.out).map_err(io)?;
    report.export(a.out).map_err(io)?;

    println!("source: {}", report.source);
    let d = &report.derived;
    for (name, r) in [
        ("generator", &d.generator),
        ("summarizer", &d.summarizer),
        ("implementor train", &d.implementor_train),
        ("implementor test", &d.implementor_test),
        ("overall test rate", &d.overall_test_rate),
        ("test failure rate", &d.test_failure_rate),
        ("test | generator ok, summarizer fail", &d.test_given_generator_ok_summarizer_fail),
        ("test | generator ok, summarizer ok", &d.test_given_both_ok),
        ("rescue of total", &d.rescue_of_total),
        ("rescue of double failures", &d.rescue_of_double_failures),
        ("retention", &d.retention),
    ] {
        println!("{name}: {:.4} ({}/{})", r.value, r.count, r.denominator);
    }
    println!("odds ratio (train): {:.2}", report.odds_ratio_train.value);
    println!("odds ratio (test): {:.2}", report.odds_ratio_test.value);
    println!(
        "structural zero (generator fails, summarizer succeeds): {}",
        if report.structural_zero.holds { "holds" } else { "violated" }
    );
    for c in &report.comparisons {
        println!("compare {}: computed {:.4} reported {:.4}", c.quantity, c.computed, c.reported);
    }
    for n in &report.notes {
        println!("note: {n}");
    }
    Ok(())
}
