//! The experimental protocol: every task, every trial, several runs.

mod metrics;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{Corpus, TRIALS_PER_TASK};
use crate::executor::{Backend, Executor};
use crate::pipeline::{Mode, Pipeline, PipelineConfig, TrialOutcome};
use crate::providers::{CompletionRequest, PromptSet, Provider, ProviderError};

pub use metrics::*;

pub const SCHEMA_VERSION: u32 = 1;

/// Share of flagged trials above which a run fails loudly.
pub const MAX_FLAGGED_FRACTION: f64 = 0.01;

/// Executor settings that influence results. Pool width and the worker
/// command line are transport details and stay out of the snapshot.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutorSnapshot {
    pub backend: Backend,
    pub step_budget: u64,
    pub timeout_ms: u64,
    pub memory_limit_mib: u64,
}

impl ExecutorSnapshot {
    pub fn of(executor: &Executor) -> Self {
        let c = executor.config();
        ExecutorSnapshot {
            backend: c.backend,
            step_budget: c.step_budget,
            timeout_ms: c.timeout_ms,
            memory_limit_mib: c.memory_limit_mib,
        }
    }
}

/// Everything that determines the outcomes of an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub pipeline: PipelineConfig,
    pub executor: ExecutorSnapshot,
    pub master_seed: u64,
    pub n_runs: u32,
    pub corpus_digest: String,
    /// Parameters of a simulated model, if any.
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub simulation: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub schema_version: u32,
    pub run_id: u32,
    pub mode: Mode,
    pub provider_fingerprint: String,
    pub run_seed: u64,
    pub config: ExperimentConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub header: RunHeader,
    pub outcomes: Vec<TrialOutcome>,
}

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("run {run_id}: {flagged} of {total} trials hit infrastructure failures")]
    TooManyFailures { run_id: u32, flagged: usize, total: usize },
    #[error("run logs disagree on {0}")]
    Incompatible(&'static str),
    #[error("no run logs given")]
    Empty,
    #[error("run log {path}: {message}")]
    Format { path: String, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("could not start worker pool: {0}")]
    Pool(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Seed for run `run_id` (1-based) under `master`.
pub fn run_seed(master: u64, run_id: u32) -> u64 {
    let digest = Sha256::new()
        .chain_update(master.to_le_bytes())
        .chain_update(run_id.to_le_bytes())
        .finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Identifies the model behind a run: its name and sampling settings.
pub fn provider_fingerprint(config: &PipelineConfig) -> String {
    let value = serde_json::json!({"model": config.model_name, "sampling": config.sampling});
    hex::encode(Sha256::digest(value.to_string().as_bytes()))
}

/// Routes each request to the provider of its run, for backends whose
/// behaviour depends on the per-run seed.
pub struct PerRun<P> {
    providers: Vec<P>,
}

impl<P: Provider> PerRun<P> {
    /// `make(run_id, seed)` builds the provider for each of `n_runs` runs.
    pub fn new(master_seed: u64, n_runs: u32, make: impl Fn(u32, u64) -> P) -> Self {
        PerRun {
            providers: (1..=n_runs).map(|r| make(r, run_seed(master_seed, r))).collect(),
        }
    }
}

impl<P: Provider> Provider for PerRun<P> {
    fn complete(&self, req: &CompletionRequest) -> Result<Vec<String>, ProviderError> {
        let run = req.meta.run as usize;
        self.providers
            .get(run.wrapping_sub(1))
            .ok_or_else(|| ProviderError::Unscripted(format!("no provider for run {run}")))?
            .complete(req)
    }

    fn supports_multi_sample(&self) -> bool {
        self.providers.iter().all(|p| p.supports_multi_sample())
    }
}

pub struct Experiment<'a> {
    pub corpus: &'a Corpus,
    pub provider: &'a dyn Provider,
    pub executor: &'a Executor,
    pub prompts: &'a PromptSet,
    pub config: &'a ExperimentConfig,
    /// Trials executed at once; 0 means one per core.
    pub concurrency: usize,
}

/// Finished logs plus any runs that crossed the failure threshold.
#[derive(Debug)]
pub struct ExperimentResult {
    pub logs: Vec<RunLog>,
    pub failures: Vec<HarnessError>,
}

impl Experiment<'_> {
    pub fn run(&self) -> Result<ExperimentResult, HarnessError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.concurrency)
            .build()
            .map_err(|e| HarnessError::Pool(e.to_string()))?;
        let pipeline = Pipeline {
            provider: self.provider,
            executor: self.executor,
            prompts: self.prompts,
            config: &self.config.pipeline,
        };
        let mode = self.config.mode;
        let units: Vec<(u32, usize, usize)> = (1..=self.config.n_runs)
            .flat_map(|run| {
                (0..self.corpus.len()).flat_map(move |t| (1..=TRIALS_PER_TASK).map(move |n| (run, t, n)))
            })
            .collect();
        // ordered reduction: collect keeps unit order regardless of scheduling
        let outcomes: Vec<TrialOutcome> = pool.install(|| {
            units
                .par_iter()
                .map(|&(run, t, n)| {
                    let trial = self.corpus.tasks()[t].trial(n).expect("trial index in range");
                    pipeline.run_trial(mode, &trial, run)
                })
                .collect()
        });

        let per_run = self.corpus.len() * TRIALS_PER_TASK;
        let mut logs = Vec::new();
        let mut failures = Vec::new();
        let mut outcomes = outcomes.into_iter();
        for run_id in 1..=self.config.n_runs {
            let outcomes: Vec<TrialOutcome> = outcomes.by_ref().take(per_run).collect();
            let flagged = outcomes.iter().filter(|o| o.is_aborted()).count();
            if flagged as f64 > MAX_FLAGGED_FRACTION * per_run as f64 {
                failures.push(HarnessError::TooManyFailures {
                    run_id,
                    flagged,
                    total: per_run,
                });
            }
            logs.push(RunLog {
                header: RunHeader {
                    schema_version: SCHEMA_VERSION,
                    run_id,
                    mode,
                    provider_fingerprint: provider_fingerprint(&self.config.pipeline),
                    run_seed: run_seed(self.config.master_seed, run_id),
                    config: self.config.clone(),
                },
                outcomes,
            });
        }
        Ok(ExperimentResult { logs, failures })
    }
}

impl RunLog {
    pub fn to_ndjson(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        for o in &self.outcomes {
            out.push_str(&serde_json::to_string(o).expect("outcome serializes"));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), HarnessError> {
        let path = path.as_ref();
        let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
        w.write_all(self.to_ndjson().as_bytes()).map_err(io_err(path))?;
        w.flush().map_err(io_err(path))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<RunLog, HarnessError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(io_err(path))?;
        let format = |message: String| HarnessError::Format {
            path: path.display().to_string(),
            message,
        };
        let mut lines = BufReader::new(file).lines();
        let header_line = lines
            .next()
            .ok_or_else(|| format("empty file".into()))?
            .map_err(io_err(path))?;
        let header: RunHeader =
            serde_json::from_str(&header_line).map_err(|e| format(format!("header: {e}")))?;
        if header.schema_version != SCHEMA_VERSION {
            return Err(format(format!(
                "schema version {} (expected {SCHEMA_VERSION})",
                header.schema_version
            )));
        }
        let mut outcomes = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line.map_err(io_err(path))?;
            if line.trim().is_empty() {
                continue;
            }
            outcomes.push(serde_json::from_str(&line).map_err(|e| format(format!("line {}: {e}", i + 2)))?);
        }
        Ok(RunLog { header, outcomes })
    }

    /// File name used for run `run_id` under an output directory.
    pub fn file_name(run_id: u32) -> String {
        format!("run-{run_id}.ndjson")
    }
}
