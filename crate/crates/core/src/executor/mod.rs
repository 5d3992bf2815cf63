//! Runs candidate programs against examples and classifies the results.
//!
//! Two backends: the built-in list DSL, evaluated in-process, and an
//! external sandbox worker reached over an NDJSON stdio protocol (see
//! [`sandbox`]). Per-example failures are encoded in the report; only an
//! unreachable sandbox is an error.

pub mod sandbox;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Example;
use crate::dsl::{self, EvalStatus};
use crate::providers::format_list;

pub use sandbox::{SandboxPool, WorkRequest, WorkResponse};

/// Failing examples quoted in a refinement error report.
pub const MAX_REPORTED_FAILURES: usize = 3;
/// Character cap for each quoted failure.
pub const MAX_FAILURE_CHARS: usize = 200;

pub const INVALID_OUTPUT_SHAPE: &str = "invalid output shape";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    BuiltinDsl,
    ExternalSandbox,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExecutorConfig {
    pub backend: Backend,
    /// DSL only.
    pub step_budget: u64,
    /// Sandbox only: per-example wall-clock limit.
    pub timeout_ms: u64,
    /// Sandbox only: passed to the worker, which enforces it.
    pub memory_limit_mib: u64,
    /// Sandbox only: worker command line.
    pub sandbox_command: Vec<String>,
    /// Sandbox only: maximum concurrently running workers.
    pub max_workers: usize,
}

impl Default for ExecutorConfig {
    fn default() -> Self {
        ExecutorConfig {
            backend: Backend::BuiltinDsl,
            step_budget: dsl::DEFAULT_STEP_BUDGET,
            timeout_ms: 2000,
            memory_limit_mib: 256,
            sandbox_command: vec!["python3".into(), "-m".into(), "indukt_sandbox".into()],
            max_workers: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(4),
        }
    }
}

impl ExecutorConfig {
    pub fn validate(&self) -> Result<(), ExecutorError> {
        let bad = |m: &str| Err(ExecutorError::InvalidConfig(m.into()));
        if self.step_budget == 0 {
            return bad("step_budget must be positive");
        }
        if self.timeout_ms == 0 {
            return bad("timeout_ms must be positive");
        }
        if self.memory_limit_mib == 0 {
            return bad("memory_limit_mib must be positive");
        }
        if self.max_workers == 0 {
            return bad("max_workers must be positive");
        }
        if self.backend == Backend::ExternalSandbox && self.sandbox_command.is_empty() {
            return bad("sandbox_command is empty");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExampleStatus {
    Match,
    Mismatch,
    ExecutionError,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExampleResult {
    pub input: Vec<i64>,
    pub expected: Vec<i64>,
    pub actual: Option<Vec<i64>>,
    pub status: ExampleStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_message: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExecutionReport {
    pub results: Vec<ExampleResult>,
    pub matches: usize,
    pub total: usize,
    pub train_accuracy: f64,
    pub all_passed: bool,
}

impl ExecutionReport {
    pub fn from_results(results: Vec<ExampleResult>) -> ExecutionReport {
        let matches = results.iter().filter(|r| r.status == ExampleStatus::Match).count();
        let total = results.len();
        ExecutionReport {
            train_accuracy: if total == 0 { 0.0 } else { matches as f64 / total as f64 },
            all_passed: total > 0 && matches == total,
            matches,
            total,
            results,
        }
    }

    /// Error text appended to refinement prompts: the first few failing
    /// examples, each truncated.
    pub fn error_summary(&self) -> String {
        let failures: Vec<_> = self.results.iter().filter(|r| r.status != ExampleStatus::Match).collect();
        let mut lines: Vec<String> = failures
            .iter()
            .take(MAX_REPORTED_FAILURES)
            .map(|r| {
                let line = format!(
                    "input {}: {}",
                    format_list(&r.input),
                    r.error_message.as_deref().unwrap_or("failed")
                );
                truncate_chars(&line, MAX_FAILURE_CHARS)
            })
            .collect();
        if failures.len() > MAX_REPORTED_FAILURES {
            lines.push(format!("({} more failing examples)", failures.len() - MAX_REPORTED_FAILURES));
        }
        lines.join("\n")
    }
}

fn truncate_chars(s: &str, max: usize) -> String {
    match s.char_indices().nth(max) {
        Some((idx, _)) => format!("{}...", &s[..idx]),
        None => s.to_string(),
    }
}

pub fn mismatch_message(expected: &[i64], actual: &[i64]) -> String {
    format!("expected {}, got {}", format_list(expected), format_list(actual))
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ExecutorError {
    #[error("sandbox unavailable: {0}")]
    SandboxUnavailable(String),
    #[error("no examples to run")]
    NoExamples,
    #[error("invalid executor config: {0}")]
    InvalidConfig(String),
}

/// A per-input execution failure (parse error, timeout, crash, bad output).
pub type Prediction = Result<Vec<i64>, String>;

pub struct Executor {
    config: ExecutorConfig,
    pool: Option<SandboxPool>,
}

impl Executor {
    pub fn new(config: ExecutorConfig) -> Result<Executor, ExecutorError> {
        config.validate()?;
        let pool = match config.backend {
            Backend::BuiltinDsl => None,
            Backend::ExternalSandbox => Some(SandboxPool::new(&config)),
        };
        Ok(Executor { config, pool })
    }

    pub fn builtin() -> Executor {
        Executor::new(ExecutorConfig::default()).expect("default config is valid")
    }

    pub fn config(&self) -> &ExecutorConfig {
        &self.config
    }

    /// Instructions describing the target language, for implementor prompts.
    pub fn language_guide(&self) -> String {
        match self.config.backend {
            Backend::BuiltinDsl => format!(
                "Write the program in the list pipeline language: stages separated by `|`, each stage a primitive name followed by integer arguments, applied left to right (for example `filter_gt 3 | sort | take 2`). Available primitives:\n{}",
                dsl::primitive_reference()
            ),
            Backend::ExternalSandbox => "Write the program in Python. Define a function `transform(xs)` that takes a list of integers and returns a list of integers. Do not read input or print output.".to_string(),
        }
    }

    /// Runs `program` on every input, in order.
    fn predict_all(&self, program: &str, inputs: &[&[i64]]) -> Result<Vec<Prediction>, ExecutorError> {
        match &self.pool {
            None => {
                let parsed = dsl::parse(program);
                Ok(inputs
                    .iter()
                    .map(|input| match &parsed {
                        Err(e) => Err(e.to_string()),
                        Ok(p) => {
                            let outcome = dsl::evaluate(p, input, self.config.step_budget);
                            match outcome.status {
                                EvalStatus::Ok => Ok(outcome.output.unwrap_or_default()),
                                EvalStatus::StepBudgetExceeded => Err(format!(
                                    "step budget of {} exceeded",
                                    self.config.step_budget
                                )),
                                EvalStatus::ArityOrNameError => Err("arity or name error".into()),
                            }
                        }
                    })
                    .collect())
            }
            Some(pool) => pool.run(program, inputs, self.config.timeout_ms),
        }
    }

    pub fn run_candidate(&self, program: &str, examples: &[Example]) -> Result<ExecutionReport, ExecutorError> {
        if examples.is_empty() {
            return Err(ExecutorError::NoExamples);
        }
        let inputs: Vec<&[i64]> = examples.iter().map(|e| e.input.as_slice()).collect();
        let predictions = self.predict_all(program, &inputs)?;
        let results = examples
            .iter()
            .zip(predictions)
            .map(|(ex, prediction)| {
                let (status, actual, error_message) = match prediction {
                    Ok(out) if out == ex.output => (ExampleStatus::Match, Some(out), None),
                    Ok(out) => {
                        let msg = mismatch_message(&ex.output, &out);
                        (ExampleStatus::Mismatch, Some(out), Some(msg))
                    }
                    Err(e) => (ExampleStatus::ExecutionError, None, Some(e)),
                };
                ExampleResult {
                    input: ex.input.clone(),
                    expected: ex.output.clone(),
                    actual,
                    status,
                    error_message,
                }
            })
            .collect();
        Ok(ExecutionReport::from_results(results))
    }

    pub fn predict(&self, program: &str, input: &[i64]) -> Result<Prediction, ExecutorError> {
        Ok(self
            .predict_all(program, &[input])?
            .pop()
            .expect("one prediction per input"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex(i: Vec<i64>, o: Vec<i64>) -> Example {
        Example::new(i, o)
    }

    #[test]
    fn correct_program_passes_everything() {
        let report = Executor::builtin()
            .run_candidate("reverse", &[ex(vec![1, 2], vec![2, 1]), ex(vec![3], vec![3])])
            .unwrap();
        assert!(report.all_passed);
        assert_eq!(report.train_accuracy, 1.0);
        assert_eq!((report.matches, report.total), (2, 2));
    }

    #[test]
    fn mismatch_carries_expected_and_actual() {
        let report = Executor::builtin().run_candidate("sort", &[ex(vec![2, 1], vec![2, 1])]).unwrap();
        let r = &report.results[0];
        assert_eq!(r.status, ExampleStatus::Mismatch);
        assert_eq!(r.actual, Some(vec![1, 2]));
        assert_eq!(r.error_message.as_deref(), Some("expected [2, 1], got [1, 2]"));
        assert!(!report.all_passed);
        assert_eq!(report.train_accuracy, 0.0);
    }

    #[test]
    fn unknown_primitive_fails_every_example() {
        let report = Executor::builtin()
            .run_candidate("tak 2", &[ex(vec![1], vec![1]), ex(vec![], vec![])])
            .unwrap();
        for r in &report.results {
            assert_eq!(r.status, ExampleStatus::ExecutionError);
            assert!(r.error_message.as_deref().unwrap().contains("unknown primitive `tak`"));
            assert_eq!(r.actual, None);
        }
    }

    #[test]
    fn partial_accuracy_is_an_exact_fraction() {
        let report = Executor::builtin()
            .run_candidate(
                "take 2",
                &[ex(vec![1, 2], vec![1, 2]), ex(vec![1, 2, 3], vec![1, 2, 3]), ex(vec![5], vec![5])],
            )
            .unwrap();
        assert_eq!((report.matches, report.total), (2, 3));
        assert_eq!(report.train_accuracy, 2.0 / 3.0);
    }

    #[test]
    fn step_budget_is_an_execution_error() {
        let exec = Executor::new(ExecutorConfig {
            step_budget: 5,
            ..Default::default()
        })
        .unwrap();
        let report = exec.run_candidate("repeat 9", &[ex(vec![1, 2], vec![])]).unwrap();
        assert_eq!(report.results[0].status, ExampleStatus::ExecutionError);
        assert!(report.results[0].error_message.as_deref().unwrap().contains("step budget"));
    }

    #[test]
    fn empty_examples_are_rejected() {
        assert_eq!(Executor::builtin().run_candidate("reverse", &[]), Err(ExecutorError::NoExamples));
    }

    #[test]
    fn predict_single_inputs() {
        let exec = Executor::builtin();
        assert_eq!(exec.predict("take 2", &[9, 8, 7]).unwrap(), Ok(vec![9, 8]));
        assert_eq!(exec.predict("head", &[]).unwrap(), Ok(vec![]));
        assert!(exec.predict("take", &[1]).unwrap().is_err());
    }

    #[test]
    fn error_summary_is_bounded() {
        let examples: Vec<_> = (0..6).map(|i| ex(vec![i; 80], vec![])).collect();
        let report = Executor::builtin().run_candidate("identity", &examples).unwrap();
        let summary = report.error_summary();
        let lines: Vec<_> = summary.lines().collect();
        assert_eq!(lines.len(), 4);
        for line in &lines[..3] {
            assert!(line.chars().count() <= MAX_FAILURE_CHARS + 3);
            assert!(line.ends_with("..."));
        }
        assert_eq!(lines[3], "(3 more failing examples)");
    }

    #[test]
    fn config_limits_must_be_positive() {
        for cfg in [
            ExecutorConfig { timeout_ms: 0, ..Default::default() },
            ExecutorConfig { step_budget: 0, ..Default::default() },
            ExecutorConfig { memory_limit_mib: 0, ..Default::default() },
            ExecutorConfig { max_workers: 0, ..Default::default() },
        ] {
            assert!(matches!(Executor::new(cfg), Err(ExecutorError::InvalidConfig(_))));
        }
    }
}
