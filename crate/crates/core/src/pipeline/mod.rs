//! One trial, end to end.
//!
//! Hypothesis search: 64 generator samples are condensed into 8 summaries;
//! each distinct summary gets a batch of 8 candidate programs, and every
//! failing candidate is refined up to 3 times against its error report.
//! The first candidate that passes all training examples ends the search.
//! All programs tied at the best training accuracy are tested on the
//! held-out example and their correctness is averaged.
//!
//! Direct mode asks once for a program and scores it without refinement.

mod direct;
mod extract;
mod search;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::corpus::TrialSpec;
use crate::executor::{ExecutionReport, Executor};
use crate::providers::{PromptSet, Provider, SamplingProfile};

pub use extract::{extract_program, parse_numbered};

pub const SENTINEL_HYPOTHESIS: &str = "(no hypothesis)";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    HypothesisSearch,
    Direct,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::HypothesisSearch => "hypothesis-search",
            Mode::Direct => "direct",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hypothesis-search" | "hypothesis_search" => Ok(Mode::HypothesisSearch),
            "direct" => Ok(Mode::Direct),
            other => Err(format!("unknown mode `{other}`")),
        }
    }
}

/// How the initial implementor batch is charged.
///
/// `Standard` charges only refinements (and direct calls), giving the
/// 64 + 1 + 192 = 257 worst case. `Strict` also charges one call per
/// implemented hypothesis, for a worst case of 265.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetAccounting {
    #[default]
    Standard,
    Strict,
}

impl std::str::FromStr for BudgetAccounting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "standard" => Ok(BudgetAccounting::Standard),
            "strict" => Ok(BudgetAccounting::Strict),
            other => Err(format!("unknown budget accounting `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub model_name: String,
    pub sampling: SamplingProfile,
    pub n_hypotheses: usize,
    pub n_summaries: usize,
    pub n_candidates: usize,
    pub max_refinements: usize,
    pub budget_accounting: BudgetAccounting,
    /// Off by default so logs are byte-reproducible.
    pub record_wall_time: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            model_name: "gpt-4o".into(),
            sampling: SamplingProfile::default(),
            n_hypotheses: 64,
            n_summaries: 8,
            n_candidates: 8,
            max_refinements: 3,
            budget_accounting: BudgetAccounting::Standard,
            record_wall_time: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HypothesisSource {
    Generator { index: usize },
    Summarizer { slot: usize },
    /// Frequency fallback used when the summary response could not be parsed.
    Fallback { slot: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub text: String,
    pub source: HypothesisSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_indices: Option<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProgramVersion {
    pub round: usize,
    pub text: String,
    pub report: ExecutionReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateProgram {
    /// `None` for the direct baseline.
    pub hypothesis_slot: Option<usize>,
    pub candidate_index: usize,
    pub versions: Vec<ProgramVersion>,
    pub final_train_accuracy: f64,
}

impl CandidateProgram {
    pub fn passed(&self) -> bool {
        self.versions.iter().any(|v| v.report.all_passed)
    }

    /// The latest version achieving the best training accuracy.
    pub fn best_version(&self) -> Option<&ProgramVersion> {
        self.versions
            .iter()
            .rev()
            .find(|v| v.report.train_accuracy == self.final_train_accuracy)
    }

    fn refresh(&mut self) {
        self.final_train_accuracy = self
            .versions
            .iter()
            .map(|v| v.report.train_accuracy)
            .fold(0.0, f64::max);
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetLedger {
    pub accounting: BudgetAccounting,
    pub generator_calls: u32,
    pub summarizer_calls: u32,
    /// Charged implementor calls under `accounting`.
    pub implementor_calls: u32,
    pub implementor_batches: u32,
    pub refinement_calls: u32,
    pub direct_calls: u32,
    pub program_versions: u32,
    pub total_calls: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_ms: Option<u64>,
}

impl BudgetLedger {
    fn new(accounting: BudgetAccounting) -> Self {
        BudgetLedger {
            accounting,
            ..Default::default()
        }
    }

    fn settle(&mut self) {
        self.implementor_calls = self.refinement_calls
            + self.direct_calls
            + match self.accounting {
                BudgetAccounting::Standard => 0,
                BudgetAccounting::Strict => self.implementor_batches,
            };
        self.total_calls = self.generator_calls + self.summarizer_calls + self.implementor_calls;
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Degradation {
    EmptyHypothesis { index: usize },
    SummaryShortfall { parsed: usize },
    SummaryFallback,
    DuplicateSummary { slot: usize, same_as: usize },
    ImplementorFailure { slot: usize, candidate: Option<usize>, message: String },
    NoTrainingData,
    NoCandidates,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectedProgram {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hypothesis_slot: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidate_index: Option<usize>,
    pub prediction: Option<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub test_correct: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub task_id: String,
    pub run_id: u32,
    pub trial_index: usize,
    pub mode: Mode,
    pub generator_hypotheses: Vec<Hypothesis>,
    pub summaries: Vec<Hypothesis>,
    pub candidates: Vec<CandidateProgram>,
    pub selected: Vec<SelectedProgram>,
    pub best_train_accuracy: f64,
    pub train_solved: bool,
    pub test_correct_count: usize,
    pub test_accuracy: f64,
    pub test_solved_any: bool,
    pub ledger: BudgetLedger,
    pub degradations: Vec<Degradation>,
    /// Set when the trial was aborted by a provider or sandbox failure;
    /// such trials are excluded from metric denominators.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub infrastructure_failure: Option<String>,
}

impl TrialOutcome {
    fn empty(trial: &TrialSpec, run_id: u32, mode: Mode, accounting: BudgetAccounting) -> Self {
        TrialOutcome {
            task_id: trial.task_id.clone(),
            run_id,
            trial_index: trial.trial_index,
            mode,
            generator_hypotheses: Vec::new(),
            summaries: Vec::new(),
            candidates: Vec::new(),
            selected: Vec::new(),
            best_train_accuracy: 0.0,
            train_solved: false,
            test_correct_count: 0,
            test_accuracy: 0.0,
            test_solved_any: false,
            ledger: BudgetLedger::new(accounting),
            degradations: Vec::new(),
            infrastructure_failure: None,
        }
    }

    pub fn is_aborted(&self) -> bool {
        self.infrastructure_failure.is_some()
    }
}

/// Failures that abort a trial.
#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Provider(#[from] crate::providers::ProviderError),
    #[error(transparent)]
    Prompt(#[from] crate::providers::PromptError),
    #[error(transparent)]
    Executor(#[from] crate::executor::ExecutorError),
}

/// Everything a trial needs: model access, program execution and settings.
pub struct Pipeline<'a> {
    pub provider: &'a dyn Provider,
    pub executor: &'a Executor,
    pub prompts: &'a PromptSet,
    pub config: &'a PipelineConfig,
}

impl Pipeline<'_> {
    pub fn run_trial(&self, mode: Mode, trial: &TrialSpec, run_id: u32) -> TrialOutcome {
        match mode {
            Mode::HypothesisSearch => self.run_trial_hypothesis_search(trial, run_id),
            Mode::Direct => self.run_trial_direct(trial, run_id),
        }
    }

    fn finish(
        &self,
        mut outcome: TrialOutcome,
        result: Result<(), PipelineError>,
        started: Instant,
    ) -> TrialOutcome {
        if let Err(e) = result {
            log::warn!(
                "trial {}/{} run {} aborted: {e}",
                outcome.task_id,
                outcome.trial_index,
                outcome.run_id
            );
            outcome.infrastructure_failure = Some(e.to_string());
            outcome.selected.clear();
            outcome.test_correct_count = 0;
            outcome.test_accuracy = 0.0;
            outcome.test_solved_any = false;
        }
        outcome.ledger.program_versions = outcome.candidates.iter().map(|c| c.versions.len() as u32).sum();
        outcome.ledger.settle();
        if self.config.record_wall_time {
            outcome.ledger.wall_time_ms = Some(started.elapsed().as_millis() as u64);
        }
        outcome
    }

    /// Canonical text used to deduplicate the tie set.
    fn canonical(&self, program: &str) -> String {
        match self.executor.config().backend {
            crate::executor::Backend::BuiltinDsl => {
                crate::dsl::canonicalize(program).unwrap_or_else(|| program.trim().to_string())
            }
            crate::executor::Backend::ExternalSandbox => program.trim().to_string(),
        }
    }

    fn identity_program(&self) -> &'static str {
        match self.executor.config().backend {
            crate::executor::Backend::BuiltinDsl => "identity",
            crate::executor::Backend::ExternalSandbox => "def transform(xs):\n    return xs",
        }
    }

    /// Tests every program tied at the best training accuracy on the
    /// held-out example and averages their correctness.
    fn select_and_test(&self, outcome: &mut TrialOutcome, trial: &TrialSpec) -> Result<(), PipelineError> {
        let best = outcome
            .candidates
            .iter()
            .map(|c| c.final_train_accuracy)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut chosen: Vec<(String, Option<usize>, Option<usize>)> = Vec::new();
        if trial.training.is_empty() || outcome.candidates.is_empty() {
            if !trial.training.is_empty() {
                outcome.degradations.push(Degradation::NoCandidates);
            }
            chosen.push((self.identity_program().to_string(), None, None));
            outcome.best_train_accuracy = 0.0;
        } else {
            outcome.best_train_accuracy = best;
            let mut seen = std::collections::HashSet::new();
            for c in outcome.candidates.iter().filter(|c| c.final_train_accuracy == best) {
                let version = c.best_version().expect("candidate has versions");
                if seen.insert(self.canonical(&version.text)) {
                    chosen.push((version.text.clone(), c.hypothesis_slot, Some(c.candidate_index)));
                }
            }
        }
        outcome.train_solved = outcome.candidates.iter().any(|c| c.passed());
        for (text, hypothesis_slot, candidate_index) in chosen {
            let prediction = self.executor.predict(&text, &trial.test.input)?;
            let (prediction, error) = match prediction {
                Ok(p) => (Some(p), None),
                Err(e) => (None, Some(e)),
            };
            let test_correct = prediction.as_ref() == Some(&trial.test.output);
            outcome.selected.push(SelectedProgram {
                text,
                hypothesis_slot,
                candidate_index,
                prediction,
                error,
                test_correct,
            });
        }
        outcome.test_correct_count = outcome.selected.iter().filter(|s| s.test_correct).count();
        outcome.test_accuracy = outcome.test_correct_count as f64 / outcome.selected.len() as f64;
        outcome.test_solved_any = outcome.test_correct_count > 0;
        Ok(())
    }

    fn language_guide(&self) -> String {
        self.executor.language_guide()
    }

    fn run_version(&self, text: &str, trial: &TrialSpec) -> Result<ExecutionReport, PipelineError> {
        Ok(self.executor.run_candidate(text, &trial.training)?)
    }
}
