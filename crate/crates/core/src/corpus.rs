//! Task corpus: loading, validation and the trial protocol.
//!
//! A task carries exactly [`TRIALS_PER_TASK`] ordered examples. Trial `n`
//! shows the first `n - 1` examples as training data and holds out the `n`-th.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{self, EvalStatus, DEFAULT_STEP_BUDGET};

pub const TRIALS_PER_TASK: usize = 11;
pub const VALUE_LIMIT: i64 = 1000;
pub const MAX_LIST_LEN: usize = 64;

const MINI_CORPUS: &str = include_str!("../data/mini_corpus.json");

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Example {
    pub input: Vec<i64>,
    pub output: Vec<i64>,
}

impl Example {
    pub fn new(input: Vec<i64>, output: Vec<i64>) -> Example {
        Example { input, output }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Task {
    pub id: String,
    pub description: String,
    pub examples: Vec<Example>,
    pub reference_program: Option<String>,
}

/// One prediction event: `training` precedes the held-out `test` example.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialSpec {
    pub task_id: String,
    pub trial_index: usize,
    pub training: Vec<Example>,
    pub test: Example,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read corpus {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed corpus: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("task {task_id}: {message}")]
    Validation { task_id: String, message: String },
    #[error("trial index {0} out of range 1..=11")]
    TrialOutOfRange(usize),
    #[error("task {0} has no reference program")]
    MissingReference(String),
    #[error("unknown task {0}")]
    UnknownTask(String),
}

fn invalid(task: &Task, message: impl Into<String>) -> CorpusError {
    CorpusError::Validation {
        task_id: task.id.clone(),
        message: message.into(),
    }
}

impl Task {
    /// The trial protocol: `n` in `1..=11`.
    pub fn trial(&self, n: usize) -> Result<TrialSpec, CorpusError> {
        if n == 0 || n > self.examples.len() {
            return Err(CorpusError::TrialOutOfRange(n));
        }
        Ok(TrialSpec {
            task_id: self.id.clone(),
            trial_index: n,
            training: self.examples[..n - 1].to_vec(),
            test: self.examples[n - 1].clone(),
        })
    }

    /// Outputs of the reference program on `inputs`.
    pub fn oracle_outputs(&self, inputs: &[Vec<i64>]) -> Result<Vec<Vec<i64>>, CorpusError> {
        let text = self
            .reference_program
            .as_deref()
            .ok_or_else(|| CorpusError::MissingReference(self.id.clone()))?;
        let program = dsl::parse(text).map_err(|e| invalid(self, format!("reference program: {e}")))?;
        inputs
            .iter()
            .map(|input| {
                let outcome = dsl::evaluate(&program, input, DEFAULT_STEP_BUDGET);
                match (outcome.status, outcome.output) {
                    (EvalStatus::Ok, Some(out)) => Ok(out),
                    (status, _) => Err(invalid(self, format!("reference program failed: {status:?}"))),
                }
            })
            .collect()
    }

    fn validate(&self) -> Result<(), CorpusError> {
        if self.id.trim().is_empty() {
            return Err(invalid(self, "empty id"));
        }
        if self.description.trim().is_empty() {
            return Err(invalid(self, "missing ground-truth description"));
        }
        if self.examples.len() != TRIALS_PER_TASK {
            return Err(invalid(
                self,
                format!("expected {TRIALS_PER_TASK} examples, found {}", self.examples.len()),
            ));
        }
        for (i, ex) in self.examples.iter().enumerate() {
            for list in [&ex.input, &ex.output] {
                if list.len() > MAX_LIST_LEN {
                    return Err(invalid(self, format!("example {} longer than {MAX_LIST_LEN}", i + 1)));
                }
                if list.iter().any(|v| v.abs() > VALUE_LIMIT) {
                    return Err(invalid(
                        self,
                        format!("example {} has a value outside -{VALUE_LIMIT}..={VALUE_LIMIT}", i + 1),
                    ));
                }
            }
        }
        if self.reference_program.is_some() {
            let inputs: Vec<_> = self.examples.iter().map(|e| e.input.clone()).collect();
            let outputs = self.oracle_outputs(&inputs)?;
            for (i, (ex, got)) in self.examples.iter().zip(&outputs).enumerate() {
                if &ex.output != got {
                    return Err(invalid(
                        self,
                        format!(
                            "reference program disagrees with example {}: expected {:?}, got {:?}",
                            i + 1,
                            ex.output,
                            got
                        ),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// A validated, immutable collection of tasks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Corpus {
    tasks: Vec<Task>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CorpusFile {
    tasks: Vec<Task>,
}

impl Corpus {
    pub fn new(tasks: Vec<Task>) -> Result<Corpus, CorpusError> {
        let mut seen = HashSet::new();
        for task in &tasks {
            if !seen.insert(task.id.as_str()) {
                return Err(invalid(task, "duplicate task id"));
            }
            task.validate()?;
        }
        Ok(Corpus { tasks })
    }

    pub fn from_json(text: &str) -> Result<Corpus, CorpusError> {
        let file: CorpusFile = serde_json::from_str(text)?;
        Corpus::new(file.tasks)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&CorpusFile {
            tasks: self.tasks.clone(),
        })
        .expect("corpus serializes")
    }

    /// The ten-task corpus bundled with the crate.
    pub fn mini() -> Corpus {
        Corpus::from_json(MINI_CORPUS).expect("bundled corpus is valid")
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn task(&self, id: &str) -> Result<&Task, CorpusError> {
        self.tasks
            .iter()
            .find(|t| t.id == id)
            .ok_or_else(|| CorpusError::UnknownTask(id.to_string()))
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    /// Stable digest of the corpus contents, used to tie run logs to a corpus.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Corpus::from_json(&text)
}
