//! Acquisition curves and mean test accuracy over run logs.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{io_err, HarnessError, RunLog};
use crate::corpus::TRIALS_PER_TASK;

pub const ACQUISITION_CSV: &str = "acquisition.csv";
pub const PER_TASK_CSV: &str = "per_task.csv";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const COMPARISON_CSV: &str = "comparison.csv";
pub const METRICS_JSON: &str = "metrics.json";

/// When a task counts as acquired at trial t.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcquisitionDefinition {
    /// Solved at some trial up to and including t.
    #[default]
    Cumulative,
    /// Solved at trial t itself.
    PerTrial,
}

impl std::str::FromStr for AcquisitionDefinition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cumulative" => Ok(AcquisitionDefinition::Cumulative),
            "per-trial" | "per_trial" => Ok(AcquisitionDefinition::PerTrial),
            other => Err(format!("unknown acquisition definition `{other}`")),
        }
    }
}

impl std::fmt::Display for AcquisitionDefinition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AcquisitionDefinition::Cumulative => "cumulative",
            AcquisitionDefinition::PerTrial => "per-trial",
        })
    }
}

fn check_compatible(logs: &[RunLog]) -> Result<(), HarnessError> {
    let first = logs.first().ok_or(HarnessError::Empty)?;
    for log in &logs[1..] {
        if log.header.config.corpus_digest != first.header.config.corpus_digest {
            return Err(HarnessError::Incompatible("corpus"));
        }
        if log.header.mode != first.header.mode {
            return Err(HarnessError::Incompatible("mode"));
        }
    }
    Ok(())
}

/// Mean over runs of the number of tasks acquired at each trial 1..=11.
pub fn acquisition_curve(logs: &[RunLog], definition: AcquisitionDefinition) -> Result<Vec<f64>, HarnessError> {
    check_compatible(logs)?;
    let mut totals = vec![0usize; TRIALS_PER_TASK];
    for log in logs {
        let mut solved: BTreeMap<&str, [bool; TRIALS_PER_TASK]> = BTreeMap::new();
        for o in &log.outcomes {
            let row = solved.entry(&o.task_id).or_default();
            if (1..=TRIALS_PER_TASK).contains(&o.trial_index) && o.test_solved_any && !o.is_aborted() {
                row[o.trial_index - 1] = true;
            }
        }
        for row in solved.values() {
            let mut seen = false;
            for (t, &hit) in row.iter().enumerate() {
                seen |= hit;
                let acquired = match definition {
                    AcquisitionDefinition::Cumulative => seen,
                    AcquisitionDefinition::PerTrial => hit,
                };
                totals[t] += usize::from(acquired);
            }
        }
    }
    Ok(totals.into_iter().map(|c| c as f64 / logs.len() as f64).collect())
}

/// Per task: mean test accuracy over its trials (from `min_trial` on) and
/// runs. Aborted trials are left out.
pub fn per_task_accuracy(logs: &[RunLog], min_trial: usize) -> Result<BTreeMap<String, f64>, HarnessError> {
    check_compatible(logs)?;
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for log in logs {
        for o in log.outcomes.iter().filter(|o| o.trial_index >= min_trial && !o.is_aborted()) {
            let entry = sums.entry(o.task_id.clone()).or_default();
            entry.0 += o.test_accuracy;
            entry.1 += 1;
        }
    }
    Ok(sums.into_iter().map(|(id, (sum, n))| (id, sum / n as f64)).collect())
}

/// Mean and population standard deviation across tasks.
pub fn mean_and_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn mean_test_accuracy(logs: &[RunLog], min_trial: usize) -> Result<(f64, f64), HarnessError> {
    let per_task: Vec<f64> = per_task_accuracy(logs, min_trial)?.into_values().collect();
    Ok(mean_and_std(&per_task))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub definition: AcquisitionDefinition,
    pub min_trial: usize,
    pub n_runs: usize,
    pub acquisition_curve: Vec<f64>,
    pub mean_test_accuracy: f64,
    pub std_test_accuracy: f64,
    pub per_task_accuracy: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiteratureRow {
    pub label: String,
    pub mean_test_accuracy: f64,
    pub std: f64,
}

/// Published reference accuracies, shipped for side-by-side comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Literature {
    #[serde(default)]
    pub note: String,
    pub rows: Vec<LiteratureRow>,
}

impl Literature {
    pub fn bundled() -> Literature {
        serde_json::from_str(include_str!("../../data/literature.json")).expect("bundled literature parses")
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Literature, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Format {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

fn csv_err(path: &Path, e: csv::Error) -> HarnessError {
    HarnessError::Format {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

impl MetricsReport {
    pub fn compute(logs: &[RunLog], definition: AcquisitionDefinition, min_trial: usize) -> Result<Self, HarnessError> {
        let acquisition_curve = acquisition_curve(logs, definition)?;
        let per_task_accuracy = per_task_accuracy(logs, min_trial)?;
        let values: Vec<f64> = per_task_accuracy.values().copied().collect();
        let (mean_test_accuracy, std_test_accuracy) = mean_and_std(&values);
        Ok(MetricsReport {
            definition,
            min_trial,
            n_runs: logs.len(),
            acquisition_curve,
            mean_test_accuracy,
            std_test_accuracy,
            per_task_accuracy,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Writes `metrics.json` and the three CSV tables into `dir`.
    pub fn export(&self, dir: impl AsRef<Path>) -> Result<(), HarnessError> {
        let dir = dir.as_ref();
        let json_path = dir.join(METRICS_JSON);
        std::fs::write(&json_path, self.to_json()).map_err(io_err(&json_path))?;

        let path = dir.join(ACQUISITION_CSV);
        let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
        w.write_record(["trial", "mean_acquired"]).map_err(|e| csv_err(&path, e))?;
        for (t, v) in self.acquisition_curve.iter().enumerate() {
            w.write_record([(t + 1).to_string(), v.to_string()]).map_err(|e| csv_err(&path, e))?;
        }
        w.flush().map_err(io_err(&path))?;

        let path = dir.join(PER_TASK_CSV);
        let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
        w.write_record(["task_id", "mean_test_accuracy"]).map_err(|e| csv_err(&path, e))?;
        for (id, v) in &self.per_task_accuracy {
            w.write_record([id.clone(), v.to_string()]).map_err(|e| csv_err(&path, e))?;
        }
        w.flush().map_err(io_err(&path))?;

        let path = dir.join(SUMMARY_CSV);
        let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
        w.write_record(["metric", "value"]).map_err(|e| csv_err(&path, e))?;
        for (k, v) in [
            ("definition", self.definition.to_string()),
            ("min_trial", self.min_trial.to_string()),
            ("n_runs", self.n_runs.to_string()),
            ("mean_test_accuracy", self.mean_test_accuracy.to_string()),
            ("std_test_accuracy", self.std_test_accuracy.to_string()),
        ] {
            w.write_record([k, v.as_str()]).map_err(|e| csv_err(&path, e))?;
        }
        w.flush().map_err(io_err(&path))
    }

    /// Reads a report back from the CSV tables written by [`export`](Self::export).
    pub fn import_csv(dir: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let dir = dir.as_ref();
        let rows = |name: &str| -> Result<Vec<(String, String)>, HarnessError> {
            let path = dir.join(name);
            let mut r = csv::Reader::from_path(&path).map_err(|e| csv_err(&path, e))?;
            r.records()
                .map(|rec| {
                    let rec = rec.map_err(|e| csv_err(&path, e))?;
                    Ok((rec[0].to_string(), rec[1].to_string()))
                })
                .collect()
        };
        let bad = |name: &str, message: String| HarnessError::Format {
            path: dir.join(name).display().to_string(),
            message,
        };
        let float = |name: &str, s: &str| s.parse::<f64>().map_err(|e| bad(name, format!("`{s}`: {e}")));

        let acquisition_curve = rows(ACQUISITION_CSV)?
            .iter()
            .map(|(_, v)| float(ACQUISITION_CSV, v))
            .collect::<Result<_, _>>()?;
        let per_task_accuracy = rows(PER_TASK_CSV)?
            .into_iter()
            .map(|(id, v)| Ok((id, float(PER_TASK_CSV, &v)?)))
            .collect::<Result<_, HarnessError>>()?;
        let summary: BTreeMap<String, String> = rows(SUMMARY_CSV)?.into_iter().collect();
        let get = |key: &str| {
            summary
                .get(key)
                .cloned()
                .ok_or_else(|| bad(SUMMARY_CSV, format!("missing `{key}`")))
        };
        Ok(MetricsReport {
            definition: get("definition")?.parse().map_err(|e| bad(SUMMARY_CSV, e))?,
            min_trial: get("min_trial")?.parse().map_err(|e| bad(SUMMARY_CSV, format!("{e}")))?,
            n_runs: get("n_runs")?.parse().map_err(|e| bad(SUMMARY_CSV, format!("{e}")))?,
            acquisition_curve,
            mean_test_accuracy: float(SUMMARY_CSV, &get("mean_test_accuracy")?)?,
            std_test_accuracy: float(SUMMARY_CSV, &get("std_test_accuracy")?)?,
            per_task_accuracy,
        })
    }

    /// This report's accuracy next to the literature rows.
    pub fn write_comparison(&self, label: &str, literature: &Literature, path: impl AsRef<Path>) -> Result<(), HarnessError> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        w.write_record(["system", "mean_test_accuracy", "std", "source"])
            .map_err(|e| csv_err(path, e))?;
        w.write_record([
            label,
            &self.mean_test_accuracy.to_string(),
            &self.std_test_accuracy.to_string(),
            "computed",
        ])
        .map_err(|e| csv_err(path, e))?;
        for row in &literature.rows {
            w.write_record([
                row.label.as_str(),
                &row.mean_test_accuracy.to_string(),
                &row.std.to_string(),
                "literature",
            ])
            .map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(io_err(path))
    }
}
