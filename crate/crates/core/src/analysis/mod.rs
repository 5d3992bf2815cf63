//! Where the pipeline fails: judged module verdicts, the 16-cell outcome
//! table, conditional rates, odds ratios, correlations and refinement cost.

mod judge;
mod stats;

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::harness::{mean_and_std, RunLog};
use crate::pipeline::{Mode, TrialOutcome};

pub use judge::{judge_hypothesis, parse_verdict, ExactJudge, Judge, LlmJudge, Verdict};
pub use stats::{pearson, OddsRatio, TwoByTwo};

/// Maximum program versions a trial can evaluate.
pub const VERSION_BUDGET: u32 = 256;

pub const REPORT_JSON: &str = "analysis.json";
pub const ERROR_BREAKDOWN_CSV: &str = "error_breakdown.csv";
pub const MODULE_ACCURACY_CSV: &str = "module_accuracy.csv";

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("run logs from {0} mode carry no hypotheses to judge")]
    NoHypotheses(Mode),
    #[error("task `{0}` is not in the corpus")]
    UnknownTask(String),
    #[error("no trials left to analyze")]
    Empty,
    #[error("fixture: {0}")]
    Fixture(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Module {
    Generator,
    Summarizer,
    ImplementorTrain,
    ImplementorTest,
}

impl Module {
    pub const ALL: [Module; 4] = [
        Module::Generator,
        Module::Summarizer,
        Module::ImplementorTrain,
        Module::ImplementorTest,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Module::Generator => "Hypothesis Generator",
            Module::Summarizer => "Hypothesis Summarizer",
            Module::ImplementorTrain => "Program Implementor (Train)",
            Module::ImplementorTest => "Program Implementor (Test)",
        }
    }

    fn bit(self) -> usize {
        match self {
            Module::Generator => 3,
            Module::Summarizer => 2,
            Module::ImplementorTrain => 1,
            Module::ImplementorTest => 0,
        }
    }
}

/// Per-trial success of each module.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleVerdicts {
    pub run_id: u32,
    pub task_id: String,
    pub trial_index: usize,
    pub generator_ok: bool,
    pub summarizer_ok: bool,
    pub implementor_train_ok: bool,
    pub implementor_test_ok: bool,
    pub generator_correct_count: usize,
    pub summarizer_correct_count: usize,
    /// A correct generator hypothesis made it into the summaries.
    pub retained_correct: bool,
    /// Evaluator answers without a verdict token, scored incorrect.
    pub unparseable: usize,
}

impl ModuleVerdicts {
    pub fn get(&self, module: Module) -> bool {
        match module {
            Module::Generator => self.generator_ok,
            Module::Summarizer => self.summarizer_ok,
            Module::ImplementorTrain => self.implementor_train_ok,
            Module::ImplementorTest => self.implementor_test_ok,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExcludedTrial {
    pub run_id: u32,
    pub task_id: String,
    pub trial_index: usize,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictSet {
    pub verdicts: Vec<ModuleVerdicts>,
    pub excluded: Vec<ExcludedTrial>,
}

fn judge_outcome(judge: &dyn Judge, o: &TrialOutcome, truth: &str) -> Result<ModuleVerdicts, String> {
    let mut unparseable = 0;
    let mut count = |texts: &mut dyn Iterator<Item = &str>| -> Result<usize, String> {
        let mut correct = 0;
        for text in texts {
            match judge_hypothesis(judge, &o.task_id, text, truth) {
                Verdict::Correct => correct += 1,
                Verdict::Incorrect => {}
                Verdict::Unparseable => unparseable += 1,
                Verdict::Missing { error } => return Err(format!("evaluator unavailable: {error}")),
            }
        }
        Ok(correct)
    };
    let generator_correct_count = count(&mut o.generator_hypotheses.iter().map(|h| h.text.as_str()))?;
    let summarizer_correct_count = count(&mut o.summaries.iter().map(|h| h.text.as_str()))?;
    Ok(ModuleVerdicts {
        run_id: o.run_id,
        task_id: o.task_id.clone(),
        trial_index: o.trial_index,
        generator_ok: generator_correct_count > 0,
        summarizer_ok: summarizer_correct_count > 0,
        implementor_train_ok: o.train_solved,
        implementor_test_ok: o.test_solved_any,
        generator_correct_count,
        summarizer_correct_count,
        retained_correct: generator_correct_count > 0 && summarizer_correct_count > 0,
        unparseable,
    })
}

/// Judges every generator hypothesis and summary in the logs against the
/// task descriptions. Aborted trials and trials with missing verdicts are
/// set aside with a reason.
pub fn judge_logs(logs: &[RunLog], corpus: &Corpus, judge: &dyn Judge) -> Result<VerdictSet, AnalysisError> {
    let outcomes: Vec<&TrialOutcome> = logs.iter().flat_map(|l| &l.outcomes).collect();
    if let Some(o) = outcomes.iter().find(|o| o.mode != Mode::HypothesisSearch) {
        return Err(AnalysisError::NoHypotheses(o.mode));
    }
    let truths: Vec<&str> = outcomes
        .iter()
        .map(|o| {
            corpus
                .task(&o.task_id)
                .map(|t| t.description.as_str())
                .map_err(|_| AnalysisError::UnknownTask(o.task_id.clone()))
        })
        .collect::<Result<_, _>>()?;
    let results: Vec<Result<ModuleVerdicts, String>> = outcomes
        .par_iter()
        .zip(truths.par_iter())
        .map(|(o, truth)| match &o.infrastructure_failure {
            Some(reason) => Err(format!("aborted: {reason}")),
            None => judge_outcome(judge, o, truth),
        })
        .collect();
    let mut set = VerdictSet::default();
    for (o, r) in outcomes.iter().zip(results) {
        match r {
            Ok(v) => set.verdicts.push(v),
            Err(reason) => set.excluded.push(ExcludedTrial {
                run_id: o.run_id,
                task_id: o.task_id.clone(),
                trial_index: o.trial_index,
                reason,
            }),
        }
    }
    Ok(set)
}

/// Among trials whose generator found the rule, the share that kept it
/// through summarization.
pub fn retention_rate(verdicts: &[ModuleVerdicts]) -> Option<f64> {
    let found = verdicts.iter().filter(|v| v.generator_ok).count();
    let kept = verdicts.iter().filter(|v| v.generator_ok && v.retained_correct).count();
    (found > 0).then(|| kept as f64 / found as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub count: u64,
    pub denominator: u64,
    pub value: f64,
}

impl Rate {
    pub fn new(count: u64, denominator: u64) -> Rate {
        Rate {
            count,
            denominator,
            value: if denominator == 0 {
                f64::NAN
            } else {
                count as f64 / denominator as f64
            },
        }
    }
}

/// Joint success/failure counts of the four modules. Cell `i` holds
/// generator, summarizer, train and test outcomes as the bits of `i`,
/// most significant first, matching the usual row order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable {
    pub counts: [u64; 16],
    /// A published total that may differ from the sum of the cells.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub declared_total: Option<u64>,
}

pub fn cell_index(g: bool, s: bool, it: bool, ie: bool) -> usize {
    (usize::from(g) << 3) | (usize::from(s) << 2) | (usize::from(it) << 1) | usize::from(ie)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuralZero {
    /// Trials where the summarizer succeeded although the generator failed.
    pub summarizer_without_generator: u64,
    pub holds: bool,
}

impl ContingencyTable {
    pub fn from_verdicts(verdicts: &[ModuleVerdicts]) -> Self {
        let mut counts = [0u64; 16];
        for v in verdicts {
            counts[cell_index(v.generator_ok, v.summarizer_ok, v.implementor_train_ok, v.implementor_test_ok)] += 1;
        }
        ContingencyTable {
            counts,
            declared_total: None,
        }
    }

    pub fn count(&self, g: bool, s: bool, it: bool, ie: bool) -> u64 {
        self.counts[cell_index(g, s, it, ie)]
    }

    /// Sum of the cells whose index satisfies `pred`.
    pub fn count_where(&self, pred: impl Fn(usize) -> bool) -> u64 {
        (0..16).filter(|&i| pred(i)).map(|i| self.counts[i]).sum()
    }

    fn ok(i: usize, m: Module) -> bool {
        i >> m.bit() & 1 == 1
    }

    pub fn sum(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// The denominator for overall rates: the declared total if any.
    pub fn total(&self) -> u64 {
        self.declared_total.unwrap_or_else(|| self.sum())
    }

    /// Cell sum minus declared total.
    pub fn discrepancy(&self) -> i64 {
        self.sum() as i64 - self.total() as i64
    }

    pub fn marginal(&self, m: Module) -> Rate {
        Rate::new(self.count_where(|i| Self::ok(i, m)), self.total())
    }

    /// Generator success against one implementor outcome.
    pub fn collapse(&self, outcome: Module) -> TwoByTwo {
        let g = Module::Generator;
        TwoByTwo {
            a: self.count_where(|i| Self::ok(i, g) && Self::ok(i, outcome)),
            b: self.count_where(|i| Self::ok(i, g) && !Self::ok(i, outcome)),
            c: self.count_where(|i| !Self::ok(i, g) && Self::ok(i, outcome)),
            d: self.count_where(|i| !Self::ok(i, g) && !Self::ok(i, outcome)),
        }
    }

    pub fn structural_zero(&self) -> StructuralZero {
        let n = self.count_where(|i| !Self::ok(i, Module::Generator) && Self::ok(i, Module::Summarizer));
        StructuralZero {
            summarizer_without_generator: n,
            holds: n == 0,
        }
    }

    pub fn derived_rates(&self) -> DerivedRates {
        use Module::*;
        let total = self.total();
        let g_ok_s_fail = self.count_where(|i| Self::ok(i, Generator) && !Self::ok(i, Summarizer));
        let both_ok = self.count_where(|i| Self::ok(i, Generator) && Self::ok(i, Summarizer));
        let double_fail = self.count_where(|i| !Self::ok(i, Generator) && !Self::ok(i, Summarizer));
        let rescued =
            self.count_where(|i| !Self::ok(i, Generator) && !Self::ok(i, Summarizer) && Self::ok(i, ImplementorTest));
        let g_ok = self.count_where(|i| Self::ok(i, Generator));
        DerivedRates {
            total,
            cell_sum: self.sum(),
            count_discrepancy: self.discrepancy(),
            overall_test_rate: self.marginal(ImplementorTest),
            test_failure_rate: Rate::new(self.count_where(|i| !Self::ok(i, ImplementorTest)), total),
            generator: self.marginal(Generator),
            summarizer: self.marginal(Summarizer),
            implementor_train: self.marginal(ImplementorTrain),
            implementor_test: self.marginal(ImplementorTest),
            test_given_generator_ok_summarizer_fail: Rate::new(
                self.count_where(|i| Self::ok(i, Generator) && !Self::ok(i, Summarizer) && Self::ok(i, ImplementorTest)),
                g_ok_s_fail,
            ),
            test_given_both_ok: Rate::new(
                self.count_where(|i| Self::ok(i, Generator) && Self::ok(i, Summarizer) && Self::ok(i, ImplementorTest)),
                both_ok,
            ),
            double_failures: double_fail,
            rescue_of_total: Rate::new(rescued, total),
            rescue_of_double_failures: Rate::new(rescued, double_fail),
            retention: Rate::new(both_ok, g_ok),
            retention_loss_of_total: Rate::new(g_ok_s_fail, total),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivedRates {
    pub total: u64,
    pub cell_sum: u64,
    pub count_discrepancy: i64,
    pub overall_test_rate: Rate,
    pub test_failure_rate: Rate,
    pub generator: Rate,
    pub summarizer: Rate,
    pub implementor_train: Rate,
    pub implementor_test: Rate,
    pub test_given_generator_ok_summarizer_fail: Rate,
    pub test_given_both_ok: Rate,
    pub double_failures: u64,
    /// Double failures whose held-out example was still solved.
    pub rescue_of_total: Rate,
    pub rescue_of_double_failures: Rate,
    /// Share of generator successes that survive summarization.
    pub retention: Rate,
    /// Generator successes lost in summarization, as a share of all trials.
    pub retention_loss_of_total: Rate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModuleAccuracy {
    pub module: Module,
    pub pooled: Rate,
    /// Mean and population std over tasks of per-task success rates.
    pub per_task_mean: Option<f64>,
    pub per_task_std: Option<f64>,
}

pub fn module_accuracy(verdicts: &[ModuleVerdicts]) -> Vec<ModuleAccuracy> {
    Module::ALL
        .iter()
        .map(|&m| {
            let per_task: Vec<f64> = per_task_means(verdicts, m).into_values().collect();
            let (mean, std) = mean_and_std(&per_task);
            ModuleAccuracy {
                module: m,
                pooled: Rate::new(
                    verdicts.iter().filter(|v| v.get(m)).count() as u64,
                    verdicts.len() as u64,
                ),
                per_task_mean: (!per_task.is_empty()).then_some(mean),
                per_task_std: (!per_task.is_empty()).then_some(std),
            }
        })
        .collect()
}

fn per_task_means(verdicts: &[ModuleVerdicts], m: Module) -> BTreeMap<&str, f64> {
    let mut acc: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for v in verdicts {
        let e = acc.entry(&v.task_id).or_default();
        e.0 += usize::from(v.get(m));
        e.1 += 1;
    }
    acc.into_iter().map(|(k, (s, n))| (k, s as f64 / n as f64)).collect()
}

/// Generator success against implementor success, per trial and per task.
/// `None` marks a series without variance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub trial_train: Option<f64>,
    pub trial_test: Option<f64>,
    pub task_train: Option<f64>,
    pub task_test: Option<f64>,
}

pub fn correlations(verdicts: &[ModuleVerdicts]) -> CorrelationReport {
    let bits = |m: Module| -> Vec<f64> { verdicts.iter().map(|v| f64::from(u8::from(v.get(m)))).collect() };
    let means = |m: Module| -> Vec<f64> { per_task_means(verdicts, m).into_values().collect() };
    let g = bits(Module::Generator);
    let gt = means(Module::Generator);
    CorrelationReport {
        trial_train: pearson(&g, &bits(Module::ImplementorTrain)),
        trial_test: pearson(&g, &bits(Module::ImplementorTest)),
        task_train: pearson(&gt, &means(Module::ImplementorTrain)),
        task_test: pearson(&gt, &means(Module::ImplementorTest)),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostSplit {
    TrainOutcome,
    TestOutcome,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostGroup {
    pub trials: usize,
    pub mean_versions: Option<f64>,
    /// `mean_versions` as a share of the per-trial version budget.
    pub budget_fraction: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostSummary {
    pub split_by: CostSplit,
    pub successful: CostGroup,
    pub failed: CostGroup,
}

/// Mean program versions per trial, split by trial success. Aborted trials
/// and trials before `min_trial` are left out.
pub fn refinement_costs(logs: &[RunLog], split_by: CostSplit, min_trial: usize) -> CostSummary {
    let mut groups = [(0usize, 0u64); 2];
    for o in logs.iter().flat_map(|l| &l.outcomes) {
        if o.is_aborted() || o.trial_index < min_trial {
            continue;
        }
        let ok = match split_by {
            CostSplit::TrainOutcome => o.train_solved,
            CostSplit::TestOutcome => o.test_solved_any,
        };
        let g = &mut groups[usize::from(ok)];
        g.0 += 1;
        g.1 += u64::from(o.ledger.program_versions);
    }
    let group = |(n, sum): (usize, u64)| {
        let mean = (n > 0).then(|| sum as f64 / n as f64);
        CostGroup {
            trials: n,
            mean_versions: mean,
            budget_fraction: mean.map(|m| m / f64::from(VERSION_BUDGET)),
        }
    };
    CostSummary {
        split_by,
        successful: group(groups[1]),
        failed: group(groups[0]),
    }
}

/// The published table: 16 counts, a declared total and the values the
/// text reports alongside it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table2Fixture {
    pub source: String,
    pub declared_total: u64,
    pub cells: Vec<FixtureCell>,
    pub reported: Reported,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixtureCell {
    pub generator: bool,
    pub summarizer: bool,
    pub implementor_train: bool,
    pub implementor_test: bool,
    pub count: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reported {
    pub module_accuracy: BTreeMap<String, f64>,
    pub module_std: BTreeMap<String, f64>,
    pub overall_test_rate: f64,
    pub test_failure_rate: f64,
    pub retention: f64,
    pub odds_ratio_train: f64,
    pub odds_ratio_test: f64,
    pub correlation_trial_train: f64,
    pub correlation_trial_test: f64,
    pub correlation_task_train: f64,
    pub correlation_task_test: f64,
}

impl Table2Fixture {
    pub fn bundled() -> Table2Fixture {
        serde_json::from_str(include_str!("../../data/table2.json")).expect("bundled fixture parses")
    }

    pub fn table(&self) -> Result<ContingencyTable, AnalysisError> {
        let mut counts = [0u64; 16];
        let mut seen = [false; 16];
        for c in &self.cells {
            let i = cell_index(c.generator, c.summarizer, c.implementor_train, c.implementor_test);
            if seen[i] {
                return Err(AnalysisError::Fixture(format!("cell {} listed twice", i + 1)));
            }
            seen[i] = true;
            counts[i] = c.count;
        }
        if seen.iter().any(|s| !s) {
            return Err(AnalysisError::Fixture("fewer than 16 cells".into()));
        }
        Ok(ContingencyTable {
            counts,
            declared_total: Some(self.declared_total),
        })
    }
}

/// A computed quantity next to its published value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub quantity: String,
    pub computed: f64,
    pub reported: f64,
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub source: String,
    pub table: ContingencyTable,
    pub derived: DerivedRates,
    pub odds_ratio_train: OddsRatio,
    pub odds_ratio_test: OddsRatio,
    /// Exponentiated slope of an iterative logistic fit, as a cross-check.
    pub logistic_odds_ratio_train: Option<f64>,
    pub logistic_odds_ratio_test: Option<f64>,
    pub structural_zero: StructuralZero,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub module_accuracy: Option<Vec<ModuleAccuracy>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlations: Option<CorrelationReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub refinement_costs: Vec<CostSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub excluded: Vec<ExcludedTrial>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub comparisons: Vec<Comparison>,
    pub notes: Vec<String>,
}

fn table_report(source: &str, table: ContingencyTable) -> AnalysisReport {
    let derived = table.derived_rates();
    let train = table.collapse(Module::ImplementorTrain);
    let test = table.collapse(Module::ImplementorTest);
    let structural_zero = table.structural_zero();
    let mut notes = Vec::new();
    if table.discrepancy() != 0 {
        notes.push(format!(
            "cell counts sum to {} but the declared total is {}; overall rates use the declared total",
            table.sum(),
            table.total()
        ));
    }
    if structural_zero.holds && table.count_where(|i| i >> 3 & 1 == 0) > 0 {
        notes.push("no trial has a successful summarizer without a successful generator".into());
    }
    AnalysisReport {
        source: source.to_string(),
        derived,
        odds_ratio_train: train.odds_ratio(),
        odds_ratio_test: test.odds_ratio(),
        logistic_odds_ratio_train: train.logistic_fit().map(|(_, b)| b.exp()),
        logistic_odds_ratio_test: test.logistic_fit().map(|(_, b)| b.exp()),
        structural_zero,
        table,
        module_accuracy: None,
        correlations: None,
        refinement_costs: Vec::new(),
        excluded: Vec::new(),
        comparisons: Vec::new(),
        notes,
    }
}

pub fn analyze_fixture(fixture: &Table2Fixture) -> Result<AnalysisReport, AnalysisError> {
    let mut report = table_report("fixture:table2", fixture.table()?);
    let d = &report.derived;
    let r = &fixture.reported;
    let acc = |k: &str| r.module_accuracy.get(k).copied().unwrap_or(f64::NAN);
    let rows = [
        ("generator accuracy", d.generator.value, acc("generator")),
        ("summarizer accuracy", d.summarizer.value, acc("summarizer")),
        ("implementor train accuracy", d.implementor_train.value, acc("implementor_train")),
        ("implementor test accuracy", d.implementor_test.value, acc("implementor_test")),
        ("overall test rate", d.overall_test_rate.value, r.overall_test_rate),
        ("test failure rate", d.test_failure_rate.value, r.test_failure_rate),
        ("retention", d.retention.value, r.retention),
        ("odds ratio (train)", report.odds_ratio_train.value, r.odds_ratio_train),
        ("odds ratio (test)", report.odds_ratio_test.value, r.odds_ratio_test),
    ];
    report.comparisons = rows
        .iter()
        .map(|&(q, computed, reported)| Comparison {
            quantity: q.into(),
            computed,
            reported,
            gap: computed - reported,
        })
        .collect();
    report.notes.push(format!(
        "test odds ratio from the table is {:.2}; the published figure is about {}",
        report.odds_ratio_test.value, r.odds_ratio_test
    ));
    report.notes.push(
        "published module accuracies may average per run or per task while the table pools all trials".into(),
    );
    Ok(report)
}

pub fn analyze_logs(logs: &[RunLog], verdicts: &VerdictSet) -> Result<AnalysisReport, AnalysisError> {
    if verdicts.verdicts.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let mut report = table_report("runlogs", ContingencyTable::from_verdicts(&verdicts.verdicts));
    report.module_accuracy = Some(module_accuracy(&verdicts.verdicts));
    report.correlations = Some(correlations(&verdicts.verdicts));
    report.refinement_costs = vec![
        refinement_costs(logs, CostSplit::TrainOutcome, 1),
        refinement_costs(logs, CostSplit::TestOutcome, 1),
    ];
    report.excluded = verdicts.excluded.clone();
    let unparseable: usize = verdicts.verdicts.iter().map(|v| v.unparseable).sum();
    if unparseable > 0 {
        report
            .notes
            .push(format!("{unparseable} evaluator answers had no verdict token and were scored incorrect"));
    }
    if !verdicts.excluded.is_empty() {
        report.notes.push(format!(
            "{} trials excluded from all denominators",
            verdicts.excluded.len()
        ));
    }
    Ok(report)
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> AnalysisError + '_ {
    move |source| AnalysisError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn outcome_word(ok: bool) -> &'static str {
    if ok {
        "Success"
    } else {
        "Failure"
    }
}

impl AnalysisReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Writes the JSON report and both CSV tables into `dir`.
    pub fn export(&self, dir: impl AsRef<Path>) -> Result<(), AnalysisError> {
        let dir = dir.as_ref();
        let path = dir.join(REPORT_JSON);
        std::fs::write(&path, self.to_json()).map_err(io(&path))?;

        let path = dir.join(ERROR_BREAKDOWN_CSV);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record([
            "index",
            "generator",
            "summarizer",
            "implementor_train",
            "implementor_test",
            "count",
            "proportion_pct",
        ])?;
        let total = self.table.total();
        for (i, &n) in self.table.counts.iter().enumerate() {
            let bit = |b: usize| outcome_word(i >> b & 1 == 1);
            w.write_record([
                (i + 1).to_string(),
                bit(3).into(),
                bit(2).into(),
                bit(1).into(),
                bit(0).into(),
                n.to_string(),
                format!("{:.1}", 100.0 * n as f64 / total as f64),
            ])?;
        }
        w.write_record(["total", "", "", "", "", &total.to_string(), "100.0"])?;
        w.flush().map_err(io(&path))?;

        let path = dir.join(MODULE_ACCURACY_CSV);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["module", "mean_accuracy", "std", "pooled_accuracy", "denominator"])?;
        let pooled = |m: Module| match m {
            Module::Generator => self.derived.generator,
            Module::Summarizer => self.derived.summarizer,
            Module::ImplementorTrain => self.derived.implementor_train,
            Module::ImplementorTest => self.derived.implementor_test,
        };
        for m in Module::ALL {
            let per_task = self
                .module_accuracy
                .as_ref()
                .and_then(|all| all.iter().find(|a| a.module == m));
            let fmt = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_default();
            let rate = pooled(m);
            w.write_record([
                m.label().to_string(),
                fmt(per_task.and_then(|a| a.per_task_mean)),
                fmt(per_task.and_then(|a| a.per_task_std)),
                format!("{:.4}", rate.value),
                rate.denominator.to_string(),
            ])?;
        }
        w.flush().map_err(io(&path))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(g: bool, s: bool, it: bool, ie: bool) -> ModuleVerdicts {
        ModuleVerdicts {
            run_id: 1,
            task_id: "t".into(),
            trial_index: 2,
            generator_ok: g,
            summarizer_ok: s,
            implementor_train_ok: it,
            implementor_test_ok: ie,
            generator_correct_count: usize::from(g),
            summarizer_correct_count: usize::from(s),
            retained_correct: g && s,
            unparseable: 0,
        }
    }

    #[test]
    fn hand_counted_table() {
        let verdicts = [
            v(true, true, true, true),
            v(true, true, true, true),
            v(false, false, false, true),
            v(true, false, true, false),
        ];
        let t = ContingencyTable::from_verdicts(&verdicts);
        assert_eq!(t.counts[15], 2);
        assert_eq!(t.counts[1], 1);
        assert_eq!(t.counts[0b1010], 1);
        assert_eq!(t.sum(), 4);
        assert_eq!(t.total(), 4);
        assert!(t.structural_zero().holds);
        assert_eq!(retention_rate(&verdicts), Some(2.0 / 3.0));
    }

    #[test]
    fn retention_extremes() {
        assert_eq!(retention_rate(&[v(true, true, false, false)]), Some(1.0));
        assert_eq!(retention_rate(&[v(true, false, false, false)]), Some(0.0));
        assert_eq!(retention_rate(&[v(false, false, false, false)]), None);
        let mut fixture: Vec<_> = (0..74).map(|_| v(true, true, false, false)).collect();
        fixture.extend((0..26).map(|_| v(true, false, false, false)));
        assert_eq!(retention_rate(&fixture), Some(0.74));
    }

    #[test]
    fn fixture_cells_land_in_row_order() {
        let t = Table2Fixture::bundled().table().unwrap();
        assert_eq!(
            t.counts,
            [1116, 793, 740, 299, 0, 0, 0, 0, 115, 52, 49, 449, 42, 14, 36, 1804]
        );
    }
}
