use std::collections::BTreeMap;
use std::sync::Arc;

use indukt::corpus::Corpus;
use indukt::executor::Executor;
use indukt::harness::*;
use indukt::pipeline::*;
use indukt::providers::*;
use proptest::prelude::*;

fn config(corpus: &Corpus, mode: Mode, n_runs: u32) -> ExperimentConfig {
    ExperimentConfig {
        mode,
        pipeline: PipelineConfig::default(),
        executor: ExecutorSnapshot::of(&Executor::builtin()),
        master_seed: 42,
        n_runs,
        corpus_digest: corpus.digest(),
        simulation: serde_json::Value::Null,
    }
}

fn experiment(corpus: &Corpus, provider: &dyn Provider, config: &ExperimentConfig) -> ExperimentResult {
    let executor = Executor::builtin();
    let prompts = PromptSet::default();
    Experiment {
        corpus,
        provider,
        executor: &executor,
        prompts: &prompts,
        config,
        concurrency: 4,
    }
    .run()
    .unwrap()
}

fn synthetic(corpus: &Corpus, sc: SyntheticConfig, n_runs: u32) -> PerRun<SyntheticProvider> {
    PerRun::new(42, n_runs, |_, seed| SyntheticProvider::new(corpus, SyntheticConfig { seed, ..sc }))
}

#[test]
fn perfect_providers_acquire_everything_after_trial_one() {
    let corpus = Corpus::mini();
    let cfg = config(&corpus, Mode::HypothesisSearch, 2);
    let provider = synthetic(&corpus, SyntheticConfig::perfect(0), 2);
    let result = experiment(&corpus, &provider, &cfg);
    assert!(result.failures.is_empty());
    assert_eq!(result.logs.len(), 2);
    for (i, log) in result.logs.iter().enumerate() {
        assert_eq!(log.header.run_id, i as u32 + 1);
        assert_eq!(log.outcomes.len(), 110);
        assert!(log.outcomes.iter().all(|o| o.run_id == log.header.run_id));
    }
    assert_ne!(result.logs[0].header.run_seed, result.logs[1].header.run_seed);
    let curve = acquisition_curve(&result.logs, AcquisitionDefinition::Cumulative).unwrap();
    assert!(curve[1..].iter().all(|&c| c == 10.0), "{curve:?}");
    assert_eq!(mean_test_accuracy(&result.logs, 2).unwrap(), (1.0, 0.0));
}

/// Brute-force metrics straight from outcome records.
fn brute_force(logs: &[RunLog]) -> (Vec<f64>, f64) {
    let mut curve = vec![0.0; 11];
    for log in logs {
        let ids: Vec<&str> = {
            let mut v: Vec<&str> = log.outcomes.iter().map(|o| o.task_id.as_str()).collect();
            v.dedup();
            v
        };
        for t in 1..=11 {
            let acquired = ids
                .iter()
                .filter(|id| {
                    log.outcomes
                        .iter()
                        .any(|o| o.task_id == **id && o.trial_index <= t && o.test_solved_any && !o.is_aborted())
                })
                .count();
            curve[t - 1] += acquired as f64;
        }
    }
    for c in &mut curve {
        *c /= logs.len() as f64;
    }
    let mut by_task: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for log in logs {
        for o in &log.outcomes {
            by_task.entry(&o.task_id).or_default().push(o.test_accuracy);
        }
    }
    let means: Vec<f64> = by_task
        .values()
        .map(|v| v.iter().fold(0.0, |a, b| a + b) / v.len() as f64)
        .collect();
    (curve, means.iter().fold(0.0, |a, b| a + b) / means.len() as f64)
}

#[test]
fn recorded_experiment_replays_byte_identically() {
    let corpus = Corpus::mini();
    let sc = SyntheticConfig {
        p_gen: 0.3,
        p_retain: 0.7,
        p_impl: 0.4,
        p_rescue: Some(0.1),
        ..Default::default()
    };
    let mut cfg = config(&corpus, Mode::HypothesisSearch, 2);
    cfg.simulation = serde_json::to_value(sc).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let transcript = dir.path().join("transcript.ndjson");
    let recorded = {
        let recorder = RecordingProvider::to_file(synthetic(&corpus, sc, 2), &transcript).unwrap();
        let r = experiment(&corpus, &recorder, &cfg);
        recorder.flush().unwrap();
        r
    };
    let replay = Arc::new(ReplayProvider::from_file(&transcript).unwrap());
    let replayed = experiment(&corpus, &replay, &cfg);
    assert!(replay.misses().is_empty());
    for (a, b) in recorded.logs.iter().zip(&replayed.logs) {
        assert_eq!(a.to_ndjson(), b.to_ndjson());
    }
    let (curve, mean) = brute_force(&recorded.logs);
    assert_eq!(acquisition_curve(&recorded.logs, AcquisitionDefinition::Cumulative).unwrap(), curve);
    assert_eq!(mean_test_accuracy(&recorded.logs, 1).unwrap().0, mean);

    // logs survive a trip through disk unchanged
    let path = dir.path().join(RunLog::file_name(1));
    recorded.logs[0].write(&path).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap(), recorded.logs[0].to_ndjson());
    assert_eq!(RunLog::read(&path).unwrap(), recorded.logs[0]);
}

#[test]
fn concurrency_does_not_change_logs() {
    let corpus = Corpus::mini();
    let cfg = config(&corpus, Mode::Direct, 1);
    let sc = SyntheticConfig {
        p_impl: 0.5,
        ..Default::default()
    };
    let provider = synthetic(&corpus, sc, 1);
    let executor = Executor::builtin();
    let prompts = PromptSet::default();
    let run = |concurrency| {
        Experiment {
            corpus: &corpus,
            provider: &provider,
            executor: &executor,
            prompts: &prompts,
            config: &cfg,
            concurrency,
        }
        .run()
        .unwrap()
        .logs[0]
            .to_ndjson()
    };
    assert_eq!(run(1), run(8));
}

#[test]
fn infrastructure_failures_are_flagged_and_fail_the_run() {
    let corpus = Corpus::mini();
    let cfg = config(&corpus, Mode::HypothesisSearch, 1);
    let provider = ScriptedProvider::new(|_| {
        Err(ProviderError::Transport {
            attempts: 5,
            message: "connection refused".into(),
        })
    });
    let result = experiment(&corpus, &provider, &cfg);
    assert_eq!(result.logs[0].outcomes.len(), 110);
    assert!(result.logs[0].outcomes.iter().all(|o| o.is_aborted()));
    assert!(matches!(
        result.failures[..],
        [HarnessError::TooManyFailures {
            run_id: 1,
            flagged: 110,
            total: 110
        }]
    ));
    let curve = acquisition_curve(&result.logs, AcquisitionDefinition::Cumulative).unwrap();
    assert!(curve.iter().all(|&c| c == 0.0));
}

fn fake_log(corpus_digest: &str, rows: &[(&str, usize, f64, bool)]) -> RunLog {
    let corpus = Corpus::mini();
    let mut cfg = config(&corpus, Mode::HypothesisSearch, 1);
    cfg.corpus_digest = corpus_digest.into();
    let outcomes = rows
        .iter()
        .map(|&(task, trial, acc, solved)| TrialOutcome {
            task_id: task.into(),
            run_id: 1,
            trial_index: trial,
            mode: Mode::HypothesisSearch,
            generator_hypotheses: vec![],
            summaries: vec![],
            candidates: vec![],
            selected: vec![],
            best_train_accuracy: 0.0,
            train_solved: false,
            test_correct_count: 0,
            test_accuracy: acc,
            test_solved_any: solved,
            ledger: BudgetLedger::default(),
            degradations: vec![],
            infrastructure_failure: None,
        })
        .collect();
    RunLog {
        header: RunHeader {
            schema_version: SCHEMA_VERSION,
            run_id: 1,
            mode: Mode::HypothesisSearch,
            provider_fingerprint: provider_fingerprint(&cfg.pipeline),
            run_seed: 0,
            config: cfg,
        },
        outcomes,
    }
}

#[test]
fn acquisition_definitions() {
    let rows: Vec<_> = (1..=11).map(|t| ("x", t, 0.0, t == 3)).collect();
    let logs = [fake_log("d", &rows)];
    let cumulative = acquisition_curve(&logs, AcquisitionDefinition::Cumulative).unwrap();
    assert_eq!(cumulative, [0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
    let per_trial = acquisition_curve(&logs, AcquisitionDefinition::PerTrial).unwrap();
    assert_eq!(per_trial, [0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
}

#[test]
fn mean_accuracy_examples() {
    let all_one: Vec<_> = (1..=11).map(|t| ("a", t, 1.0, true)).collect();
    assert_eq!(mean_test_accuracy(&[fake_log("d", &all_one)], 1).unwrap(), (1.0, 0.0));

    let two = [("a", 1, 1.0, true), ("b", 1, 0.0, false)];
    assert_eq!(mean_test_accuracy(&[fake_log("d", &two)], 1).unwrap(), (0.5, 0.5));

    // per-task means 0.2, 0.4, 0.6, 0.8 from five trials each
    let mut rows = Vec::new();
    for (task, hits) in [("a", 1), ("b", 2), ("c", 3), ("d", 4)] {
        for t in 1..=5 {
            rows.push((task, t, if t <= hits { 1.0 } else { 0.0 }, t <= hits));
        }
    }
    let (mean, std) = mean_test_accuracy(&[fake_log("d", &rows)], 1).unwrap();
    assert!((mean - 0.5).abs() < 1e-12);
    assert!((std - 0.05f64.sqrt()).abs() < 1e-12, "{std}");
    assert!((std - 0.2236).abs() < 1e-4);
}

#[test]
fn mixed_logs_are_rejected() {
    let a = fake_log("one", &[("a", 1, 1.0, true)]);
    let b = fake_log("two", &[("a", 1, 1.0, true)]);
    assert!(matches!(
        acquisition_curve(&[a.clone(), b.clone()], AcquisitionDefinition::Cumulative),
        Err(HarnessError::Incompatible("corpus"))
    ));
    assert!(matches!(mean_test_accuracy(&[a, b], 1), Err(HarnessError::Incompatible("corpus"))));
    assert!(matches!(mean_test_accuracy(&[], 1), Err(HarnessError::Empty)));
}

#[test]
fn metrics_export_round_trips() {
    let rows: Vec<_> = (1..=11)
        .flat_map(|t| [("b", t, 1.0 / 3.0, t > 4), ("a", t, 0.1 * t as f64, t % 2 == 0)])
        .collect();
    let logs = [fake_log("d", &rows)];
    let report = MetricsReport::compute(&logs, AcquisitionDefinition::PerTrial, 2).unwrap();
    assert_eq!(MetricsReport::from_json(&report.to_json()).unwrap(), report);

    let dir = tempfile::tempdir().unwrap();
    report.export(dir.path()).unwrap();
    assert_eq!(MetricsReport::import_csv(dir.path()).unwrap(), report);
    let acquisition = std::fs::read_to_string(dir.path().join(ACQUISITION_CSV)).unwrap();
    let lines: Vec<_> = acquisition.lines().collect();
    assert_eq!(lines[0], "trial,mean_acquired");
    assert_eq!(lines.len(), 12);
    let per_task = std::fs::read_to_string(dir.path().join(PER_TASK_CSV)).unwrap();
    assert!(per_task.starts_with("task_id,mean_test_accuracy\na,"));

    let path = dir.path().join(COMPARISON_CSV);
    report.write_comparison("this run", &Literature::bundled(), &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.contains("Human,0.521,0.202,literature"));
    assert_eq!(text.lines().count(), 6);
}

proptest! {
    #[test]
    fn per_trial_is_bounded_by_monotone_cumulative(
        pattern in prop::collection::vec(prop::collection::vec(any::<bool>(), 11), 1..6),
        runs in 1usize..4,
    ) {
        let logs: Vec<RunLog> = (0..runs)
            .map(|r| {
                let ids: Vec<String> = (0..pattern.len()).map(|i| format!("t{i}")).collect();
                let rows: Vec<_> = pattern
                    .iter()
                    .enumerate()
                    .flat_map(|(i, row)| {
                        let id = ids[i].clone();
                        row.iter().enumerate().map(move |(t, &s)| (id.clone(), t + 1, s ^ (r % 2 == 1 && t % 3 == 0)))
                    })
                    .collect();
                let borrowed: Vec<_> = rows.iter().map(|(id, t, s)| (id.as_str(), *t, 0.0, *s)).collect();
                fake_log("d", &borrowed)
            })
            .collect();
        let cumulative = acquisition_curve(&logs, AcquisitionDefinition::Cumulative).unwrap();
        let per_trial = acquisition_curve(&logs, AcquisitionDefinition::PerTrial).unwrap();
        for t in 0..11 {
            prop_assert!(per_trial[t] <= cumulative[t]);
            if t > 0 {
                prop_assert!(cumulative[t] >= cumulative[t - 1]);
            }
        }
    }
}
