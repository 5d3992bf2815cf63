use std::time::Instant;

use super::*;
use crate::corpus::TrialSpec;
use crate::providers::{sample, PromptContext, RequestMeta, Stage};
use crate::text::normalize_rule;

impl Pipeline<'_> {
    fn meta(&self, trial: &TrialSpec, run_id: u32) -> RequestMeta {
        RequestMeta {
            task_id: trial.task_id.clone(),
            run: run_id,
            trial: trial.trial_index,
            ..Default::default()
        }
    }

    pub(super) fn call(
        &self,
        stage: Stage,
        ctx: PromptContext<'_>,
        n: usize,
        meta: RequestMeta,
    ) -> Result<Vec<String>, PipelineError> {
        let messages = self.prompts.render(&ctx)?;
        let req = self
            .config
            .sampling
            .request(stage, &self.config.model_name, messages, n, meta);
        Ok(sample(self.provider, &req)?)
    }

    /// Draws the generator hypotheses. Blank responses become a sentinel.
    pub fn generate_hypotheses(
        &self,
        trial: &TrialSpec,
        run_id: u32,
        outcome: &mut TrialOutcome,
    ) -> Result<Vec<Hypothesis>, PipelineError> {
        let texts = self.call(
            Stage::Generator,
            PromptContext::Generator {
                examples: &trial.training,
            },
            self.config.n_hypotheses,
            self.meta(trial, run_id),
        )?;
        outcome.ledger.generator_calls += texts.len() as u32;
        Ok(texts
            .into_iter()
            .enumerate()
            .map(|(index, text)| {
                let text = text.trim();
                let text = if text.is_empty() {
                    outcome.degradations.push(Degradation::EmptyHypothesis { index });
                    SENTINEL_HYPOTHESIS.to_string()
                } else {
                    text.to_string()
                };
                Hypothesis {
                    text,
                    source: HypothesisSource::Generator { index },
                    parent_indices: None,
                }
            })
            .collect())
    }

    /// Condenses the generator output into at most `n_summaries` rules.
    ///
    /// An unparseable response falls back to the most frequent distinct
    /// generator hypotheses.
    pub fn summarize(
        &self,
        trial: &TrialSpec,
        run_id: u32,
        hypotheses: &[Hypothesis],
        outcome: &mut TrialOutcome,
    ) -> Result<Vec<Hypothesis>, PipelineError> {
        let texts: Vec<String> = hypotheses.iter().map(|h| h.text.clone()).collect();
        let n = self.config.n_summaries;
        let meta = RequestMeta {
            subject: texts.clone(),
            ..self.meta(trial, run_id)
        };
        let response = self
            .call(
                Stage::Summarizer,
                PromptContext::Summarizer {
                    hypotheses: &texts,
                    n_summaries: n,
                },
                1,
                meta,
            )?
            .remove(0);
        outcome.ledger.summarizer_calls += 1;

        let mut items = parse_numbered(&response);
        items.truncate(n);
        if !items.is_empty() {
            if items.len() < n {
                outcome.degradations.push(Degradation::SummaryShortfall { parsed: items.len() });
            }
            return Ok(items
                .into_iter()
                .enumerate()
                .map(|(i, text)| Hypothesis {
                    text,
                    source: HypothesisSource::Summarizer { slot: i + 1 },
                    parent_indices: None,
                })
                .collect());
        }

        outcome.degradations.push(Degradation::SummaryFallback);
        // (representative text, generator indices) per distinct rule
        let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
        for (i, h) in hypotheses.iter().enumerate() {
            if h.text == SENTINEL_HYPOTHESIS {
                continue;
            }
            let key = normalize_rule(&h.text);
            match groups.iter_mut().find(|(t, _)| normalize_rule(t) == key) {
                Some((_, members)) => members.push(i),
                None => groups.push((h.text.clone(), vec![i])),
            }
        }
        // stable sort keeps first appearance as the tie-break
        groups.sort_by_key(|g| std::cmp::Reverse(g.1.len()));
        Ok(groups
            .into_iter()
            .take(n)
            .enumerate()
            .map(|(i, (text, members))| Hypothesis {
                text,
                source: HypothesisSource::Fallback { slot: i + 1 },
                parent_indices: Some(members),
            })
            .collect())
    }

    /// Implements one hypothesis: a batch of candidates, each refined in
    /// turn until one passes every training example. Returns whether one did.
    pub fn implement(
        &self,
        trial: &TrialSpec,
        run_id: u32,
        slot: usize,
        hypothesis: &str,
        outcome: &mut TrialOutcome,
    ) -> Result<bool, PipelineError> {
        let guide = self.language_guide();
        let backend = self.executor.config().backend;
        let base = RequestMeta {
            slot: Some(slot),
            subject: vec![hypothesis.to_string()],
            ..self.meta(trial, run_id)
        };
        let batch = self.call(
            Stage::Implementor,
            PromptContext::Implementor {
                hypothesis,
                examples: &trial.training,
                language_guide: &guide,
            },
            self.config.n_candidates,
            base.clone(),
        );
        let batch = match batch {
            Ok(batch) => batch,
            Err(PipelineError::Provider(e)) => {
                outcome.degradations.push(Degradation::ImplementorFailure {
                    slot,
                    candidate: None,
                    message: e.to_string(),
                });
                return Ok(false);
            }
            Err(e) => return Err(e),
        };
        outcome.ledger.implementor_batches += 1;

        for (c, response) in batch.iter().enumerate() {
            let candidate_index = c + 1;
            let text = extract_program(response, backend);
            let report = self.run_version(&text, trial)?;
            let mut candidate = CandidateProgram {
                hypothesis_slot: Some(slot),
                candidate_index,
                versions: vec![ProgramVersion { round: 0, text, report }],
                final_train_accuracy: 0.0,
            };
            for round in 1..=self.config.max_refinements {
                let last = candidate.versions.last().expect("at least one version");
                if last.report.all_passed {
                    break;
                }
                let error = last.report.error_summary();
                let response = self.call(
                    Stage::Refinement,
                    PromptContext::Refinement {
                        hypothesis,
                        examples: &trial.training,
                        program: &last.text,
                        error: &error,
                        language_guide: &guide,
                    },
                    1,
                    RequestMeta {
                        candidate: Some(candidate_index),
                        round: Some(round),
                        ..base.clone()
                    },
                );
                let response = match response {
                    Ok(mut r) => r.remove(0),
                    Err(PipelineError::Provider(e)) => {
                        // the candidate keeps the versions it already has
                        outcome.degradations.push(Degradation::ImplementorFailure {
                            slot,
                            candidate: Some(candidate_index),
                            message: e.to_string(),
                        });
                        break;
                    }
                    Err(e) => return Err(e),
                };
                outcome.ledger.refinement_calls += 1;
                let text = extract_program(&response, backend);
                let report = self.run_version(&text, trial)?;
                candidate.versions.push(ProgramVersion { round, text, report });
            }
            candidate.refresh();
            let passed = candidate.passed();
            outcome.candidates.push(candidate);
            if passed {
                return Ok(true);
            }
        }
        Ok(false)
    }

    pub fn run_trial_hypothesis_search(&self, trial: &TrialSpec, run_id: u32) -> TrialOutcome {
        let started = Instant::now();
        let mut outcome = TrialOutcome::empty(trial, run_id, Mode::HypothesisSearch, self.config.budget_accounting);
        let result = self.search(trial, run_id, &mut outcome);
        self.finish(outcome, result, started)
    }

    fn search(&self, trial: &TrialSpec, run_id: u32, outcome: &mut TrialOutcome) -> Result<(), PipelineError> {
        let generated = self.generate_hypotheses(trial, run_id, outcome)?;
        let summaries = self.summarize(trial, run_id, &generated, outcome)?;
        outcome.generator_hypotheses = generated;
        outcome.summaries = summaries;

        if trial.training.is_empty() {
            // nothing to check programs against
            outcome.degradations.push(Degradation::NoTrainingData);
        } else {
            let summaries = outcome.summaries.clone();
            let mut implemented: Vec<(String, usize)> = Vec::new();
            for (i, h) in summaries.iter().enumerate() {
                let slot = i + 1;
                let key = normalize_rule(&h.text);
                if let Some((_, same_as)) = implemented.iter().find(|(k, _)| *k == key) {
                    outcome.degradations.push(Degradation::DuplicateSummary {
                        slot,
                        same_as: *same_as,
                    });
                    continue;
                }
                implemented.push((key, slot));
                if self.implement(trial, run_id, slot, &h.text, outcome)? {
                    break;
                }
            }
        }
        self.select_and_test(outcome, trial)
    }
}
