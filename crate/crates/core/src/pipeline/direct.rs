use std::time::Instant;

use super::*;
use crate::corpus::TrialSpec;
use crate::providers::{PromptContext, RequestMeta, Stage};

impl Pipeline<'_> {
    /// One program from the examples alone, scored without refinement.
    pub fn run_trial_direct(&self, trial: &TrialSpec, run_id: u32) -> TrialOutcome {
        let started = Instant::now();
        let mut outcome = TrialOutcome::empty(trial, run_id, Mode::Direct, self.config.budget_accounting);
        let result = self.direct(trial, run_id, &mut outcome);
        self.finish(outcome, result, started)
    }

    fn direct(&self, trial: &TrialSpec, run_id: u32, outcome: &mut TrialOutcome) -> Result<(), PipelineError> {
        let guide = self.language_guide();
        let meta = RequestMeta {
            task_id: trial.task_id.clone(),
            run: run_id,
            trial: trial.trial_index,
            ..Default::default()
        };
        let response = self
            .call(
                Stage::Direct,
                PromptContext::Direct {
                    examples: &trial.training,
                    language_guide: &guide,
                },
                1,
                meta,
            )?
            .remove(0);
        outcome.ledger.direct_calls += 1;
        let text = extract_program(&response, self.executor.config().backend);

        if trial.training.is_empty() {
            outcome.degradations.push(Degradation::NoTrainingData);
            // the program is still the answer; it just cannot be checked
            let prediction = self.executor.predict(&text, &trial.test.input)?;
            let (prediction, error) = match prediction {
                Ok(p) => (Some(p), None),
                Err(e) => (None, Some(e)),
            };
            let test_correct = prediction.as_ref() == Some(&trial.test.output);
            outcome.selected.push(SelectedProgram {
                text,
                hypothesis_slot: None,
                candidate_index: Some(1),
                prediction,
                error,
                test_correct,
            });
            outcome.test_correct_count = usize::from(test_correct);
            outcome.test_accuracy = outcome.test_correct_count as f64;
            outcome.test_solved_any = test_correct;
            return Ok(());
        }

        let report = self.run_version(&text, trial)?;
        let mut candidate = CandidateProgram {
            hypothesis_slot: None,
            candidate_index: 1,
            versions: vec![ProgramVersion { round: 0, text, report }],
            final_train_accuracy: 0.0,
        };
        candidate.refresh();
        outcome.candidates.push(candidate);
        self.select_and_test(outcome, trial)
    }
}
