//! Deciding whether a hypothesis states the ground-truth rule.

use std::collections::HashMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::pipeline::SENTINEL_HYPOTHESIS;
use crate::providers::{sample, PromptContext, PromptSet, Provider, RequestMeta, SamplingProfile, Stage};
use crate::text::normalize_rule;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Correct,
    Incorrect,
    /// The evaluator answered without a usable token; scored incorrect.
    Unparseable,
    /// The evaluator could not be reached; excluded from denominators.
    Missing { error: String },
}

impl Verdict {
    pub fn is_correct(&self) -> bool {
        matches!(self, Verdict::Correct)
    }
}

pub trait Judge: Send + Sync {
    fn judge(&self, task_id: &str, hypothesis: &str, ground_truth: &str) -> Verdict;
}

/// Normalized string equality.
pub struct ExactJudge;

impl Judge for ExactJudge {
    fn judge(&self, _task_id: &str, hypothesis: &str, ground_truth: &str) -> Verdict {
        if normalize_rule(hypothesis) == normalize_rule(ground_truth) {
            Verdict::Correct
        } else {
            Verdict::Incorrect
        }
    }
}

/// Reads CORRECT or INCORRECT from an evaluator response.
pub fn parse_verdict(response: &str) -> Verdict {
    let upper = response.to_uppercase();
    let words: Vec<&str> = upper.split(|c: char| !c.is_ascii_alphabetic()).collect();
    if words.contains(&"INCORRECT") {
        Verdict::Incorrect
    } else if words.contains(&"CORRECT") {
        Verdict::Correct
    } else {
        Verdict::Unparseable
    }
}

/// A model-based evaluator, with an optional exact-match fast path.
/// Answers are memoized per (task, hypothesis, ground truth).
pub struct LlmJudge<'a> {
    pub provider: &'a dyn Provider,
    pub prompts: &'a PromptSet,
    pub model_name: String,
    pub sampling: SamplingProfile,
    pub exact_shortcut: bool,
    memo: Mutex<HashMap<(String, String, String), Verdict>>,
}

impl<'a> LlmJudge<'a> {
    pub fn new(provider: &'a dyn Provider, prompts: &'a PromptSet, model_name: impl Into<String>) -> Self {
        LlmJudge {
            provider,
            prompts,
            model_name: model_name.into(),
            sampling: SamplingProfile::default(),
            exact_shortcut: true,
            memo: Mutex::default(),
        }
    }

    fn ask(&self, task_id: &str, hypothesis: &str, ground_truth: &str) -> Verdict {
        let messages = match self.prompts.render(&PromptContext::Evaluator {
            hypothesis,
            ground_truth,
        }) {
            Ok(m) => m,
            Err(e) => return Verdict::Missing { error: e.to_string() },
        };
        let meta = RequestMeta {
            task_id: task_id.to_string(),
            subject: vec![hypothesis.to_string(), ground_truth.to_string()],
            ..Default::default()
        };
        let req = self.sampling.request(Stage::Evaluator, &self.model_name, messages, 1, meta);
        match sample(self.provider, &req) {
            Ok(texts) => parse_verdict(&texts[0]),
            Err(e) => Verdict::Missing { error: e.to_string() },
        }
    }
}

impl Judge for LlmJudge<'_> {
    fn judge(&self, task_id: &str, hypothesis: &str, ground_truth: &str) -> Verdict {
        if self.exact_shortcut && normalize_rule(hypothesis) == normalize_rule(ground_truth) {
            return Verdict::Correct;
        }
        let key = (task_id.to_string(), hypothesis.to_string(), ground_truth.to_string());
        if let Some(v) = self.memo.lock().expect("judge memo").get(&key) {
            return v.clone();
        }
        let verdict = self.ask(task_id, hypothesis, ground_truth);
        if !matches!(verdict, Verdict::Missing { .. }) {
            self.memo.lock().expect("judge memo").insert(key, verdict.clone());
        }
        verdict
    }
}

/// Judges one hypothesis; blank hypotheses and the sentinel are incorrect
/// without consulting the judge.
pub fn judge_hypothesis(judge: &dyn Judge, task_id: &str, hypothesis: &str, ground_truth: &str) -> Verdict {
    if hypothesis.trim().is_empty() || hypothesis.trim() == SENTINEL_HYPOTHESIS {
        return Verdict::Incorrect;
    }
    judge.judge(task_id, hypothesis, ground_truth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::ScriptedProvider;

    #[test]
    fn verdict_tokens() {
        assert_eq!(parse_verdict("CORRECT"), Verdict::Correct);
        assert_eq!(parse_verdict("The answer is: incorrect."), Verdict::Incorrect);
        assert_eq!(parse_verdict("Correct!"), Verdict::Correct);
        assert_eq!(parse_verdict("maybe"), Verdict::Unparseable);
    }

    #[test]
    fn exact_shortcut_skips_the_call() {
        let provider = ScriptedProvider::constant("INCORRECT");
        let prompts = PromptSet::default();
        let judge = LlmJudge::new(&provider, &prompts, "m");
        assert_eq!(judge.judge("t", "Reverse the list.", "reverse the list"), Verdict::Correct);
        assert_eq!(provider.calls(), 0);
        assert_eq!(judge.judge("t", "sort it", "reverse the list"), Verdict::Incorrect);
        assert_eq!(judge.judge("t", "sort it", "reverse the list"), Verdict::Incorrect);
        assert_eq!(provider.calls(), 1);
    }

    #[test]
    fn sentinel_is_incorrect_without_a_call() {
        let provider = ScriptedProvider::constant("CORRECT");
        let prompts = PromptSet::default();
        let judge = LlmJudge::new(&provider, &prompts, "m");
        assert_eq!(judge_hypothesis(&judge, "t", SENTINEL_HYPOTHESIS, "x"), Verdict::Incorrect);
        assert_eq!(judge_hypothesis(&judge, "t", "  ", "x"), Verdict::Incorrect);
        assert_eq!(provider.calls(), 0);
    }

    #[test]
    fn provider_failure_is_missing() {
        let provider = ScriptedProvider::new(|_| Err(crate::providers::ProviderError::BadResponse("x".into())));
        let prompts = PromptSet::default();
        let judge = LlmJudge::new(&provider, &prompts, "m");
        assert!(matches!(judge.judge("t", "a", "b"), Verdict::Missing { .. }));
    }
}
