//! A seeded stand-in for a language model.
//!
//! Knows each task's ground-truth description and reference program. The
//! generator emits the true rule with probability `p_gen` per sample, the
//! summarizer keeps the most frequent distinct hypotheses (dropping the true
//! rule with probability `1 - p_retain`), and implementor-style stages emit
//! the reference program with probability `p_impl` per candidate. Everything
//! else is drawn from fixed decoy pools. Randomness is keyed by the request
//! fingerprint, so answers do not depend on call order.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{CompletionRequest, Provider, ProviderError, Stage};
use crate::corpus::Corpus;
use crate::dsl;
use crate::text::normalize_rule;

pub const SUMMARY_COUNT: usize = 8;

const DECOY_HYPOTHESES: &[&str] = &[
    "Return the list unchanged.",
    "Sort the list in descending order.",
    "Remove the first element.",
    "Remove the last element.",
    "Double every element.",
    "Keep only the odd elements.",
    "Output the sum of the elements.",
    "Output the smallest element.",
    "Subtract 1 from every element.",
    "Keep the last two elements.",
    "Repeat the list twice.",
    "Remove every element equal to 0.",
    "Move the last element to the front.",
    "Output the first element.",
    "Keep the elements smaller than 5.",
    "Replace every 1 with 0.",
    "Insert 1 at the second position.",
    "Count how many times 3 appears.",
    "Drop the first two elements.",
    "Take every element modulo 3.",
];

const DECOY_PROGRAMS: &[&str] = &[
    "identity",
    "sort | reverse",
    "tail",
    "init",
    "mul 2",
    "filter_odd",
    "sum",
    "min",
    "sub 1",
    "reverse | take 2 | reverse",
    "concat_self",
    "remove 0",
    "rotate_right 1",
    "head",
    "filter_lt 5",
    "replace 1 0",
    "insert 2 1",
    "count 3",
    "drop 2",
    "mod 3",
];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub p_gen: f64,
    pub p_retain: f64,
    pub p_impl: f64,
    /// Probability of a correct program when the hypothesis is wrong;
    /// `None` means the same as `p_impl`.
    pub p_rescue: Option<f64>,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            seed: 0,
            p_gen: 1.0,
            p_retain: 1.0,
            p_impl: 1.0,
            p_rescue: None,
        }
    }
}

impl SyntheticConfig {
    pub fn perfect(seed: u64) -> Self {
        SyntheticConfig {
            seed,
            ..Default::default()
        }
    }
}

struct TaskTruth {
    description: String,
    reference: Option<String>,
    decoy_hypotheses: Vec<&'static str>,
    decoy_programs: Vec<&'static str>,
}

pub struct SyntheticProvider {
    config: SyntheticConfig,
    truths: HashMap<String, TaskTruth>,
}

fn fenced(program: &str) -> String {
    format!("```\n{program}\n```")
}

impl SyntheticProvider {
    pub fn new(corpus: &Corpus, config: SyntheticConfig) -> Self {
        let truths = corpus
            .tasks()
            .iter()
            .map(|t| {
                let truth_norm = normalize_rule(&t.description);
                let reference_canon = t.reference_program.as_deref().and_then(dsl::canonicalize);
                let decoy_hypotheses = DECOY_HYPOTHESES
                    .iter()
                    .copied()
                    .filter(|h| normalize_rule(h) != truth_norm)
                    .collect();
                let decoy_programs = DECOY_PROGRAMS
                    .iter()
                    .copied()
                    .filter(|p| dsl::canonicalize(p) != reference_canon)
                    .collect();
                (
                    t.id.clone(),
                    TaskTruth {
                        description: t.description.clone(),
                        reference: t.reference_program.clone(),
                        decoy_hypotheses,
                        decoy_programs,
                    },
                )
            })
            .collect();
        SyntheticProvider { config, truths }
    }

    pub fn config(&self) -> &SyntheticConfig {
        &self.config
    }

    fn rng_for(&self, req: &CompletionRequest) -> ChaCha8Rng {
        let mut hasher = Sha256::new();
        hasher.update(self.config.seed.to_le_bytes());
        hasher.update(req.fingerprint().as_bytes());
        ChaCha8Rng::from_seed(hasher.finalize().into())
    }

    fn program(&self, truth: &TaskTruth, p: f64, rng: &mut ChaCha8Rng) -> String {
        match &truth.reference {
            Some(reference) if rng.gen_bool(p.clamp(0.0, 1.0)) => fenced(reference),
            _ => fenced(truth.decoy_programs[rng.gen_range(0..truth.decoy_programs.len())]),
        }
    }

    fn summarize(&self, truth: &TaskTruth, hypotheses: &[String], rng: &mut ChaCha8Rng) -> String {
        let truth_norm = normalize_rule(&truth.description);
        // distinct hypotheses by frequency, ties broken by first appearance
        let mut counts: Vec<(String, usize, usize)> = Vec::new();
        for (i, h) in hypotheses.iter().enumerate() {
            let key = normalize_rule(h);
            if key.is_empty() || h.trim() == "(no hypothesis)" {
                continue;
            }
            match counts.iter_mut().find(|(k, _, _)| normalize_rule(k) == key) {
                Some(entry) => entry.1 += 1,
                None => counts.push((h.trim().to_string(), 1, i)),
            }
        }
        counts.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
        let keep_truth = rng.gen_bool(self.config.p_retain.clamp(0.0, 1.0));
        let mut distinct: Vec<String> = counts
            .into_iter()
            .map(|(h, _, _)| h)
            .filter(|h| keep_truth || normalize_rule(h) != truth_norm)
            .collect();
        if distinct.is_empty() {
            distinct = truth.decoy_hypotheses.iter().take(SUMMARY_COUNT).map(|s| s.to_string()).collect();
        }
        (0..SUMMARY_COUNT)
            .map(|i| format!("{}. {}", i + 1, distinct[i % distinct.len()]))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

impl Provider for SyntheticProvider {
    fn complete(&self, req: &CompletionRequest) -> Result<Vec<String>, ProviderError> {
        let task_id = &req.meta.task_id;
        let truth = self
            .truths
            .get(task_id)
            .ok_or_else(|| ProviderError::Unscripted(format!("unknown task {task_id}")))?;
        let stage = req
            .stage()
            .ok_or_else(|| ProviderError::Unscripted("request has no stage".into()))?;
        let mut rng = self.rng_for(req);
        let n = req.n_samples;
        let out = match stage {
            Stage::Generator => (0..n)
                .map(|_| {
                    if rng.gen_bool(self.config.p_gen.clamp(0.0, 1.0)) {
                        truth.description.clone()
                    } else {
                        truth.decoy_hypotheses[rng.gen_range(0..truth.decoy_hypotheses.len())].to_string()
                    }
                })
                .collect(),
            Stage::Summarizer => {
                let text = self.summarize(truth, &req.meta.subject, &mut rng);
                vec![text; n]
            }
            Stage::Implementor | Stage::Refinement => {
                let correct_hypothesis = req
                    .meta
                    .subject
                    .first()
                    .map(|h| normalize_rule(h) == normalize_rule(&truth.description))
                    .unwrap_or(false);
                let p = if correct_hypothesis {
                    self.config.p_impl
                } else {
                    self.config.p_rescue.unwrap_or(self.config.p_impl)
                };
                (0..n).map(|_| self.program(truth, p, &mut rng)).collect()
            }
            Stage::Direct => (0..n).map(|_| self.program(truth, self.config.p_impl, &mut rng)).collect(),
            Stage::Evaluator => {
                let verdict = match req.meta.subject.as_slice() {
                    [hypothesis, ground_truth, ..] if normalize_rule(hypothesis) == normalize_rule(ground_truth) => {
                        "CORRECT"
                    }
                    _ => "INCORRECT",
                };
                vec![verdict.to_string(); n]
            }
        };
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::{Message, RequestMeta, Role, SamplingProfile};

    fn req(stage: Stage, n: usize, subject: Vec<String>, trial: usize) -> CompletionRequest {
        SamplingProfile::default().request(
            stage,
            "synthetic",
            vec![Message::new(Role::User, "x")],
            n,
            RequestMeta {
                task_id: "m001".into(),
                run: 1,
                trial,
                subject,
                ..Default::default()
            },
        )
    }

    #[test]
    fn perfect_generator_repeats_the_rule() {
        let corpus = Corpus::mini();
        let provider = SyntheticProvider::new(&corpus, SyntheticConfig::perfect(1));
        let texts = provider.complete(&req(Stage::Generator, 64, vec![], 2)).unwrap();
        assert_eq!(texts.len(), 64);
        assert!(texts.iter().all(|t| t == &corpus.tasks()[0].description));
    }

    #[test]
    fn half_correct_mixture_is_reproducible() {
        let corpus = Corpus::mini();
        let config = SyntheticConfig {
            seed: 7,
            p_gen: 0.5,
            ..Default::default()
        };
        let a = SyntheticProvider::new(&corpus, config).complete(&req(Stage::Generator, 64, vec![], 4)).unwrap();
        let b = SyntheticProvider::new(&corpus, config).complete(&req(Stage::Generator, 64, vec![], 4)).unwrap();
        assert_eq!(a, b);
        let correct = a.iter().filter(|t| *t == &corpus.tasks()[0].description).count();
        assert!(correct > 16 && correct < 48, "{correct}");
        // a different call site draws a different mixture
        let c = SyntheticProvider::new(&corpus, config).complete(&req(Stage::Generator, 64, vec![], 5)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn summarizer_of_identical_rules_returns_that_rule() {
        let corpus = Corpus::mini();
        let provider = SyntheticProvider::new(&corpus, SyntheticConfig::perfect(1));
        let rule = corpus.tasks()[0].description.clone();
        let text = &provider.complete(&req(Stage::Summarizer, 1, vec![rule.clone(); 64], 2)).unwrap()[0];
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 8);
        for (i, line) in lines.iter().enumerate() {
            assert_eq!(*line, format!("{}. {rule}", i + 1));
        }
    }

    #[test]
    fn implementor_emits_reference_or_decoy() {
        let corpus = Corpus::mini();
        let rule = corpus.tasks()[0].description.clone();
        let perfect = SyntheticProvider::new(&corpus, SyntheticConfig::perfect(1));
        let texts = perfect.complete(&req(Stage::Implementor, 8, vec![rule.clone()], 2)).unwrap();
        assert!(texts.iter().all(|t| t == "```\nreverse\n```"));
        let hopeless = SyntheticProvider::new(
            &corpus,
            SyntheticConfig {
                p_impl: 0.0,
                ..SyntheticConfig::perfect(1)
            },
        );
        let texts = hopeless.complete(&req(Stage::Implementor, 8, vec![rule], 2)).unwrap();
        assert!(texts.iter().all(|t| t != "```\nreverse\n```"));
    }

    #[test]
    fn evaluator_compares_normalized_text() {
        let corpus = Corpus::mini();
        let provider = SyntheticProvider::new(&corpus, SyntheticConfig::perfect(1));
        let yes = provider
            .complete(&req(Stage::Evaluator, 1, vec!["reverse THE order of the elements".into(), corpus.tasks()[0].description.clone()], 2))
            .unwrap();
        assert_eq!(yes, vec!["CORRECT"]);
        let no = provider
            .complete(&req(Stage::Evaluator, 1, vec!["sort".into(), corpus.tasks()[0].description.clone()], 2))
            .unwrap();
        assert_eq!(no, vec!["INCORRECT"]);
    }

    #[test]
    fn unknown_task_is_an_error() {
        let provider = SyntheticProvider::new(&Corpus::mini(), SyntheticConfig::default());
        let mut r = req(Stage::Generator, 1, vec![], 1);
        r.meta.task_id = "zzz".into();
        assert!(matches!(provider.complete(&r), Err(ProviderError::Unscripted(_))));
    }
}
