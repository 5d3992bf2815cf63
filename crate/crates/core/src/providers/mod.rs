//! Chat-completion providers and the request model they share.
//!
//! Every backend implements [`Provider`]. Requests carry a [`RequestMeta`]
//! block that identifies where in an experiment the request was issued; it
//! is part of the fingerprint (so record/replay is keyed per call site) but
//! is never sent over the wire.

mod live;
mod prompts;
mod scripted;
mod synthetic;
mod transcript;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use live::{Clock, LiveConfig, LiveProvider, RateLimiter, SystemClock, API_KEY_ENV};
pub use prompts::{format_example, format_list, PromptContext, PromptError, PromptSet};
pub use scripted::ScriptedProvider;
pub use synthetic::{SyntheticConfig, SyntheticProvider};
pub use transcript::{RecordingProvider, ReplayProvider, TranscriptRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn new(role: Role, content: impl Into<String>) -> Message {
        Message {
            role,
            content: content.into(),
        }
    }
}

/// The pipeline stage a request belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Generator,
    Summarizer,
    Implementor,
    Refinement,
    Direct,
    Evaluator,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Generator => "generator",
            Stage::Summarizer => "summarizer",
            Stage::Implementor => "implementor",
            Stage::Refinement => "refinement",
            Stage::Direct => "direct",
            Stage::Evaluator => "evaluator",
        }
    }
}

/// Where a request was issued from.
///
/// `subject` holds the natural-language items the request is about: the
/// hypotheses being summarized, the hypothesis being implemented, or the
/// hypothesis/ground-truth pair being judged.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestMeta {
    pub task_id: String,
    pub stage: Option<Stage>,
    pub run: u32,
    pub trial: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slot: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidate: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub round: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub subject: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub top_p: f64,
    pub n_samples: usize,
    pub max_tokens: u32,
    pub model_name: String,
    pub meta: RequestMeta,
}

impl CompletionRequest {
    /// Canonical JSON form: object keys sorted, no insignificant whitespace.
    pub fn canonical_json(&self) -> String {
        // serde_json's default map is ordered, so the Value round trip sorts keys
        let value = serde_json::to_value(self).expect("request serializes");
        serde_json::to_string(&value).expect("value serializes")
    }

    /// SHA-256 of the canonical form, hex encoded (64 chars).
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    pub fn stage(&self) -> Option<Stage> {
        self.meta.stage
    }
}

/// Sampling parameters for one stage.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sampling {
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
}

pub const DEFAULT_MAX_TOKENS: u32 = 1000;

/// Per-stage sampling defaults. Values are passed to the backend verbatim.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingProfile {
    pub generator: Sampling,
    pub summarizer: Sampling,
    pub implementor: Sampling,
    pub direct: Sampling,
    pub evaluator: Sampling,
}

impl Default for SamplingProfile {
    fn default() -> Self {
        let s = |temperature, top_p| Sampling {
            temperature,
            top_p,
            max_tokens: DEFAULT_MAX_TOKENS,
        };
        SamplingProfile {
            generator: s(1.0, 1.0),
            summarizer: s(1.0, 0.0),
            implementor: s(0.7, 0.0),
            direct: s(0.0, 1.0),
            evaluator: s(0.0, 1.0),
        }
    }
}

impl SamplingProfile {
    pub fn for_stage(&self, stage: Stage) -> Sampling {
        match stage {
            Stage::Generator => self.generator,
            Stage::Summarizer => self.summarizer,
            Stage::Implementor | Stage::Refinement => self.implementor,
            Stage::Direct => self.direct,
            Stage::Evaluator => self.evaluator,
        }
    }

    pub fn request(
        &self,
        stage: Stage,
        model_name: &str,
        messages: Vec<Message>,
        n_samples: usize,
        mut meta: RequestMeta,
    ) -> CompletionRequest {
        let sampling = self.for_stage(stage);
        meta.stage = Some(stage);
        CompletionRequest {
            messages,
            temperature: sampling.temperature,
            top_p: sampling.top_p,
            n_samples,
            max_tokens: sampling.max_tokens,
            model_name: model_name.to_string(),
            meta,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ProviderError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("replay miss: no recorded response for fingerprint {fingerprint}")]
    ReplayMiss { fingerprint: String },
    #[error("credential missing: set {0}")]
    CredentialMissing(String),
    #[error("malformed provider response: {0}")]
    BadResponse(String),
    #[error("scripted provider has no response for this request: {0}")]
    Unscripted(String),
}

/// A chat-completion backend. Implementations must tolerate concurrent calls.
pub trait Provider: Send + Sync {
    /// Returns exactly `req.n_samples` texts.
    fn complete(&self, req: &CompletionRequest) -> Result<Vec<String>, ProviderError>;

    /// Whether one request may carry `n_samples > 1`.
    fn supports_multi_sample(&self) -> bool {
        true
    }
}

impl<P: Provider + ?Sized> Provider for std::sync::Arc<P> {
    fn complete(&self, req: &CompletionRequest) -> Result<Vec<String>, ProviderError> {
        (**self).complete(req)
    }

    fn supports_multi_sample(&self) -> bool {
        (**self).supports_multi_sample()
    }
}

impl<P: Provider + ?Sized> Provider for &P {
    fn complete(&self, req: &CompletionRequest) -> Result<Vec<String>, ProviderError> {
        (**self).complete(req)
    }

    fn supports_multi_sample(&self) -> bool {
        (**self).supports_multi_sample()
    }
}

/// Draws `req.n_samples` texts, as one request when the backend allows it
/// and as that many single-sample requests otherwise.
pub fn sample(provider: &dyn Provider, req: &CompletionRequest) -> Result<Vec<String>, ProviderError> {
    let texts = if req.n_samples <= 1 || provider.supports_multi_sample() {
        provider.complete(req)?
    } else {
        let mut texts = Vec::with_capacity(req.n_samples);
        for i in 0..req.n_samples {
            let mut single = req.clone();
            single.n_samples = 1;
            single.meta.sample = Some(i + 1);
            texts.extend(provider.complete(&single)?);
        }
        texts
    };
    if texts.len() != req.n_samples {
        return Err(ProviderError::BadResponse(format!(
            "expected {} samples, got {}",
            req.n_samples,
            texts.len()
        )));
    }
    Ok(texts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request() -> CompletionRequest {
        SamplingProfile::default().request(
            Stage::Generator,
            "gpt-4o",
            vec![Message::new(Role::User, "hi")],
            64,
            RequestMeta {
                task_id: "c001".into(),
                run: 1,
                trial: 3,
                ..Default::default()
            },
        )
    }

    #[test]
    fn appendix_defaults() {
        let p = SamplingProfile::default();
        assert_eq!((p.generator.temperature, p.generator.top_p), (1.0, 1.0));
        assert_eq!((p.summarizer.temperature, p.summarizer.top_p), (1.0, 0.0));
        assert_eq!((p.implementor.temperature, p.implementor.top_p), (0.7, 0.0));
        assert_eq!(p.direct.temperature, 0.0);
        assert_eq!(p.generator.max_tokens, 1000);
    }

    #[test]
    fn fingerprint_is_hex64_and_stable() {
        let fp = request().fingerprint();
        assert_eq!(fp.len(), 64);
        assert!(fp.chars().all(|c| c.is_ascii_hexdigit()));
        assert_eq!(fp, request().fingerprint());
    }

    #[test]
    fn fingerprint_ignores_field_order_in_serialized_form() {
        let req = request();
        let mut value = serde_json::to_value(&req).unwrap();
        // rebuild the object with keys inserted in reverse order
        let obj = value.as_object_mut().unwrap();
        let mut keys: Vec<_> = obj.keys().cloned().collect();
        keys.reverse();
        let mut reordered = serde_json::Map::new();
        for k in keys {
            reordered.insert(k.clone(), obj[&k].clone());
        }
        let back: CompletionRequest = serde_json::from_value(serde_json::Value::Object(reordered)).unwrap();
        assert_eq!(back.fingerprint(), req.fingerprint());
    }

    #[test]
    fn sampling_parameters_change_fingerprint() {
        let base = request();
        let mut t = base.clone();
        t.temperature = 0.9;
        let mut p = base.clone();
        p.top_p = 0.5;
        let mut n = base.clone();
        n.n_samples = 8;
        for other in [t, p, n] {
            assert_ne!(other.fingerprint(), base.fingerprint());
        }
    }

    struct Single;
    impl Provider for Single {
        fn complete(&self, req: &CompletionRequest) -> Result<Vec<String>, ProviderError> {
            assert_eq!(req.n_samples, 1);
            Ok(vec![format!("s{}", req.meta.sample.unwrap())])
        }
        fn supports_multi_sample(&self) -> bool {
            false
        }
    }

    #[test]
    fn sample_splits_when_backend_is_single_shot() {
        let texts = sample(&Single, &request()).unwrap();
        assert_eq!(texts.len(), 64);
        assert_eq!(texts[0], "s1");
        assert_eq!(texts[63], "s64");
    }
}
