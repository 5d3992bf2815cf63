use std::sync::atomic::{AtomicUsize, Ordering};

use super::{CompletionRequest, Provider, ProviderError};

type Script = dyn Fn(&CompletionRequest) -> Result<Vec<String>, ProviderError> + Send + Sync;

/// A provider whose answers come from a closure over the request.
pub struct ScriptedProvider {
    script: Box<Script>,
    multi_sample: bool,
    calls: AtomicUsize,
}

impl ScriptedProvider {
    pub fn new<F>(script: F) -> Self
    where
        F: Fn(&CompletionRequest) -> Result<Vec<String>, ProviderError> + Send + Sync + 'static,
    {
        ScriptedProvider {
            script: Box::new(script),
            multi_sample: true,
            calls: AtomicUsize::new(0),
        }
    }

    /// Answers every sample of every request with `text`.
    pub fn constant(text: impl Into<String>) -> Self {
        let text = text.into();
        Self::new(move |req| Ok(vec![text.clone(); req.n_samples]))
    }

    pub fn single_sample(mut self) -> Self {
        self.multi_sample = false;
        self
    }

    /// Number of `complete` calls served so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Provider for ScriptedProvider {
    fn complete(&self, req: &CompletionRequest) -> Result<Vec<String>, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        (self.script)(req)
    }

    fn supports_multi_sample(&self) -> bool {
        self.multi_sample
    }
}
