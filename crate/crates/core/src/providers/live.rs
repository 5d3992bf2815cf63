//! HTTP chat-completions backend.

use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{CompletionRequest, Provider, ProviderError, Role};

pub const API_KEY_ENV: &str = "INDUKT_API_KEY";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiveConfig {
    pub endpoint: String,
    /// Ceiling on requests started in any 60 s window; `None` disables it.
    pub requests_per_minute: Option<u32>,
    pub max_attempts: u32,
    pub backoff_base_ms: u64,
    pub multi_sample: bool,
    pub request_timeout_ms: u64,
}

impl Default for LiveConfig {
    fn default() -> Self {
        LiveConfig {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            requests_per_minute: None,
            max_attempts: 5,
            backoff_base_ms: 500,
            multi_sample: true,
            request_timeout_ms: 120_000,
        }
    }
}

pub trait Clock: Send + Sync {
    fn now(&self) -> Instant;
    fn sleep(&self, d: Duration);
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> Instant {
        Instant::now()
    }

    fn sleep(&self, d: Duration) {
        std::thread::sleep(d)
    }
}

/// Admits at most `limit` requests in any sliding window of `window`.
///
/// Keeps the start times of the last `limit` grants; a new request waits
/// until the oldest of them has left the window.
pub struct RateLimiter<C = SystemClock> {
    limit: usize,
    window: Duration,
    clock: C,
    granted: Mutex<VecDeque<Instant>>,
    log: Mutex<Vec<Instant>>,
}

impl RateLimiter<SystemClock> {
    pub fn per_minute(limit: u32) -> Self {
        Self::with_clock(limit, Duration::from_secs(60), SystemClock)
    }
}

impl<C: Clock> RateLimiter<C> {
    pub fn with_clock(limit: u32, window: Duration, clock: C) -> Self {
        RateLimiter {
            limit: limit.max(1) as usize,
            window,
            clock,
            granted: Mutex::new(VecDeque::new()),
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn acquire(&self) {
        let mut granted = self.granted.lock().expect("limiter lock");
        loop {
            let now = self.clock.now();
            while granted.front().is_some_and(|t| now.duration_since(*t) >= self.window) {
                granted.pop_front();
            }
            if granted.len() < self.limit {
                granted.push_back(now);
                self.log.lock().expect("limiter log").push(now);
                return;
            }
            let wait = self.window - now.duration_since(*granted.front().expect("non-empty"));
            self.clock.sleep(wait);
        }
    }

    /// Every grant time so far, in order.
    pub fn grants(&self) -> Vec<Instant> {
        self.log.lock().expect("limiter log").clone()
    }
}

pub struct LiveProvider {
    config: LiveConfig,
    api_key: String,
    client: reqwest::blocking::Client,
    limiter: Option<RateLimiter>,
}

enum Attempt {
    Retry(String),
    Fatal(ProviderError),
}

impl LiveProvider {
    /// Reads the bearer credential from [`API_KEY_ENV`].
    pub fn from_env(config: LiveConfig) -> Result<Self, ProviderError> {
        let key = std::env::var(API_KEY_ENV)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| ProviderError::CredentialMissing(API_KEY_ENV.into()))?;
        Self::new(config, key)
    }

    pub fn new(config: LiveConfig, api_key: String) -> Result<Self, ProviderError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.request_timeout_ms))
            .build()
            .map_err(|e| ProviderError::Transport {
                attempts: 0,
                message: e.to_string(),
            })?;
        let limiter = config.requests_per_minute.map(RateLimiter::per_minute);
        Ok(LiveProvider {
            config,
            api_key,
            client,
            limiter,
        })
    }

    pub fn limiter(&self) -> Option<&RateLimiter> {
        self.limiter.as_ref()
    }

    pub fn body(req: &CompletionRequest) -> serde_json::Value {
        let messages: Vec<_> = req
            .messages
            .iter()
            .map(|m| {
                let role = match m.role {
                    Role::System => "system",
                    Role::User => "user",
                    Role::Assistant => "assistant",
                };
                json!({"role": role, "content": m.content})
            })
            .collect();
        json!({
            "model": req.model_name,
            "messages": messages,
            "temperature": req.temperature,
            "top_p": req.top_p,
            "n": req.n_samples,
            "max_tokens": req.max_tokens,
        })
    }

    fn attempt(&self, body: &serde_json::Value, n: usize) -> Result<Vec<String>, Attempt> {
        if let Some(limiter) = &self.limiter {
            limiter.acquire();
        }
        let resp = self
            .client
            .post(&self.config.endpoint)
            .bearer_auth(&self.api_key)
            .json(body)
            .send()
            .map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| Attempt::Retry(e.to_string()))?;
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(Attempt::Retry(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(Attempt::Fatal(ProviderError::Transport {
                attempts: 1,
                message: format!("HTTP {status}: {text}"),
            }));
        }
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Attempt::Fatal(ProviderError::BadResponse(e.to_string())))?;
        let choices = value["choices"]
            .as_array()
            .ok_or_else(|| Attempt::Fatal(ProviderError::BadResponse("no `choices` array".into())))?;
        let texts: Vec<String> = choices
            .iter()
            .map(|c| c["message"]["content"].as_str().unwrap_or_default().to_string())
            .collect();
        if texts.len() != n {
            return Err(Attempt::Fatal(ProviderError::BadResponse(format!(
                "expected {n} choices, got {}",
                texts.len()
            ))));
        }
        Ok(texts)
    }
}

impl Provider for LiveProvider {
    fn complete(&self, req: &CompletionRequest) -> Result<Vec<String>, ProviderError> {
        let body = Self::body(req);
        let mut last = String::new();
        let attempts = self.config.max_attempts.max(1);
        for attempt in 0..attempts {
            if attempt > 0 {
                let delay = self.config.backoff_base_ms.saturating_mul(1 << (attempt - 1).min(16));
                std::thread::sleep(Duration::from_millis(delay));
            }
            match self.attempt(&body, req.n_samples) {
                Ok(texts) => return Ok(texts),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(message)) => {
                    log::warn!("chat completion attempt {} failed: {message}", attempt + 1);
                    last = message;
                }
            }
        }
        Err(ProviderError::Transport {
            attempts,
            message: last,
        })
    }

    fn supports_multi_sample(&self) -> bool {
        self.config.multi_sample
    }
}
