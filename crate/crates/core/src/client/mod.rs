//! Uniform chat-completion interface: an HTTP provider for OpenAI-compatible
//! endpoints and a deterministic scripted mock for offline runs.

mod http;
mod mock;
mod ratelimit;

pub use http::HttpProvider;
pub use mock::{request_hash, MockFixture, MockProvider};
pub use ratelimit::{Clock, RateLimiter, SystemClock, VirtualClock};

use std::sync::Arc;
use std::sync::Mutex;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }
    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }
    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    pub model_id: String,
}

impl ChatRequest {
    pub fn validate(&self) -> Result<()> {
        if self.messages.is_empty() {
            return Err(Error::Config("request has no messages".into()));
        }
        let first_non_system = self.messages.iter().find(|m| m.role != Role::System);
        if let Some(m) = first_non_system {
            if m.role != Role::User {
                return Err(Error::Config(
                    "first non-system message must be from the user".into(),
                ));
            }
        }
        if self.temperature < 0.0 || !(0.0..=1.0).contains(&self.top_p) || self.top_p == 0.0 {
            return Err(Error::Config("invalid sampling parameters".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u32,
    pub completion_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    pub finish_reason: String,
    pub usage: Usage,
    pub latency_ms: u64,
}

/// Default sampling parameters per provider family. All overridable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ProviderFamily {
    /// top-p 1.0
    #[default]
    GptLike,
    /// top-p 0.7
    ClaudeLike,
    /// temperature 1.0, top-p 1.0
    OpenChatLike,
}

impl ProviderFamily {
    pub fn default_sampling(self) -> (f64, f64) {
        match self {
            ProviderFamily::GptLike => (1.0, 1.0),
            ProviderFamily::ClaudeLike => (1.0, 0.7),
            ProviderFamily::OpenChatLike => (1.0, 1.0),
        }
    }
}

/// One chat-completion backend.
pub trait Provider: Send + Sync {
    fn complete_once(&self, request: &ChatRequest) -> Result<ChatResponse>;
    fn id(&self) -> &str;
}

fn is_transient(err: &Error) -> bool {
    matches!(
        err,
        Error::RateLimited { .. } | Error::Timeout(_) | Error::Http(_)
    ) || matches!(err, Error::Provider { status, .. } if *status == 429 || *status >= 500)
}

/// Retry configuration: exponential backoff with jitter, bounded attempts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            base_delay_ms: 500,
            max_delay_ms: 30_000,
        }
    }
}

impl RetryPolicy {
    fn delay_for(&self, attempt: u32, rng: &mut ChaCha8Rng) -> u64 {
        let exp = self
            .base_delay_ms
            .saturating_mul(1u64 << attempt.min(16))
            .min(self.max_delay_ms);
        let jitter = rng.gen_range(0..=exp / 2);
        (exp + jitter).min(self.max_delay_ms)
    }
}

/// A shareable client: provider + rate limiter + retry loop.
pub struct ModelClient {
    provider: Arc<dyn Provider>,
    limiter: Option<RateLimiter>,
    retry: RetryPolicy,
    clock: Arc<dyn Clock>,
    rng: Mutex<ChaCha8Rng>,
    retries_observed: Mutex<u64>,
}

impl ModelClient {
    pub fn new(provider: Arc<dyn Provider>) -> Self {
        Self::with_parts(provider, None, RetryPolicy::default(), Arc::new(SystemClock))
    }

    pub fn with_parts(
        provider: Arc<dyn Provider>,
        limiter: Option<RateLimiter>,
        retry: RetryPolicy,
        clock: Arc<dyn Clock>,
    ) -> Self {
        Self {
            provider,
            limiter,
            retry,
            clock,
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(0)),
            retries_observed: Mutex::new(0),
        }
    }

    pub fn provider_id(&self) -> &str {
        self.provider.id()
    }

    /// Total retries performed over the client's lifetime.
    pub fn retry_count(&self) -> u64 {
        *self.retries_observed.lock().unwrap()
    }

    /// One completion, with rate limiting and bounded retry on transient
    /// failures (429, 5xx, timeouts).
    pub fn complete(&self, request: &ChatRequest) -> Result<ChatResponse> {
        request.validate()?;
        let mut last_err = None;
        for attempt in 0..self.retry.max_attempts {
            if let Some(limiter) = &self.limiter {
                limiter.acquire();
            }
            match self.provider.complete_once(request) {
                Ok(resp) => return Ok(resp),
                Err(err) if is_transient(&err) && attempt + 1 < self.retry.max_attempts => {
                    *self.retries_observed.lock().unwrap() += 1;
                    let delay = {
                        let mut rng = self.rng.lock().unwrap();
                        self.retry.delay_for(attempt, &mut rng)
                    };
                    self.clock.sleep_ms(delay);
                    last_err = Some(err);
                }
                Err(err) => return Err(err),
            }
        }
        Err(last_err.unwrap_or_else(|| Error::RateLimited {
            attempts: self.retry.max_attempts,
            message: "retries exhausted".into(),
        }))
    }

    /// `n` independent completions in order; per-index failures are reported
    /// and the caller decides quorum.
    pub fn sample_n(&self, request: &ChatRequest, n: usize) -> Vec<Result<ChatResponse>> {
        (0..n).map(|_| self.complete(request)).collect()
    }
}
