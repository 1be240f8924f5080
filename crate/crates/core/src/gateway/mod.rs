//! Prompt rendering and completion requests against a pluggable backend.
//!
//! A [`Gateway`] wraps one [`Backend`] with the retry, backoff and rate
//! limit policy from [`BackendConfig`]. Every call to
//! [`Gateway::complete`] carries exactly one prompt.

mod http;
mod mock;
mod prompt;
mod tokenize;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use log::{debug, warn};

pub use http::HttpBackend;
pub use mock::{MockBackend, MockFallback, MockFixture, MockRule};
pub use prompt::{
    render_grading_prompt, render_qa_prompt, render_question_gen_prompt, render_self_rating_prompt, truncate_context,
    PromptTemplate,
};
pub use tokenize::{Tokenizer, WhitespaceTokenizer};

use crate::error::{Error, Result};

/// Environment variable holding the bearer token for HTTP backends.
pub const API_KEY_ENV: &str = "EXAM_EVAL_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Task {
    QuestionGen,
    Qa,
    SelfRating,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::QuestionGen => "question_gen",
            Task::Qa => "qa",
            Task::SelfRating => "self_rating",
        }
    }
}

/// Identifies what a request is about; used for logging and by the mock backend.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RequestKey {
    pub query_id: Option<String>,
    pub facet_id: Option<String>,
    pub question_id: Option<String>,
    pub passage_id: Option<String>,
}

impl std::fmt::Display for RequestKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts = [
            ("query", &self.query_id),
            ("facet", &self.facet_id),
            ("question", &self.question_id),
            ("passage", &self.passage_id),
        ];
        let mut first = true;
        for (name, value) in parts {
            if let Some(v) = value {
                if !first {
                    f.write_str(" ")?;
                }
                write!(f, "{name}={v}")?;
                first = false;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct CompletionRequest {
    pub prompt: String,
    pub task: Task,
    pub key: RequestKey,
}

#[derive(Debug, Clone)]
pub struct CompletionResponse {
    /// Raw completion; may be empty.
    pub text: String,
    pub latency: Duration,
    pub backend: String,
}

/// Failure of a single attempt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AttemptError {
    /// Worth retrying: rate limits, 5xx, timeouts, dropped connections.
    Transient(String),
    /// Retrying will not help: bad request, auth failure, malformed reply.
    Fatal(String),
}

/// A text-generation service. Implementations make one attempt per call;
/// retries live in [`Gateway`].
pub trait Backend: Send + Sync {
    fn id(&self) -> String;

    fn attempt(&self, request: &CompletionRequest, config: &BackendConfig) -> Result<String, AttemptError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackendConfig {
    pub endpoint_url: String,
    pub model_name: String,
    pub max_input_tokens: usize,
    pub timeout: Duration,
    /// Retries after the first failed attempt.
    pub max_retries: u32,
    pub parallelism: usize,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
    /// Cap on request starts per second across all workers; `None` disables it.
    pub requests_per_second: Option<f64>,
    pub max_new_tokens: u32,
    pub temperature: f64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            endpoint_url: "http://localhost:8000/v1/completions".into(),
            model_name: "google/flan-t5-large".into(),
            max_input_tokens: 512,
            timeout: Duration::from_secs(60),
            max_retries: 3,
            parallelism: 1,
            initial_backoff: Duration::from_millis(500),
            max_backoff: Duration::from_secs(30),
            requests_per_second: None,
            max_new_tokens: 128,
            temperature: 0.0,
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<()> {
        if self.parallelism == 0 {
            return Err(Error::Validation("parallelism must be >= 1".into()));
        }
        if self.max_input_tokens < 64 {
            return Err(Error::Validation("max_input_tokens must be >= 64".into()));
        }
        if let Some(rps) = self.requests_per_second {
            if !(rps > 0.0 && rps.is_finite()) {
                return Err(Error::Validation("requests_per_second must be positive".into()));
            }
        }
        Ok(())
    }

    fn backoff(&self, retry: u32) -> Duration {
        let factor = 2u32.saturating_pow(retry);
        self.initial_backoff.saturating_mul(factor).min(self.max_backoff)
    }
}

/// Token bucket with capacity one: spaces request starts evenly.
#[derive(Debug)]
struct RateLimiter {
    interval: Duration,
    next_slot: Mutex<Instant>,
}

impl RateLimiter {
    fn new(per_second: f64) -> Self {
        RateLimiter {
            interval: Duration::from_secs_f64(1.0 / per_second),
            next_slot: Mutex::new(Instant::now()),
        }
    }

    fn acquire(&self) {
        let wait = {
            let mut next = self.next_slot.lock().expect("rate limiter poisoned");
            let now = Instant::now();
            let slot = (*next).max(now);
            *next = slot + self.interval;
            slot - now
        };
        if !wait.is_zero() {
            thread::sleep(wait);
        }
    }
}

/// A backend plus the policy for talking to it. Cheap to share across threads.
pub struct Gateway {
    backend: Arc<dyn Backend>,
    config: BackendConfig,
    tokenizer: Arc<dyn Tokenizer>,
    limiter: Option<RateLimiter>,
    requests: AtomicUsize,
    attempts: AtomicUsize,
}

impl Gateway {
    pub fn new(backend: Arc<dyn Backend>, config: BackendConfig) -> Result<Self> {
        config.validate()?;
        Ok(Gateway {
            limiter: config.requests_per_second.map(RateLimiter::new),
            backend,
            config,
            tokenizer: Arc::new(WhitespaceTokenizer),
            requests: AtomicUsize::new(0),
            attempts: AtomicUsize::new(0),
        })
    }

    pub fn with_tokenizer(mut self, tokenizer: Arc<dyn Tokenizer>) -> Self {
        self.tokenizer = tokenizer;
        self
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    pub fn tokenizer(&self) -> &dyn Tokenizer {
        self.tokenizer.as_ref()
    }

    pub fn backend_id(&self) -> String {
        self.backend.id()
    }

    /// Logical requests issued so far (retries not counted).
    pub fn request_count(&self) -> usize {
        self.requests.load(Ordering::Relaxed)
    }

    /// Attempts issued so far, including retries.
    pub fn attempt_count(&self) -> usize {
        self.attempts.load(Ordering::Relaxed)
    }

    pub fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse> {
        complete(self, request)
    }
}

/// Sends one request, retrying transient failures with exponential backoff.
pub fn complete(gateway: &Gateway, request: &CompletionRequest) -> Result<CompletionResponse> {
    gateway.requests.fetch_add(1, Ordering::Relaxed);
    let config = &gateway.config;
    let start = Instant::now();
    let mut retry = 0u32;
    loop {
        if let Some(limiter) = &gateway.limiter {
            limiter.acquire();
        }
        gateway.attempts.fetch_add(1, Ordering::Relaxed);
        let failure = match gateway.backend.attempt(request, config) {
            Ok(text) => {
                return Ok(CompletionResponse {
                    text,
                    latency: start.elapsed(),
                    backend: gateway.backend.id(),
                })
            }
            Err(AttemptError::Fatal(msg)) => msg,
            Err(AttemptError::Transient(msg)) if retry < config.max_retries => {
                let delay = config.backoff(retry);
                debug!(
                    "{} [{}]: {msg}; retry {} in {delay:?}",
                    request.task.name(),
                    request.key,
                    retry + 1
                );
                thread::sleep(delay);
                retry += 1;
                continue;
            }
            Err(AttemptError::Transient(msg)) => format!("{msg} (gave up after {} retries)", retry),
        };
        warn!("{} [{}] failed: {failure}", request.task.name(), request.key);
        return Err(Error::Backend {
            context: format!("{} {}", request.task.name(), request.key),
            message: failure,
        });
    }
}
