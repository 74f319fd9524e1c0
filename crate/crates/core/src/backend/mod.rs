//! Completion backends. Every backend is `Send + Sync` and may be shared by
//! many worker threads.

mod cache;
mod mock;
mod remote;

use std::path::PathBuf;

use parking_lot::{Condvar, Mutex};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cache::{CachedBackend, ReplayEntry};
pub use mock::{MockBackend, MockResponse, MockRule, PromptMatcher};
pub use remote::RemoteBackend;

/// System message sent with every stage.
pub const SYSTEM_PREAMBLE: &str = "You are a financial analysis assistant.";

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum BackendError {
    #[error("backend returned HTTP {status} after {attempts} attempt(s): {body}")]
    Status { status: u16, attempts: u32, body: String },
    #[error("backend timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { message: String, attempts: u32 },
    #[error("malformed backend response: {0}")]
    Malformed(String),
    #[error("prompt {prompt_hash} is not in the replay log")]
    CacheMiss { prompt_hash: String },
    #[error("empty prompt")]
    EmptyPrompt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResult {
    pub text: String,
    pub latency_ms: u64,
    pub prompt_tokens: u32,
    pub completion_tokens: u32,
    pub attempt: u32,
    #[serde(default)]
    pub cached: bool,
}

pub trait CompletionBackend: Send + Sync {
    fn model_id(&self) -> &str;

    /// Upper bound on simultaneous requests this backend admits.
    fn max_concurrency(&self) -> usize {
        1
    }

    fn complete(&self, system_preamble: &str, user_prompt: &str) -> Result<CompletionResult, BackendError>;
}

impl<T: CompletionBackend + ?Sized> CompletionBackend for Box<T> {
    fn model_id(&self) -> &str {
        (**self).model_id()
    }
    fn max_concurrency(&self) -> usize {
        (**self).max_concurrency()
    }
    fn complete(&self, system_preamble: &str, user_prompt: &str) -> Result<CompletionResult, BackendError> {
        (**self).complete(system_preamble, user_prompt)
    }
}

impl<T: CompletionBackend + ?Sized> CompletionBackend for std::sync::Arc<T> {
    fn model_id(&self) -> &str {
        (**self).model_id()
    }
    fn max_concurrency(&self) -> usize {
        (**self).max_concurrency()
    }
    fn complete(&self, system_preamble: &str, user_prompt: &str) -> Result<CompletionResult, BackendError> {
        (**self).complete(system_preamble, user_prompt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Remote,
    #[default]
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub model_id: String,
    pub endpoint_url: String,
    pub timeout_s: f64,
    pub max_retries: u32,
    pub max_concurrent_requests: usize,
    pub temperature: f64,
    /// Environment variable holding the API key.
    pub api_key_env: String,
    pub backoff_base_ms: u64,
    /// Rule file for the mock backend; the momentum preset when absent.
    pub mock_rules: Option<PathBuf>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Mock,
            model_id: "mock-momentum".into(),
            endpoint_url: "https://api.openai.com/v1/chat/completions".into(),
            timeout_s: 60.0,
            max_retries: 3,
            max_concurrent_requests: 5,
            temperature: 0.0,
            api_key_env: "OPENAI_API_KEY".into(),
            backoff_base_ms: 1000,
            mock_rules: None,
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> crate::Result<()> {
        use crate::Error;
        if self.max_concurrent_requests < 1 {
            return Err(Error::Config("max_concurrent_requests must be at least 1".into()));
        }
        if !(self.timeout_s > 0.0 && self.timeout_s.is_finite()) {
            return Err(Error::Config("timeout_s must be positive".into()));
        }
        if self.temperature != 0.0 {
            return Err(Error::Config("temperature is fixed at 0".into()));
        }
        if self.model_id.trim().is_empty() {
            return Err(Error::Config("model_id must not be empty".into()));
        }
        Ok(())
    }

    /// Builds the configured backend (without caching).
    pub fn build(&self) -> crate::Result<Box<dyn CompletionBackend>> {
        self.validate()?;
        Ok(match self.kind {
            BackendKind::Remote => Box::new(RemoteBackend::new(self.clone())?),
            BackendKind::Mock => {
                let mock = match &self.mock_rules {
                    Some(path) => MockBackend::from_file(path)?,
                    None => MockBackend::momentum(),
                };
                Box::new(mock.with_concurrency(self.max_concurrent_requests))
            }
        })
    }
}

/// Hex SHA-256 over the system preamble and the user prompt.
pub fn prompt_hash(system_preamble: &str, user_prompt: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(system_preamble.as_bytes());
    hasher.update([0u8]);
    hasher.update(user_prompt.as_bytes());
    hex::encode(hasher.finalize())
}

/// Counting semaphore bounding in-flight requests.
#[derive(Debug)]
pub struct AdmissionLimiter {
    limit: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
}

pub struct Permit<'a> {
    limiter: &'a AdmissionLimiter,
}

impl AdmissionLimiter {
    pub fn new(limit: usize) -> Self {
        Self {
            limit: limit.max(1),
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub fn limit(&self) -> usize {
        self.limit
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock();
        while *n >= self.limit {
            self.freed.wait(&mut n);
        }
        *n += 1;
        Permit { limiter: self }
    }

    pub fn in_flight(&self) -> usize {
        *self.in_flight.lock()
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.limiter.in_flight.lock();
        *n -= 1;
        self.limiter.freed.notify_one();
    }
}

fn count_tokens(text: &str) -> u32 {
    text.split_whitespace().count() as u32
}
