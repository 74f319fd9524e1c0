//! Chat-completion HTTP client with retries and a global admission limit.

use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{AdmissionLimiter, BackendConfig, BackendError, CompletionBackend, CompletionResult};
use crate::error::{Error, Result};

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 2],
    temperature: f64,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Deserialize)]
struct ResponseMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct Usage {
    #[serde(default)]
    prompt_tokens: u32,
    #[serde(default)]
    completion_tokens: u32,
}

enum Failure {
    Retryable(BackendError, Option<Duration>),
    Fatal(BackendError),
}

pub struct RemoteBackend {
    config: BackendConfig,
    client: reqwest::blocking::Client,
    api_key: Option<String>,
    limiter: AdmissionLimiter,
}

impl RemoteBackend {
    pub fn new(config: BackendConfig) -> Result<Self> {
        config.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_s))
            .build()
            .map_err(|e| Error::Config(format!("http client: {e}")))?;
        let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        if api_key.is_none() {
            log::warn!("{} is not set; sending unauthenticated requests", config.api_key_env);
        }
        Ok(Self {
            limiter: AdmissionLimiter::new(config.max_concurrent_requests),
            config,
            client,
            api_key,
        })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let base = self.config.backoff_base_ms as f64 * 2f64.powi(attempt.saturating_sub(1) as i32);
        let jitter = rand::rng().random_range(0.0..0.25);
        Duration::from_millis((base * (1.0 + jitter)) as u64)
    }

    fn attempt(&self, system: &str, prompt: &str, attempt: u32) -> Result<CompletionResult, Failure> {
        let body = ChatRequest {
            model: &self.config.model_id,
            messages: [
                ChatMessage {
                    role: "system",
                    content: system,
                },
                ChatMessage {
                    role: "user",
                    content: prompt,
                },
            ],
            temperature: self.config.temperature,
        };
        let _permit = self.limiter.acquire();
        let started = Instant::now();
        let mut request = self.client.post(&self.config.endpoint_url).json(&body);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(|e| {
            if e.is_timeout() {
                Failure::Retryable(BackendError::Timeout { attempts: attempt }, None)
            } else {
                Failure::Retryable(
                    BackendError::Transport {
                        message: e.to_string(),
                        attempts: attempt,
                    },
                    None,
                )
            }
        })?;
        let status = response.status();
        let retry_after = response
            .headers()
            .get(reqwest::header::RETRY_AFTER)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<u64>().ok())
            .map(Duration::from_secs);
        let text = response.text().map_err(|e| {
            let err = if e.is_timeout() {
                BackendError::Timeout { attempts: attempt }
            } else {
                BackendError::Transport {
                    message: e.to_string(),
                    attempts: attempt,
                }
            };
            Failure::Retryable(err, None)
        })?;
        let latency_ms = started.elapsed().as_millis() as u64;

        if !status.is_success() {
            let err = BackendError::Status {
                status: status.as_u16(),
                attempts: attempt,
                body: text.chars().take(500).collect(),
            };
            return Err(if status.as_u16() == 429 || status.is_server_error() {
                Failure::Retryable(err, retry_after)
            } else {
                Failure::Fatal(err)
            });
        }
        let parsed: ChatResponse =
            serde_json::from_str(&text).map_err(|e| Failure::Fatal(BackendError::Malformed(e.to_string())))?;
        let content = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| Failure::Fatal(BackendError::Malformed("no choices in response".into())))?;
        let usage = parsed.usage.unwrap_or(Usage {
            prompt_tokens: 0,
            completion_tokens: 0,
        });
        Ok(CompletionResult {
            text: content,
            latency_ms,
            prompt_tokens: usage.prompt_tokens,
            completion_tokens: usage.completion_tokens,
            attempt,
            cached: false,
        })
    }
}

impl CompletionBackend for RemoteBackend {
    fn model_id(&self) -> &str {
        &self.config.model_id
    }

    fn max_concurrency(&self) -> usize {
        self.limiter.limit()
    }

    fn complete(&self, system_preamble: &str, user_prompt: &str) -> Result<CompletionResult, BackendError> {
        if user_prompt.trim().is_empty() {
            return Err(BackendError::EmptyPrompt);
        }
        let max_attempts = self.config.max_retries + 1;
        let mut attempt = 1;
        loop {
            match self.attempt(system_preamble, user_prompt, attempt) {
                Ok(result) => return Ok(result),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retryable(e, _)) if attempt >= max_attempts => return Err(e),
                Err(Failure::Retryable(e, retry_after)) => {
                    let wait = self.backoff(attempt).max(retry_after.unwrap_or_default());
                    log::debug!("attempt {attempt} failed ({e}); retrying in {wait:?}");
                    std::thread::sleep(wait);
                    attempt += 1;
                }
            }
        }
    }
}
