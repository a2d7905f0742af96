//! Blocking HTTP backend for OpenAI-compatible chat-completion APIs.
//!
//! Every completion goes through a content-addressed disk cache keyed
//! by model, decoding parameters, and prompt, so re-running a study
//! re-spends nothing on prompts already answered. Transient failures
//! (HTTP 429, 5xx, transport errors) are retried with exponential
//! backoff; authentication failures abort immediately since no retry
//! will fix a bad key.

use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::BackendSection;
use weakrec_core::error::LlmError;
use weakrec_core::llm::{DecodingParams, LlmBackend};

/// Environment variable holding the API key.
pub const API_KEY_VAR: &str = "WEAKREC_API_KEY";

/// How transient failures are retried.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    /// Total attempts, including the first (so 3 = two retries).
    pub attempts: u32,
    /// Delay before the first retry; doubles each further retry.
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { attempts: 3, base_delay: Duration::from_secs(1) }
    }
}

/// A chat-completion client implementing the backend trait.
#[derive(Debug)]
pub struct HttpBackend {
    client: reqwest::blocking::Client,
    base_url: String,
    model: String,
    params: DecodingParams,
    api_key: String,
    cache_dir: Option<PathBuf>,
    retry: RetryPolicy,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f64,
    top_p: f64,
    max_tokens: u32,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Deserialize)]
struct ResponseMessage {
    content: String,
}

/// One cache entry; the prompt is stored alongside the response so
/// entries are auditable and hash collisions detectable.
#[derive(Serialize, Deserialize)]
struct CacheEntry {
    prompt: String,
    response: String,
}

impl HttpBackend {
    /// Builds a client from the backend config section.
    ///
    /// Fails with an authentication error — before any network traffic
    /// — when the key variable is unset or empty.
    pub fn new(cfg: &BackendSection, cache_root: Option<PathBuf>) -> Result<Self, LlmError> {
        let api_key = std::env::var(API_KEY_VAR)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| {
                LlmError::Auth(format!("{API_KEY_VAR} is not set; export it to use the HTTP backend").into())
            })?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| LlmError::Config(format!("cannot build HTTP client: {e}").into()))?;
        Ok(HttpBackend {
            client,
            base_url: cfg.base_url.trim_end_matches('/').to_string(),
            model: cfg.model.clone(),
            params: cfg.decoding_params(),
            api_key,
            cache_dir: cache_root,
            retry: RetryPolicy::default(),
        })
    }

    /// Overrides the retry policy (tests use millisecond backoff).
    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// Cache key: SHA-256 over everything that determines the answer.
    fn cache_key(&self, prompt: &str) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.model.as_bytes());
        hasher.update([0]);
        hasher.update(format!("{};{};{}", self.params.temperature, self.params.top_p, self.params.max_tokens));
        hasher.update([0]);
        hasher.update(prompt.as_bytes());
        hex::encode(hasher.finalize())
    }

    fn cache_path(&self, prompt: &str) -> Option<PathBuf> {
        self.cache_dir.as_ref().map(|d| d.join(format!("{}.json", self.cache_key(prompt))))
    }

    fn cache_get(&self, prompt: &str) -> Option<String> {
        let path = self.cache_path(prompt)?;
        let text = std::fs::read_to_string(path).ok()?;
        let entry: CacheEntry = serde_json::from_str(&text).ok()?;
        // A hash collision or hand-edited file would desynchronize the
        // stored prompt; treat that as a miss.
        (entry.prompt == prompt).then_some(entry.response)
    }

    fn cache_put(&self, prompt: &str, response: &str) {
        let Some(path) = self.cache_path(prompt) else { return };
        if let Some(parent) = path.parent() {
            if std::fs::create_dir_all(parent).is_err() {
                log::warn!("cannot create cache dir {}", parent.display());
                return;
            }
        }
        let entry = CacheEntry { prompt: prompt.into(), response: response.into() };
        let text = serde_json::to_string_pretty(&entry).expect("strings serialize");
        if std::fs::write(&path, text).is_err() {
            log::warn!("cannot write cache entry {}", path.display());
        }
    }

    /// One POST without retries; `Ok(Err(_))` is a retryable failure.
    fn attempt(&self, prompt: &str) -> Result<Result<String, String>, LlmError> {
        let request = ChatRequest {
            model: &self.model,
            messages: [ChatMessage { role: "user", content: prompt }],
            temperature: self.params.temperature,
            top_p: self.params.top_p,
            max_tokens: self.params.max_tokens,
        };
        let sent = self
            .client
            .post(format!("{}/chat/completions", self.base_url))
            .bearer_auth(&self.api_key)
            .json(&request)
            .send();
        let response = match sent {
            Ok(r) => r,
            Err(e) => return Ok(Err(format!("transport error: {e}"))),
        };
        let status = response.status();
        if status.as_u16() == 401 || status.as_u16() == 403 {
            return Err(LlmError::Auth(format!("server rejected the API key (HTTP {status})").into()));
        }
        if status.as_u16() == 429 || status.is_server_error() {
            return Ok(Err(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(LlmError::Unavailable(format!("HTTP {status} from completion endpoint").into()));
        }
        let parsed: ChatResponse = response
            .json()
            .map_err(|e| LlmError::Unavailable(format!("malformed completion response: {e}").into()))?;
        let content = parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| LlmError::Unavailable("completion response has no choices".into()))?;
        Ok(Ok(content))
    }
}

impl LlmBackend for HttpBackend {
    fn name(&self) -> &str {
        "http"
    }

    fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        if let Some(hit) = self.cache_get(prompt) {
            return Ok(hit);
        }
        let mut last_failure = String::new();
        for attempt in 0..self.retry.attempts {
            if attempt > 0 {
                std::thread::sleep(self.retry.base_delay * 2u32.pow(attempt - 1));
            }
            match self.attempt(prompt)? {
                Ok(content) => {
                    self.cache_put(prompt, &content);
                    return Ok(content);
                }
                Err(failure) => {
                    log::warn!("completion attempt {} failed: {failure}", attempt + 1);
                    last_failure = failure;
                }
            }
        }
        Err(LlmError::Unavailable(
            format!("gave up after {} attempts; last failure: {last_failure}", self.retry.attempts).into(),
        ))
    }
}
