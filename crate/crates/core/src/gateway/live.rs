//! OpenAI-compatible chat-completions client.

use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::{
    estimate_tokens, BackendError, BackendSpec, Completion, CompletionRequest, DecisionBackend,
    RetryPolicy, Sampling, Usage,
};

/// Process-wide request pacing shared by every live backend.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Duration,
    next: Mutex<Instant>,
}

impl RateLimiter {
    pub fn per_minute(requests: u32) -> Self {
        let interval = Duration::from_secs(60) / requests.max(1);
        Self { interval, next: Mutex::new(Instant::now()) }
    }

    /// Blocks until the caller may send its request.
    pub fn acquire(&self) {
        let wait = {
            let mut next = self.next.lock().unwrap_or_else(|e| e.into_inner());
            let now = Instant::now();
            let slot = (*next).max(now);
            *next = slot + self.interval;
            slot - now
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

pub struct LiveBackend {
    client: reqwest::blocking::Client,
    url: String,
    model: String,
    api_key: Option<String>,
    sampling: Option<Sampling>,
    retry: RetryPolicy,
    limiter: Option<Arc<RateLimiter>>,
}

impl LiveBackend {
    pub fn from_spec(spec: &BackendSpec, limiter: Option<Arc<RateLimiter>>) -> Result<Self, BackendError> {
        let endpoint = spec
            .endpoint
            .as_deref()
            .ok_or_else(|| BackendError::Config("live mode needs `endpoint`".into()))?;
        let model = spec
            .model
            .clone()
            .ok_or_else(|| BackendError::Config("live mode needs `model`".into()))?;
        let api_key = match &spec.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                BackendError::Config(format!("environment variable `{var}` is not set"))
            })?),
            None => None,
        };
        let trimmed = endpoint.trim_end_matches('/');
        let url = if trimmed.ends_with("/chat/completions") {
            trimmed.to_string()
        } else {
            format!("{trimmed}/chat/completions")
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(spec.timeout_secs))
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(Self { client, url, model, api_key, sampling: spec.sampling, retry: spec.retry, limiter })
    }

    fn body(&self, request: &CompletionRequest) -> Value {
        let sampling = self.sampling.unwrap_or(request.context.sampling);
        json!({
            "model": self.model,
            "messages": request.messages,
            "temperature": sampling.temperature,
            "top_p": sampling.top_p,
        })
    }

    fn attempt(&self, body: &Value, prompt: &str) -> Result<Completion, String> {
        if let Some(l) = &self.limiter {
            l.acquire();
        }
        let mut req = self.client.post(&self.url).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| e.to_string())?;
        let status = resp.status();
        let text = resp.text().map_err(|e| e.to_string())?;
        if !status.is_success() {
            return Err(format!("HTTP {status}: {}", text.chars().take(200).collect::<String>()));
        }
        let v: Value = serde_json::from_str(&text).map_err(|e| format!("bad JSON: {e}"))?;
        let content = v["choices"][0]["message"]["content"]
            .as_str()
            .ok_or("response has no choices[0].message.content")?
            .to_string();
        let usage = Usage {
            input_tokens: v["usage"]["prompt_tokens"].as_u64().unwrap_or_else(|| estimate_tokens(prompt)),
            output_tokens: v["usage"]["completion_tokens"]
                .as_u64()
                .unwrap_or_else(|| estimate_tokens(&content)),
        };
        Ok(Completion { text: content, usage, failed_attempts: Vec::new() })
    }
}

impl DecisionBackend for LiveBackend {
    fn complete(&mut self, request: &CompletionRequest) -> Result<Completion, BackendError> {
        let body = self.body(request);
        let prompt = request.prompt_text();
        let mut failures = Vec::new();
        for attempt in 0..self.retry.max_attempts {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(self.retry.backoff_ms << (attempt - 1).min(16)));
            }
            match self.attempt(&body, &prompt) {
                Ok(mut completion) => {
                    completion.failed_attempts = failures;
                    return Ok(completion);
                }
                Err(e) => {
                    tracing::warn!(attempt = attempt + 1, error = %e, "chat completion failed");
                    failures.push(e);
                }
            }
        }
        Err(BackendError::Http {
            attempts: self.retry.max_attempts,
            last: failures.pop().unwrap_or_default(),
        })
    }
}
