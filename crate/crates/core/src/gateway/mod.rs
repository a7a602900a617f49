//! Boundary to language models: live chat-completions, deterministic
//! scripts, and transcript replay, all metered the same way.

mod live;
mod replay;
mod report;
mod scripted;

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::reasoning::PromptContext;

pub use live::{LiveBackend, RateLimiter};
pub use replay::{load_transcripts, read_transcript_records, write_transcripts, ReplayBackend, TranscriptStreams};
pub use report::{tally_report, TallyRow};
pub use scripted::{Script, ScriptedBackend};

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("request failed after {attempts} attempt(s): {last}")]
    Http { attempts: u32, last: String },
    #[error("transcript stream `{0}` is exhausted")]
    ReplayExhausted(String),
    #[error("transcript error: {0}")]
    Transcript(String),
    #[error("script error: {0}")]
    Script(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sampling {
    pub temperature: f64,
    pub top_p: f64,
}

impl Default for Sampling {
    fn default() -> Self {
        Self { temperature: 0.7, top_p: 0.9 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

impl Usage {
    /// Deterministic tokenizer proxy: one token per four characters, rounded up.
    pub fn estimate(prompt: &str, response: &str) -> Self {
        Self { input_tokens: estimate_tokens(prompt), output_tokens: estimate_tokens(response) }
    }
}

pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

/// Running token totals; `total == input_tokens + output_tokens` always.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageTally {
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub total: u64,
    pub call_count: u64,
}

impl UsageTally {
    pub fn record(&mut self, usage: Usage) {
        self.input_tokens += usage.input_tokens;
        self.output_tokens += usage.output_tokens;
        self.total = self.input_tokens + self.output_tokens;
        self.call_count += 1;
    }

    pub fn merged(&self, other: &UsageTally) -> UsageTally {
        let input_tokens = self.input_tokens + other.input_tokens;
        let output_tokens = self.output_tokens + other.output_tokens;
        UsageTally {
            input_tokens,
            output_tokens,
            total: input_tokens + output_tokens,
            call_count: self.call_count + other.call_count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: "system".into(), content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: "user".into(), content: content.into() }
    }
}

#[derive(Debug, Clone)]
pub struct CompletionRequest {
    pub messages: Vec<ChatMessage>,
    pub context: PromptContext,
}

impl CompletionRequest {
    pub fn prompt_text(&self) -> String {
        self.messages
            .iter()
            .map(|m| format!("[{}]\n{}", m.role, m.content))
            .collect::<Vec<_>>()
            .join("\n\n")
    }

    /// Hash of the rendered prompt and sampling parameters.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.prompt_text().as_bytes());
        let s = self.context.sampling;
        hasher.update(format!("|t={}|p={}", s.temperature, s.top_p).as_bytes());
        hex::encode(hasher.finalize())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub usage: Usage,
    /// Errors of attempts that failed before this one succeeded.
    pub failed_attempts: Vec<String>,
}

/// Anything that turns a rendered prompt into text: a model endpoint, a
/// deterministic script, or a recorded transcript.
pub trait DecisionBackend: Send {
    fn complete(&mut self, request: &CompletionRequest) -> Result<Completion, BackendError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub stream: String,
    pub seq: u64,
    pub request_hash: String,
    pub prompt: Vec<ChatMessage>,
    pub response: String,
    pub usage: Usage,
    pub status: CallStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Metering wrapper: every call lands in the transcript and the tally.
pub struct Gateway {
    inner: Box<dyn DecisionBackend>,
    stream: String,
    transcript: Vec<TranscriptRecord>,
    tally: UsageTally,
}

impl Gateway {
    pub fn new(inner: Box<dyn DecisionBackend>, stream: impl Into<String>) -> Self {
        Self { inner, stream: stream.into(), transcript: Vec::new(), tally: UsageTally::default() }
    }

    pub fn tally(&self) -> UsageTally {
        self.tally
    }

    pub fn transcript(&self) -> &[TranscriptRecord] {
        &self.transcript
    }

    fn log(&mut self, request: &CompletionRequest, hash: &str, response: String, usage: Usage, error: Option<String>) {
        let status = if error.is_none() { CallStatus::Ok } else { CallStatus::Failed };
        self.transcript.push(TranscriptRecord {
            stream: self.stream.clone(),
            seq: self.transcript.len() as u64,
            request_hash: hash.to_string(),
            prompt: request.messages.clone(),
            response,
            usage,
            status,
            error,
        });
    }
}

impl DecisionBackend for Gateway {
    fn complete(&mut self, request: &CompletionRequest) -> Result<Completion, BackendError> {
        let hash = request.hash();
        match self.inner.complete(request) {
            Ok(completion) => {
                for err in &completion.failed_attempts {
                    self.log(request, &hash, String::new(), Usage::default(), Some(err.clone()));
                }
                self.log(request, &hash, completion.text.clone(), completion.usage, None);
                self.tally.record(completion.usage);
                Ok(completion)
            }
            Err(e) => {
                self.log(request, &hash, String::new(), Usage::default(), Some(e.to_string()));
                Err(e)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendMode {
    Live,
    Scripted,
    Replay,
}

impl std::str::FromStr for BackendMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "live" => Ok(BackendMode::Live),
            "scripted" => Ok(BackendMode::Scripted),
            "replay" => Ok(BackendMode::Replay),
            other => Err(format!("unknown backend mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 3, backoff_ms: 500 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendSpec {
    pub mode: BackendMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    /// Name of the environment variable holding the API key.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript: Option<PathBuf>,
    /// Overrides the experiment-level sampling parameters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampling: Option<Sampling>,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requests_per_minute: Option<u32>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_timeout() -> u64 {
    120
}

impl BackendSpec {
    pub fn scripted(script: impl Into<String>) -> Self {
        Self {
            mode: BackendMode::Scripted,
            endpoint: None,
            model: None,
            api_key_env: None,
            script: Some(script.into()),
            transcript: None,
            sampling: None,
            retry: RetryPolicy::default(),
            requests_per_minute: None,
            timeout_secs: default_timeout(),
        }
    }

    /// Stable label recorded in match configs; identical across record and replay.
    pub fn label(&self) -> String {
        match (&self.model, &self.script) {
            (Some(m), _) => m.clone(),
            (None, Some(s)) => format!("script:{s}"),
            (None, None) => "unnamed".into(),
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        match self.mode {
            BackendMode::Live => {
                if self.endpoint.is_none() || self.model.is_none() {
                    return Err(BackendError::Config("live mode needs `endpoint` and `model`".into()));
                }
                if let Some(var) = &self.api_key_env {
                    if std::env::var(var).is_err() {
                        return Err(BackendError::Config(format!("environment variable `{var}` is not set")));
                    }
                }
            }
            BackendMode::Scripted => {
                let id = self
                    .script
                    .as_deref()
                    .ok_or_else(|| BackendError::Config("scripted mode needs `script`".into()))?;
                Script::parse(id)?;
            }
            BackendMode::Replay => {
                let path = self
                    .transcript
                    .as_ref()
                    .ok_or_else(|| BackendError::Config("replay mode needs `transcript`".into()))?;
                if !path.exists() {
                    return Err(BackendError::Config(format!(
                        "transcript {} does not exist",
                        path.display()
                    )));
                }
            }
        }
        if self.retry.max_attempts == 0 {
            return Err(BackendError::Config("retry.max_attempts must be at least 1".into()));
        }
        Ok(())
    }
}

/// Shared resources for building backends across concurrent matches.
#[derive(Clone, Default)]
pub struct BackendFactory {
    transcripts: Option<Arc<TranscriptStreams>>,
    limiter: Option<Arc<RateLimiter>>,
}

impl BackendFactory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_transcripts(mut self, streams: TranscriptStreams) -> Self {
        self.transcripts = Some(Arc::new(streams));
        self
    }

    pub fn with_rate_limit(mut self, requests_per_minute: u32) -> Self {
        self.limiter = Some(Arc::new(RateLimiter::per_minute(requests_per_minute)));
        self
    }

    /// Builds the metered backend for one agent stream (e.g. `r3/a0`).
    pub fn build(&self, spec: &BackendSpec, stream: &str) -> Result<Gateway, BackendError> {
        let inner: Box<dyn DecisionBackend> = match spec.mode {
            BackendMode::Scripted => {
                Box::new(ScriptedBackend::new(Script::parse(spec.script.as_deref().unwrap_or(""))?))
            }
            BackendMode::Replay => {
                let streams = self
                    .transcripts
                    .as_ref()
                    .ok_or_else(|| BackendError::Config("replay mode without loaded transcripts".into()))?;
                Box::new(ReplayBackend::new(stream, streams.stream(stream)))
            }
            BackendMode::Live => {
                let limiter = match (&self.limiter, spec.requests_per_minute) {
                    (Some(l), _) => Some(l.clone()),
                    (None, Some(rpm)) => Some(Arc::new(RateLimiter::per_minute(rpm))),
                    (None, None) => None,
                };
                Box::new(LiveBackend::from_spec(spec, limiter)?)
            }
        };
        Ok(Gateway::new(inner, stream))
    }
}
