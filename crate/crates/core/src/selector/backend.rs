use std::collections::{HashMap, VecDeque};
use std::io::BufRead;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::Semaphore;

use super::prompt::inspect_prompt;
use super::Approach;

/// Sampling parameters forwarded to the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompletionParams {
    pub temperature: f32,
    pub max_tokens: u32,
    pub frequency_penalty: f32,
}

impl Default for CompletionParams {
    fn default() -> Self {
        super::PromptConfig::default().params()
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BackendError {
    #[error("{0}")]
    Unavailable(String),
    #[error("request timed out after {0:?}")]
    Timeout(Duration),
    #[error("backend answered HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("unexpected response body: {0}")]
    Malformed(String),
    #[error("no recorded exchange for approach {approach} and utterance {utterance:?}")]
    NotRecorded { approach: u8, utterance: String },
}

/// A text-completion model.
#[async_trait]
pub trait Backend: Send + Sync {
    async fn complete(&self, prompt: &str, params: &CompletionParams) -> Result<String, BackendError>;

    /// Short backend kind, e.g. "mock".
    fn name(&self) -> &str;

    fn model_id(&self) -> &str;
}

#[async_trait]
impl<B: Backend + ?Sized> Backend for Arc<B> {
    async fn complete(&self, prompt: &str, params: &CompletionParams) -> Result<String, BackendError> {
        (**self).complete(prompt, params).await
    }

    fn name(&self) -> &str {
        (**self).name()
    }

    fn model_id(&self) -> &str {
        (**self).model_id()
    }
}

#[async_trait]
impl<B: Backend + ?Sized> Backend for Box<B> {
    async fn complete(&self, prompt: &str, params: &CompletionParams) -> Result<String, BackendError> {
        (**self).complete(prompt, params).await
    }

    fn name(&self) -> &str {
        (**self).name()
    }

    fn model_id(&self) -> &str {
        (**self).model_id()
    }
}

/// Answers from a fixed queue and records every prompt it sees.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    script: Mutex<VecDeque<Result<String, BackendError>>>,
    prompts: Mutex<Vec<String>>,
}

impl ScriptedBackend {
    pub fn new(script: Vec<Result<String, BackendError>>) -> Self {
        Self {
            script: Mutex::new(script.into()),
            prompts: Mutex::new(Vec::new()),
        }
    }

    pub fn prompts(&self) -> Vec<String> {
        self.prompts.lock().unwrap().clone()
    }
}

#[async_trait]
impl Backend for ScriptedBackend {
    async fn complete(&self, prompt: &str, _params: &CompletionParams) -> Result<String, BackendError> {
        self.prompts.lock().unwrap().push(prompt.to_string());
        self.script
            .lock()
            .unwrap()
            .pop_front()
            .unwrap_or_else(|| Err(BackendError::Unavailable("script exhausted".into())))
    }

    fn name(&self) -> &str {
        "scripted"
    }

    fn model_id(&self) -> &str {
        "scripted"
    }
}

/// Wraps another backend and sleeps before each call, cycling through
/// `delays`.
pub struct DelayedBackend<B> {
    inner: B,
    delays: Vec<Duration>,
    calls: AtomicUsize,
}

impl<B: Backend> DelayedBackend<B> {
    pub fn new(inner: B, delays: Vec<Duration>) -> Self {
        Self {
            inner,
            delays,
            calls: AtomicUsize::new(0),
        }
    }
}

#[async_trait]
impl<B: Backend> Backend for DelayedBackend<B> {
    async fn complete(&self, prompt: &str, params: &CompletionParams) -> Result<String, BackendError> {
        if !self.delays.is_empty() {
            let n = self.calls.fetch_add(1, Ordering::Relaxed);
            tokio::time::sleep(self.delays[n % self.delays.len()]).await;
        }
        self.inner.complete(prompt, params).await
    }

    fn name(&self) -> &str {
        self.inner.name()
    }

    fn model_id(&self) -> &str {
        self.inner.model_id()
    }
}

/// Caps the number of calls in flight on `inner`, across every task that
/// shares this value.
pub struct BoundedBackend<B> {
    inner: B,
    permits: Semaphore,
}

impl<B: Backend> BoundedBackend<B> {
    pub fn new(inner: B, limit: usize) -> Self {
        Self {
            inner,
            permits: Semaphore::new(limit.max(1)),
        }
    }
}

#[async_trait]
impl<B: Backend> Backend for BoundedBackend<B> {
    async fn complete(&self, prompt: &str, params: &CompletionParams) -> Result<String, BackendError> {
        let _permit = self
            .permits
            .acquire()
            .await
            .map_err(|e| BackendError::Unavailable(e.to_string()))?;
        self.inner.complete(prompt, params).await
    }

    fn name(&self) -> &str {
        self.inner.name()
    }

    fn model_id(&self) -> &str {
        self.inner.model_id()
    }
}

/// One line of a recorded-exchange file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordedExchange {
    pub approach: Approach,
    pub utterance_id: String,
    pub utterance: String,
    pub response: String,
}

/// Replays recorded model responses, keyed by the prompt's approach and
/// utterance text.
#[derive(Debug, Clone, Default)]
pub struct ReplayBackend {
    responses: HashMap<(Approach, String), String>,
}

impl ReplayBackend {
    pub fn new(records: impl IntoIterator<Item = RecordedExchange>) -> Self {
        let responses = records
            .into_iter()
            .map(|r| ((r.approach, normalize_space(&r.utterance)), r.response))
            .collect();
        Self { responses }
    }

    /// Reads JSON Lines of [`RecordedExchange`]; blank lines are skipped.
    pub fn load<R: BufRead>(source: R) -> Result<Self, String> {
        let mut records = Vec::new();
        for (i, line) in source.lines().enumerate() {
            let line = line.map_err(|e| e.to_string())?;
            if line.trim().is_empty() {
                continue;
            }
            let record = serde_json::from_str(&line).map_err(|e| format!("line {}: {e}", i + 1))?;
            records.push(record);
        }
        Ok(Self::new(records))
    }

    /// Recorded selections for the test split of the bundled replica corpus.
    pub fn bundled() -> Self {
        let text = include_str!("../../data/recorded_exchanges.jsonl");
        Self::load(text.as_bytes()).expect("bundled recordings are valid")
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

fn normalize_space(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[async_trait]
impl Backend for ReplayBackend {
    async fn complete(&self, prompt: &str, _params: &CompletionParams) -> Result<String, BackendError> {
        let info = inspect_prompt(prompt);
        let approach = info.approach();
        let utterance = normalize_space(info.utterance.unwrap_or_default());
        self.responses
            .get(&(approach, utterance.clone()))
            .cloned()
            .ok_or(BackendError::NotRecorded {
                approach: approach.index(),
                utterance,
            })
    }

    fn name(&self) -> &str {
        "replay"
    }

    fn model_id(&self) -> &str {
        "recorded"
    }
}
