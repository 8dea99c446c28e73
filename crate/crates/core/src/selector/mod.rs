//! Gesture selection: prompt construction, backend exchange and proposal
//! parsing.

mod backend;
mod mock;
pub mod prompt;
pub mod proposal;
mod remote;
pub mod spatial;

use std::collections::BTreeSet;
use std::fmt;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexicon::{Corpus, GestureLexicon};
use crate::textproc::{Utterance, WordSpan};

pub use backend::{
    Backend, BackendError, BoundedBackend, CompletionParams, DelayedBackend, RecordedExchange, ReplayBackend,
    ScriptedBackend,
};
pub use mock::MockBackend;
pub use prompt::{build_prompt, PromptError, PromptTemplates};
pub use proposal::{parse_proposals, ParsedProposals, ProposalError};
pub use remote::{RemoteBackend, RemoteConfig, API_KEY_ENV};
pub use spatial::{parse_spatial, spatial_select, SpatialSelection};

/// The four prompting approaches: intent list given or not, crossed with
/// annotated examples given or not.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Approach {
    Baseline,
    IntentList,
    Examples,
    Combined,
}

impl Approach {
    pub const ALL: [Approach; 4] = [
        Approach::Baseline,
        Approach::IntentList,
        Approach::Examples,
        Approach::Combined,
    ];

    pub fn index(self) -> u8 {
        self as u8
    }

    pub fn from_index(index: u8) -> Option<Self> {
        Self::ALL.get(index as usize).copied()
    }

    pub fn from_cell(intent_list: bool, examples: bool) -> Self {
        match (intent_list, examples) {
            (false, false) => Approach::Baseline,
            (true, false) => Approach::IntentList,
            (false, true) => Approach::Examples,
            (true, true) => Approach::Combined,
        }
    }

    pub fn has_intent_list(self) -> bool {
        matches!(self, Approach::IntentList | Approach::Combined)
    }

    pub fn has_examples(self) -> bool {
        matches!(self, Approach::Examples | Approach::Combined)
    }
}

impl fmt::Display for Approach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.index())
    }
}

impl Serialize for Approach {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(self.index())
    }
}

impl<'de> Deserialize<'de> for Approach {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let index = u8::deserialize(d)?;
        Approach::from_index(index)
            .ok_or_else(|| serde::de::Error::custom(format!("approach must be 0..=3, got {index}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptConfig {
    pub approach: Approach,
    pub temperature: f32,
    pub max_tokens: u32,
    pub frequency_penalty: f32,
    /// Ask only for intent and phrase, not physical properties.
    pub truncated: bool,
    /// Extra attempts after a response with no readable JSON.
    pub retries: u32,
}

impl Default for PromptConfig {
    fn default() -> Self {
        Self {
            approach: Approach::Combined,
            temperature: 0.2,
            max_tokens: 256,
            frequency_penalty: 0.0,
            truncated: false,
            retries: 2,
        }
    }
}

impl PromptConfig {
    pub fn params(&self) -> CompletionParams {
        CompletionParams {
            temperature: self.temperature,
            max_tokens: self.max_tokens,
            frequency_penalty: self.frequency_penalty,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Center,
    Right,
}

/// Where in gesture space a gesture begins and ends.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpatialExtent {
    pub begin: BTreeSet<Side>,
    pub end: BTreeSet<Side>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GestureProposal {
    pub intent: String,
    pub phrase: String,
    /// Re-derived from `phrase`; word numbers reported by the model are ignored.
    pub span: WordSpan,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub physical_description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spatial: Option<SpatialExtent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_schema: Option<String>,
    /// Set by rheme prioritization.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub in_rheme: Option<bool>,
}

impl GestureProposal {
    pub fn new(intent: impl Into<String>, phrase: impl Into<String>, span: WordSpan) -> Self {
        Self {
            intent: intent.into(),
            phrase: phrase.into(),
            span,
            physical_description: None,
            spatial: None,
            image_schema: None,
            in_rheme: None,
        }
    }
}

/// One prompt/response round trip with a backend.
#[derive(Debug, Clone, PartialEq)]
pub struct BackendExchange {
    pub prompt: String,
    pub raw_response: String,
    pub latency: Duration,
    pub model_id: String,
}

/// Times one completion call, wall clock.
pub async fn exchange(
    backend: &dyn Backend,
    prompt: String,
    params: &CompletionParams,
) -> Result<BackendExchange, BackendError> {
    let started = Instant::now();
    let raw_response = backend.complete(&prompt, params).await?;
    Ok(BackendExchange {
        prompt,
        raw_response,
        latency: started.elapsed(),
        model_id: backend.model_id().to_string(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub proposals: Vec<GestureProposal>,
    /// Every exchange made, in order; empty when the utterance had no words.
    pub exchanges: Vec<BackendExchange>,
    pub warnings: Vec<String>,
}

impl Selection {
    pub fn final_exchange(&self) -> Option<&BackendExchange> {
        self.exchanges.last()
    }

    pub fn latency(&self) -> Option<Duration> {
        self.final_exchange().map(|e| e.latency)
    }
}

#[derive(Debug, Error)]
pub enum SelectError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("backend unavailable: {0}")]
    BackendUnavailable(#[from] BackendError),
    #[error(transparent)]
    Proposals(#[from] ProposalError),
    #[error("no usable response after {} attempts", responses.len())]
    SelectionFailure { responses: Vec<String> },
}

/// Everything a prompt is built from besides the utterance.
#[derive(Debug, Clone, Default)]
pub struct PromptContext {
    pub templates: PromptTemplates,
    pub lexicon: GestureLexicon,
    pub corpus: Option<Corpus>,
}

impl PromptContext {
    pub fn new(lexicon: GestureLexicon, corpus: Option<Corpus>) -> Self {
        Self {
            templates: PromptTemplates::builtin(),
            lexicon,
            corpus,
        }
    }

    pub fn build_prompt(&self, config: &PromptConfig, utt: &Utterance) -> Result<String, PromptError> {
        build_prompt(&self.templates, config, utt, &self.lexicon, self.corpus.as_ref())
    }
}

/// Asks the backend for gestures on `utt`. A response without any JSON is
/// retried up to `config.retries` times with a format reminder appended.
pub async fn select_gestures(
    utt: &Utterance,
    config: &PromptConfig,
    backend: &dyn Backend,
    ctx: &PromptContext,
) -> Result<Selection, SelectError> {
    let mut selection = Selection {
        proposals: Vec::new(),
        exchanges: Vec::new(),
        warnings: Vec::new(),
    };
    if utt.is_empty() {
        return Ok(selection);
    }
    let base = ctx.build_prompt(config, utt)?;
    let params = config.params();
    for attempt in 0..=config.retries {
        let prompt = if attempt == 0 {
            base.clone()
        } else {
            format!("{base}\n{}", ctx.templates.reminder())
        };
        let ex = exchange(backend, prompt, &params).await?;
        let parsed = parse_proposals(&ex.raw_response, utt);
        selection.exchanges.push(ex);
        match parsed {
            Ok(parsed) => {
                selection.proposals = parsed.proposals;
                selection.warnings.extend(parsed.warnings);
                return Ok(selection);
            }
            Err(ProposalError::EmptyProposalSet { warnings }) => {
                selection.warnings.extend(warnings);
                return Ok(selection);
            }
            Err(ProposalError::ParseFailure) => {
                tracing::debug!(utterance = %utt.id, attempt, "response had no JSON value");
            }
        }
    }
    Err(SelectError::SelectionFailure {
        responses: selection.exchanges.into_iter().map(|e| e.raw_response).collect(),
    })
}
