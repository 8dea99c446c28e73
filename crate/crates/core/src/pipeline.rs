//! Text in, prioritized proposals and BML out. The CLI and the HTTP service
//! both go through [`Pipeline`] so they produce the same documents.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Duration;

use futures::stream::{self, StreamExt};
use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::bml::{build_bml, serialize_with, BmlDocument, Dialect};
use crate::discourse::{analyze_rheme_theme, prioritize, DiscourseError, RhemeTheme};
use crate::scheduler::{
    export_timeline, resolve_schedule, synthetic_timings, ScheduleError, ScheduleParams, Timeline,
    WordTiming,
};
use crate::selector::{select_gestures, Backend, GestureProposal, PromptConfig, PromptContext, SelectError};
use crate::textproc::{split_utterances, Utterance};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Select(#[from] SelectError),
    #[error(transparent)]
    Discourse(#[from] DiscourseError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}

impl PipelineError {
    /// True when the failure came from talking to the model rather than
    /// from the input.
    pub fn is_backend_failure(&self) -> bool {
        matches!(
            self,
            PipelineError::Select(SelectError::BackendUnavailable(_) | SelectError::SelectionFailure { .. })
                | PipelineError::Discourse(DiscourseError::Backend(_) | DiscourseError::DiscourseFailure { .. })
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOptions {
    pub prompt: PromptConfig,
    pub schedule: ScheduleParams,
    pub seconds_per_word: f64,
    /// Extra attempts when the rheme phrase cannot be located.
    pub discourse_retries: u32,
    /// Concurrent utterances in flight.
    pub parallelism: usize,
    pub dialect: Dialect,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            prompt: PromptConfig::default(),
            schedule: ScheduleParams::default(),
            seconds_per_word: 0.3,
            discourse_retries: 1,
            parallelism: 4,
            dialect: Dialect::Extended,
        }
    }
}

/// Gestures chosen for one utterance, rheme-overlapping ones first.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UtteranceSelection {
    pub utterance_id: String,
    pub text: String,
    pub rheme_theme: Option<RhemeTheme>,
    pub proposals: Vec<GestureProposal>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub latency: Option<Duration>,
}

/// Word timings supplied by the caller: one map for every utterance, or one
/// per utterance id.
#[derive(Debug, Clone, PartialEq)]
pub enum TimingSource {
    Shared(WordTiming),
    PerUtterance(HashMap<String, WordTiming>),
}

impl TimingSource {
    pub fn from_value(value: Value) -> Result<Self, ScheduleError> {
        let bad = |e: serde_json::Error| ScheduleError::Format(e.to_string());
        match &value {
            Value::Object(map) if !map.is_empty() && map.values().all(Value::is_object) => {
                Ok(TimingSource::PerUtterance(serde_json::from_value(value).map_err(bad)?))
            }
            _ => Ok(TimingSource::Shared(serde_json::from_value(value).map_err(bad)?)),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ScheduleError> {
        let value = serde_json::from_str(text).map_err(|e| ScheduleError::Format(e.to_string()))?;
        Self::from_value(value)
    }

    fn for_utterance(&self, id: &str) -> Option<&WordTiming> {
        match self {
            TimingSource::Shared(t) => Some(t),
            TimingSource::PerUtterance(map) => map.get(id),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BmlOutput {
    pub selection: UtteranceSelection,
    pub document: BmlDocument,
    pub bml: String,
    pub timeline: Option<Timeline>,
}

impl BmlOutput {
    pub fn timeline_jsonl(&self) -> Option<String> {
        self.timeline.as_ref().map(export_timeline)
    }
}

pub struct Pipeline {
    backend: Arc<dyn Backend>,
    ctx: PromptContext,
    options: PipelineOptions,
}

impl Pipeline {
    pub fn new(backend: Arc<dyn Backend>, ctx: PromptContext, options: PipelineOptions) -> Self {
        Self { backend, ctx, options }
    }

    pub fn backend(&self) -> &dyn Backend {
        self.backend.as_ref()
    }

    pub fn context(&self) -> &PromptContext {
        &self.ctx
    }

    pub fn options(&self) -> &PipelineOptions {
        &self.options
    }

    /// Selects gestures for `utt` and orders them rheme first. A failed
    /// rheme analysis leaves the selection order unchanged, with a warning.
    pub async fn select(&self, utt: &Utterance) -> Result<UtteranceSelection, PipelineError> {
        let selection = select_gestures(utt, &self.options.prompt, self.backend(), &self.ctx).await?;
        let latency = selection.latency();
        let mut warnings = selection.warnings;
        let mut proposals = selection.proposals;
        let mut rheme_theme = None;
        if !proposals.is_empty() {
            let analysis = analyze_rheme_theme(
                utt,
                self.backend(),
                &self.ctx.templates,
                &self.options.prompt.params(),
                self.options.discourse_retries,
            )
            .await;
            match analysis {
                Ok(a) => {
                    proposals = prioritize(proposals, &a.rheme_theme);
                    rheme_theme = Some(a.rheme_theme);
                }
                Err(DiscourseError::DiscourseFailure { .. }) => {
                    warnings.push("rheme analysis failed; keeping selection order".into());
                }
                Err(e) => return Err(e.into()),
            }
        }
        Ok(UtteranceSelection {
            utterance_id: utt.id.clone(),
            text: utt.text.clone(),
            rheme_theme,
            proposals,
            warnings,
            latency,
        })
    }

    /// Splits `text` into utterances and runs [`Pipeline::select`] on each,
    /// keeping input order.
    pub async fn select_text(&self, text: &str) -> Vec<(Utterance, Result<UtteranceSelection, PipelineError>)> {
        let utterances = split_utterances(text);
        stream::iter(utterances)
            .map(|utt| async move {
                let result = self.select(&utt).await;
                (utt, result)
            })
            .buffered(self.options.parallelism.max(1))
            .collect()
            .await
    }

    pub fn document(&self, utt: &Utterance, selection: &UtteranceSelection) -> BmlDocument {
        build_bml(utt, &selection.proposals, &self.ctx.lexicon)
    }

    /// Schedules `doc` against the given timings, or synthetic ones at the
    /// configured speaking rate.
    pub fn timeline(
        &self,
        utt: &Utterance,
        doc: &BmlDocument,
        timings: Option<&WordTiming>,
    ) -> Result<Timeline, PipelineError> {
        let synthetic;
        let timings = match timings {
            Some(t) => t,
            None => {
                synthetic = synthetic_timings(utt, self.options.seconds_per_word)?;
                &synthetic
            }
        };
        Ok(resolve_schedule(doc, timings, self.options.schedule)?)
    }

    /// Full text-to-BML run. With `timeline` set, each document is also
    /// scheduled, against `timings` when given.
    pub async fn bml_text(
        &self,
        text: &str,
        timeline: bool,
        timings: Option<&TimingSource>,
    ) -> Vec<(Utterance, Result<BmlOutput, PipelineError>)> {
        let selected = self.select_text(text).await;
        selected
            .into_iter()
            .map(|(utt, result)| {
                let output = result.and_then(|selection| {
                    let document = self.document(&utt, &selection);
                    let bml = serialize_with(&document, self.options.dialect);
                    let timeline = if timeline || timings.is_some() {
                        let t = timings.and_then(|t| t.for_utterance(&utt.id));
                        Some(self.timeline(&utt, &document, t)?)
                    } else {
                        None
                    };
                    Ok(BmlOutput {
                        selection,
                        document,
                        bml,
                        timeline,
                    })
                });
                (utt, output)
            })
            .collect()
    }
}
