//! JSON shapes shared by the CLI and the HTTP API.

use gesturegen_core::discourse::RhemeTheme;
use gesturegen_core::pipeline::{BmlOutput, PipelineError, UtteranceSelection};
use gesturegen_core::scheduler::{timeline_records, TimelineRecord};
use gesturegen_core::selector::GestureProposal;
use gesturegen_core::textproc::Utterance;
use serde::Serialize;

/// How a batch of utterances went, worst case first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Outcome {
    Ok,
    /// Some utterance failed because of its input, such as timings that
    /// miss a mark.
    InputFailure,
    /// Some utterance failed because the model could not be reached or
    /// never answered usefully.
    BackendFailure,
}

impl Outcome {
    pub fn of<T>(results: &[(Utterance, Result<T, PipelineError>)]) -> Self {
        results
            .iter()
            .map(|(_, r)| match r {
                Ok(_) => Outcome::Ok,
                Err(e) if e.is_backend_failure() => Outcome::BackendFailure,
                Err(_) => Outcome::InputFailure,
            })
            .max()
            .unwrap_or(Outcome::Ok)
    }
}

#[derive(Debug, Serialize)]
pub struct RankedProposal<'a> {
    /// 0 is the highest priority.
    pub priority: usize,
    #[serde(flatten)]
    pub proposal: &'a GestureProposal,
}

#[derive(Debug, Serialize)]
pub struct UtteranceOut<'a> {
    pub utterance_id: &'a str,
    pub text: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rheme_theme: Option<&'a RhemeTheme>,
    pub proposals: Vec<RankedProposal<'a>>,
    #[serde(skip_serializing_if = "<[_]>::is_empty")]
    pub warnings: &'a [String],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct SelectBody<'a> {
    pub utterances: Vec<UtteranceOut<'a>>,
}

impl<'a> SelectBody<'a> {
    pub fn new(results: &'a [(Utterance, Result<UtteranceSelection, PipelineError>)]) -> Self {
        let utterances = results
            .iter()
            .map(|(utt, r)| match r {
                Ok(s) => selection_out(s),
                Err(e) => UtteranceOut {
                    utterance_id: &utt.id,
                    text: &utt.text,
                    rheme_theme: None,
                    proposals: Vec::new(),
                    warnings: &[],
                    error: Some(e.to_string()),
                },
            })
            .collect();
        Self { utterances }
    }
}

fn selection_out(s: &UtteranceSelection) -> UtteranceOut<'_> {
    UtteranceOut {
        utterance_id: &s.utterance_id,
        text: &s.text,
        rheme_theme: s.rheme_theme.as_ref(),
        proposals: s
            .proposals
            .iter()
            .enumerate()
            .map(|(priority, proposal)| RankedProposal { priority, proposal })
            .collect(),
        warnings: &s.warnings,
        error: None,
    }
}

#[derive(Debug, Serialize)]
pub struct DocumentOut<'a> {
    pub utterance_id: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bml: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timeline: Option<Vec<TimelineRecord<'a>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct BmlBody<'a> {
    pub documents: Vec<DocumentOut<'a>>,
}

impl<'a> BmlBody<'a> {
    pub fn new(results: &'a [(Utterance, Result<BmlOutput, PipelineError>)]) -> Self {
        let documents = results
            .iter()
            .map(|(utt, r)| match r {
                Ok(o) => DocumentOut {
                    utterance_id: &utt.id,
                    bml: Some(&o.bml),
                    timeline: o.timeline.as_ref().map(timeline_records),
                    error: None,
                },
                Err(e) => DocumentOut {
                    utterance_id: &utt.id,
                    bml: None,
                    timeline: None,
                    error: Some(e.to_string()),
                },
            })
            .collect();
        Self { documents }
    }
}
