//! Rheme/theme analysis, rheme-first gesture ordering and rheme coverage.
//!
//! The theme is what an utterance is about and the rheme is what it says
//! about it. Gestures whose span overlaps the rheme are scheduled first.

use std::collections::{BTreeMap, HashMap};
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::lexicon::{AnnotationRecord, GestureCategory};
use crate::selector::proposal::extract_json;
use crate::selector::{exchange, Backend, BackendError, BackendExchange, CompletionParams, GestureProposal, PromptTemplates};
use crate::textproc::{locate_phrase, SpanError, Utterance, WordSpan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RhemeTheme {
    pub theme: Option<WordSpan>,
    pub rheme: WordSpan,
}

impl RhemeTheme {
    /// The whole utterance as rheme, no theme.
    pub fn all_rheme(len: usize) -> Self {
        Self {
            theme: None,
            rheme: WordSpan {
                start: 0,
                end: len.saturating_sub(1),
            },
        }
    }

    pub fn validate(&self, len: usize) -> Result<(), DiscourseError> {
        self.rheme.within(len)?;
        if let Some(theme) = self.theme {
            theme.within(len)?;
            if theme.overlaps(self.rheme) {
                return Err(DiscourseError::ThemeOverlapsRheme {
                    theme,
                    rheme: self.rheme,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum DiscourseError {
    #[error("utterance has no words")]
    EmptyUtterance,
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("no locatable rheme after {} attempts", responses.len())]
    DiscourseFailure { responses: Vec<String> },
    #[error("no rheme analysis for utterance {0}")]
    MissingAnalysis(String),
    #[error("theme {theme} overlaps rheme {rheme}")]
    ThemeOverlapsRheme { theme: WordSpan, rheme: WordSpan },
    #[error(transparent)]
    Span(#[from] SpanError),
    #[error("line {line}: {message}")]
    Fixture { line: usize, message: String },
    #[error("line {line}: duplicate utterance id {utterance_id}")]
    DuplicateFixture { line: usize, utterance_id: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RhemeAnalysis {
    pub rheme_theme: RhemeTheme,
    pub exchanges: Vec<BackendExchange>,
}

fn phrase_field(value: &Value, key: &str) -> Option<String> {
    value
        .get(key)
        .and_then(Value::as_str)
        .map(str::trim)
        .filter(|s| !s.is_empty() && !s.eq_ignore_ascii_case("null"))
        .map(str::to_string)
}

enum Reading {
    Done(RhemeTheme),
    Retry,
}

fn read_response(raw: &str, utt: &Utterance) -> Reading {
    let Some((value, _)) = extract_json(raw) else {
        return Reading::Retry;
    };
    let theme = phrase_field(&value, "theme").and_then(|p| locate_phrase(utt, &p).ok());
    let Some(theme) = theme else {
        return Reading::Done(RhemeTheme::all_rheme(utt.len()));
    };
    let rheme = phrase_field(&value, "rheme").and_then(|p| locate_phrase(utt, &p).ok());
    match rheme {
        Some(rheme) if theme.overlaps(rheme) => Reading::Done(RhemeTheme { theme: None, rheme }),
        Some(rheme) => Reading::Done(RhemeTheme {
            theme: Some(theme),
            rheme,
        }),
        None => Reading::Retry,
    }
}

/// Asks the backend for the theme and rheme of `utt`.
///
/// A missing or unlocatable theme makes the whole utterance rheme. An
/// unlocatable rheme is retried up to `retries` times.
pub async fn analyze_rheme_theme(
    utt: &Utterance,
    backend: &dyn Backend,
    templates: &PromptTemplates,
    params: &CompletionParams,
    retries: u32,
) -> Result<RhemeAnalysis, DiscourseError> {
    if utt.is_empty() {
        return Err(DiscourseError::EmptyUtterance);
    }
    let prompt = templates.rheme_theme(utt);
    let mut exchanges = Vec::new();
    for _ in 0..=retries {
        let ex = exchange(backend, prompt.clone(), params).await?;
        let reading = read_response(&ex.raw_response, utt);
        exchanges.push(ex);
        if let Reading::Done(rheme_theme) = reading {
            return Ok(RhemeAnalysis {
                rheme_theme,
                exchanges,
            });
        }
    }
    Err(DiscourseError::DiscourseFailure {
        responses: exchanges.into_iter().map(|e| e.raw_response).collect(),
    })
}

/// Stable partition: proposals overlapping the rheme first. Sets
/// `in_rheme` on every proposal.
pub fn prioritize(proposals: Vec<GestureProposal>, rt: &RhemeTheme) -> Vec<GestureProposal> {
    let (mut first, rest): (Vec<_>, Vec<_>) = proposals
        .into_iter()
        .map(|mut p| {
            p.in_rheme = Some(p.span.overlaps(rt.rheme));
            p
        })
        .partition(|p| p.in_rheme == Some(true));
    first.extend(rest);
    first
}

/// When an annotated gesture counts as occurring within the rheme.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OverlapRule {
    /// At least one shared token.
    #[default]
    Overlap,
    /// Every token of the gesture inside the rheme.
    Containment,
}

impl OverlapRule {
    pub fn holds(self, gesture: WordSpan, rheme: WordSpan) -> bool {
        match self {
            OverlapRule::Overlap => gesture.overlaps(rheme),
            OverlapRule::Containment => rheme.contains(gesture),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageCount {
    pub within_rheme: usize,
    pub outside_rheme: usize,
    pub outside_by_category: BTreeMap<GestureCategory, usize>,
}

impl CoverageCount {
    pub fn total(&self) -> usize {
        self.within_rheme + self.outside_rheme
    }
}

pub fn rheme_coverage<'a>(
    annotations: impl IntoIterator<Item = &'a AnnotationRecord>,
    analyses: &HashMap<String, RhemeTheme>,
    rule: OverlapRule,
) -> Result<CoverageCount, DiscourseError> {
    let mut count = CoverageCount::default();
    for a in annotations {
        let rt = analyses
            .get(&a.utterance_id)
            .ok_or_else(|| DiscourseError::MissingAnalysis(a.utterance_id.clone()))?;
        if rule.holds(a.span, rt.rheme) {
            count.within_rheme += 1;
        } else {
            count.outside_rheme += 1;
            *count.outside_by_category.entry(a.category).or_default() += 1;
        }
    }
    Ok(count)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FixtureRecord {
    utterance_id: String,
    theme: Option<WordSpan>,
    rheme: WordSpan,
}

/// Reads recorded rheme/theme spans, JSON Lines of
/// `{"utterance_id", "theme": [s,e] | null, "rheme": [s,e]}`.
pub fn load_rheme_fixture<R: BufRead>(source: R) -> Result<HashMap<String, RhemeTheme>, DiscourseError> {
    let mut out = HashMap::new();
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let r: FixtureRecord = serde_json::from_str(&line).map_err(|e| DiscourseError::Fixture {
            line: n,
            message: e.to_string(),
        })?;
        if let Some(theme) = r.theme {
            if theme.overlaps(r.rheme) {
                return Err(DiscourseError::Fixture {
                    line: n,
                    message: format!("theme {theme} overlaps rheme {}", r.rheme),
                });
            }
        }
        let rt = RhemeTheme {
            theme: r.theme,
            rheme: r.rheme,
        };
        if out.insert(r.utterance_id.clone(), rt).is_some() {
            return Err(DiscourseError::DuplicateFixture {
                line: n,
                utterance_id: r.utterance_id,
            });
        }
    }
    Ok(out)
}

pub fn save_rheme_fixture<'a>(analyses: impl IntoIterator<Item = (&'a String, &'a RhemeTheme)>) -> String {
    let mut records: Vec<_> = analyses.into_iter().collect();
    records.sort_by(|a, b| a.0.cmp(b.0));
    records
        .into_iter()
        .map(|(id, rt)| {
            let record = FixtureRecord {
                utterance_id: id.clone(),
                theme: rt.theme,
                rheme: rt.rheme,
            };
            serde_json::to_string(&record).expect("fixture record serializes") + "\n"
        })
        .collect()
}
