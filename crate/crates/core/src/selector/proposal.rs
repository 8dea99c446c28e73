//! Tolerant extraction of gesture proposals from model output.
//!
//! Models wrap their JSON in prose or code fences, so the parser takes the
//! first balanced `[...]` or `{...}` run that is valid JSON.

use serde_json::{Map, Value};
use thiserror::Error;

use super::GestureProposal;
use crate::textproc::{locate_phrase, Utterance};

/// Upper bound on candidate start positions tried per response.
const MAX_CANDIDATES: usize = 256;

const INTENT_KEYS: &[&str] = &["intent", "gesture", "gestural_intent", "gesture_name", "name"];
const PHRASE_KEYS: &[&str] = &["phrase", "associated_phrase", "associated phrase", "text"];
const DESCRIPTION_KEYS: &[&str] = &[
    "description",
    "physical_properties",
    "physical_description",
    "physical properties",
];
const LIST_KEYS: &[&str] = &["gestures", "proposals"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProposalError {
    #[error("no JSON value found in response")]
    ParseFailure,
    #[error("no usable gesture records ({} rejected)", warnings.len())]
    EmptyProposalSet { warnings: Vec<String> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedProposals {
    pub proposals: Vec<GestureProposal>,
    /// One entry per rejected record.
    pub warnings: Vec<String>,
}

/// Byte index one past the bracket closing the one at `start`, skipping over
/// string literals.
fn balanced_end(bytes: &[u8], start: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if in_string {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'[' | b'{' => depth += 1,
            b']' | b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i + 1);
                }
            }
            _ => {}
        }
    }
    None
}

/// The first JSON array or object embedded in `raw`, with its byte range.
pub fn extract_json(raw: &str) -> Option<(Value, std::ops::Range<usize>)> {
    let bytes = raw.as_bytes();
    bytes
        .iter()
        .enumerate()
        .filter(|(_, &b)| b == b'[' || b == b'{')
        .take(MAX_CANDIDATES)
        .find_map(|(start, _)| {
            let end = balanced_end(bytes, start)?;
            let value = serde_json::from_str(&raw[start..end]).ok()?;
            Some((value, start..end))
        })
}

fn field<'a>(record: &'a Map<String, Value>, keys: &[&str]) -> Option<&'a str> {
    keys.iter()
        .find_map(|k| record.get(*k).and_then(Value::as_str))
        .map(str::trim)
        .filter(|s| !s.is_empty())
}

fn records(value: Value) -> Vec<Value> {
    match value {
        Value::Array(items) => items,
        Value::Object(mut map) => {
            for key in LIST_KEYS {
                if let Some(Value::Array(_)) = map.get(*key) {
                    if let Some(Value::Array(items)) = map.remove(*key) {
                        return items;
                    }
                }
            }
            vec![Value::Object(map)]
        }
        _ => Vec::new(),
    }
}

/// Parses a gesture-selection response. Phrases are located in `utt`;
/// records whose phrase cannot be found are dropped with a warning.
pub fn parse_proposals(raw: &str, utt: &Utterance) -> Result<ParsedProposals, ProposalError> {
    let (value, _) = extract_json(raw).ok_or(ProposalError::ParseFailure)?;
    let mut proposals = Vec::new();
    let mut warnings = Vec::new();
    for (i, record) in records(value).into_iter().enumerate() {
        let Value::Object(record) = record else {
            warnings.push(format!("record {i}: not an object"));
            continue;
        };
        let Some(intent) = field(&record, INTENT_KEYS) else {
            warnings.push(format!("record {i}: missing intent"));
            continue;
        };
        let Some(phrase) = field(&record, PHRASE_KEYS) else {
            warnings.push(format!("record {i}: missing phrase"));
            continue;
        };
        let phrase = phrase.trim_matches(|c| c == '"' || c == '\u{201c}' || c == '\u{201d}');
        match locate_phrase(utt, phrase) {
            Ok(span) => {
                let mut p = GestureProposal::new(intent, phrase, span);
                p.physical_description = field(&record, DESCRIPTION_KEYS).map(str::to_string);
                proposals.push(p);
            }
            Err(e) => warnings.push(format!("record {i}: {e}")),
        }
    }
    for w in &warnings {
        tracing::debug!(utterance = %utt.id, "{w}");
    }
    if proposals.is_empty() {
        return Err(ProposalError::EmptyProposalSet { warnings });
    }
    Ok(ParsedProposals { proposals, warnings })
}
