//! Utterance splitting, tokenization, timing marks and phrase location.
//!
//! Word indices are 0-based and refer to whitespace-delimited tokens of the
//! original text, so `T3` is the mark in front of the fourth word.

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const TERMINATORS: [char; 3] = ['.', '!', '?'];

/// One whitespace-delimited word and its byte offset in the source text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub word: String,
    pub offset: usize,
}

/// A tokenized sentence. Token `i` is bound to the timing mark `T{i}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub id: String,
    pub text: String,
    pub tokens: Vec<Token>,
}

impl Utterance {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        let tokens = text
            .split_whitespace()
            .map(|word| Token {
                word: word.to_string(),
                // split_whitespace yields subslices of `text`
                offset: word.as_ptr() as usize - text.as_ptr() as usize,
            })
            .collect();
        Self {
            id: id.into(),
            text,
            tokens,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.word.as_str())
    }

    /// Tokens joined by single spaces.
    pub fn normalized_text(&self) -> String {
        self.words().collect::<Vec<_>>().join(" ")
    }

    /// Mark names `T0..T{n-1}`, parallel to the tokens.
    pub fn mark_names(&self) -> Vec<String> {
        (0..self.len()).map(mark_name).collect()
    }

    /// The words covered by `span`, joined by single spaces.
    pub fn span_text(&self, span: WordSpan) -> String {
        self.tokens[span.start..=span.end]
            .iter()
            .map(|t| t.word.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

pub fn mark_name(index: usize) -> String {
    format!("T{index}")
}

/// Parses `T<k>` into `k`. Leading zeros and signs are rejected so that the
/// mapping between names and indices stays one-to-one.
pub fn parse_mark_name(name: &str) -> Option<usize> {
    let digits = name.strip_prefix('T')?;
    if digits.is_empty()
        || !digits.bytes().all(|b| b.is_ascii_digit())
        || (digits.len() > 1 && digits.starts_with('0'))
    {
        return None;
    }
    digits.parse().ok()
}

/// Inclusive range of 0-based token indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WordSpan {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpanError {
    #[error("span start {start} is after end {end}")]
    Inverted { start: usize, end: usize },
    #[error("span ({start},{end}) exceeds token count {len}")]
    OutOfRange { start: usize, end: usize, len: usize },
}

impl WordSpan {
    pub fn new(start: usize, end: usize) -> Result<Self, SpanError> {
        if start > end {
            return Err(SpanError::Inverted { start, end });
        }
        Ok(Self { start, end })
    }

    pub fn single(index: usize) -> Self {
        Self {
            start: index,
            end: index,
        }
    }

    /// Checks the span against an utterance of `len` tokens.
    pub fn within(self, len: usize) -> Result<Self, SpanError> {
        if self.end >= len {
            return Err(SpanError::OutOfRange {
                start: self.start,
                end: self.end,
                len,
            });
        }
        Ok(self)
    }

    pub fn len(self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(self) -> bool {
        false
    }

    pub fn overlaps(self, other: WordSpan) -> bool {
        self.start <= other.end && other.start <= self.end
    }

    pub fn contains(self, other: WordSpan) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    /// Token distance between two spans: 0 when they overlap, 1 when
    /// adjacent, otherwise the difference between the nearer boundaries.
    pub fn gap(self, other: WordSpan) -> usize {
        if self.overlaps(other) {
            0
        } else if self.end < other.start {
            other.start - self.end
        } else {
            self.start - other.end
        }
    }
}

impl fmt::Display for WordSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.start, self.end)
    }
}

// Spans travel as `[start, end]` on every wire format.
impl Serialize for WordSpan {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        [self.start, self.end].serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for WordSpan {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let [start, end] = <[usize; 2]>::deserialize(deserializer)?;
        WordSpan::new(start, end).map_err(serde::de::Error::custom)
    }
}

/// Byte ranges of the sentences in `text`.
///
/// A sentence ends at `.`, `!` or `?` when followed by whitespace or the end
/// of input. Ranges are trimmed of surrounding whitespace; whitespace-only
/// segments are dropped.
pub fn sentence_ranges(text: &str) -> Vec<Range<usize>> {
    let mut ranges = Vec::new();
    let mut seg_start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if !TERMINATORS.contains(&c) {
            continue;
        }
        let at_boundary = match chars.peek() {
            None => true,
            Some((_, next)) => next.is_whitespace(),
        };
        if at_boundary {
            let end = i + c.len_utf8();
            push_trimmed(text, seg_start..end, &mut ranges);
            seg_start = end;
        }
    }
    push_trimmed(text, seg_start..text.len(), &mut ranges);
    ranges
}

fn push_trimmed(text: &str, range: Range<usize>, out: &mut Vec<Range<usize>>) {
    let segment = &text[range.clone()];
    let lead = segment.len() - segment.trim_start().len();
    let trimmed = segment.trim();
    if !trimmed.is_empty() {
        let start = range.start + lead;
        out.push(start..start + trimmed.len());
    }
}

/// Splits dialogue text into utterances with ids `u0`, `u1`, ...
pub fn split_utterances(text: &str) -> Vec<Utterance> {
    sentence_ranges(text)
        .into_iter()
        .enumerate()
        .map(|(i, r)| Utterance::new(format!("u{i}"), &text[r]))
        .collect()
}

pub fn tokenize(text: &str) -> Utterance {
    Utterance::new("", text)
}

pub(crate) fn escape_text(word: &str, out: &mut String) {
    for c in word.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            _ => out.push(c),
        }
    }
}

/// Renders the utterance as an XML fragment with a `<mark name="Ti"/>` in
/// front of every word and a trailing `T{n}` boundary mark.
pub fn insert_marks(utt: &Utterance) -> String {
    mark_words(utt.words())
}

/// [`insert_marks`] over bare words.
pub fn mark_words<'a>(words: impl IntoIterator<Item = &'a str>) -> String {
    let mut out = String::new();
    let mut n = 0;
    for (i, word) in words.into_iter().enumerate() {
        out.push_str(&format!("<mark name=\"T{i}\"/>"));
        escape_text(word, &mut out);
        out.push(' ');
        n = i + 1;
    }
    if n > 0 {
        out.push_str(&format!("<mark name=\"T{n}\"/>"));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LocateError {
    #[error("phrase is empty")]
    EmptyPhrase,
    #[error("phrase {phrase:?} does not occur in the utterance")]
    NoMatch { phrase: String },
}

/// Lowercases and strips non-alphanumeric characters from both ends.
pub fn normalize_word(word: &str) -> String {
    word.trim_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase()
}

/// Finds the leftmost token run equal to the phrase's words. An exact run
/// anywhere wins over a run that only matches after [`normalize_word`].
pub fn locate_phrase(utt: &Utterance, phrase: &str) -> Result<WordSpan, LocateError> {
    let wanted: Vec<&str> = phrase.split_whitespace().collect();
    if wanted.is_empty() {
        return Err(LocateError::EmptyPhrase);
    }
    let words: Vec<&str> = utt.words().collect();
    let n = wanted.len();
    if n <= words.len() {
        if let Some(i) = words.windows(n).position(|w| w == wanted.as_slice()) {
            return Ok(WordSpan {
                start: i,
                end: i + n - 1,
            });
        }
        let wanted: Vec<String> = wanted.iter().map(|w| normalize_word(w)).collect();
        let normalized: Vec<String> = words.iter().map(|w| normalize_word(w)).collect();
        if let Some(i) = normalized.windows(n).position(|w| w == wanted.as_slice()) {
            return Ok(WordSpan {
                start: i,
                end: i + n - 1,
            });
        }
    }
    Err(LocateError::NoMatch {
        phrase: phrase.to_string(),
    })
}
