//! Gestural-intent taxonomy, intent to animation-lexeme mapping, and the
//! annotated utterance corpus.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Write};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::textproc::{Utterance, WordSpan};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntentDefinition {
    pub name: String,
    pub definition: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema_group: Option<String>,
}

impl IntentDefinition {
    fn new(name: &str, definition: &str, schema_group: Option<&str>) -> Self {
        Self {
            name: name.to_string(),
            definition: definition.to_string(),
            schema_group: schema_group.map(str::to_string),
        }
    }
}

/// The seven intents of the reference speaker's repertoire, in their
/// canonical order.
pub fn builtin_intents() -> Vec<IntentDefinition> {
    const PATH: Option<&str> = Some("path group");
    vec![
        IntentDefinition::new(
            "Progress",
            "This gesture represents progress, advancement, or moving forward. It is part of the path group image schema.",
            PATH,
        ),
        IntentDefinition::new(
            "Regress",
            "This gesture represents moving backward, regressing, or returning to a previous point. It is part of the path group image schema.",
            PATH,
        ),
        IntentDefinition::new(
            "Cycle",
            "This gesture represents actions or processes that repeat in a continuous loop or follow a recurring pattern. It is an image schema.",
            None,
        ),
        IntentDefinition::new(
            "Collect",
            "This gesture represents gathering, collecting, or bringing things together, into one entity. It is an image schema.",
            None,
        ),
        IntentDefinition::new(
            "Container",
            "This gesture represents a boundary, a sweep, or an imaginary box holding a collection of items. This is an image schema and basis for the container metaphoric gesture.",
            None,
        ),
        IntentDefinition::new(
            "Oscillation",
            "This gesture represents alternation, uncertainty, indecision, or items being out of balance. It is part of the balance group image schema.",
            Some("balance group"),
        ),
        IntentDefinition::new(
            "Temporal",
            "There are many, culture-specific time metaphors. Here we refer to representing time as a line, with different points on the line representing past, present, and future.",
            None,
        ),
    ]
}

pub const DEFAULT_BML_TYPE: &str = "METAPHORIC";
pub const DEFAULT_EMOTION: &str = "neutral";
pub const DEFAULT_FALLBACK_LEXEME: &str = "GenericMetaphoric";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexemeEntry {
    pub lexeme: String,
    #[serde(rename = "type", default = "default_bml_type")]
    pub bml_type: String,
}

fn default_bml_type() -> String {
    DEFAULT_BML_TYPE.to_string()
}

/// Result of [`GestureLexicon::resolve_lexeme`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ResolvedLexeme {
    pub lexeme: String,
    pub bml_type: String,
    pub emotion: String,
    pub fallback: bool,
}

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("intent name is empty")]
    EmptyName,
    #[error("intent {0:?} has an empty definition")]
    EmptyDefinition(String),
    #[error("intent {0:?} is defined more than once")]
    DuplicateIntent(String),
    #[error("intent {0:?} has no lexeme mapping")]
    MissingLexeme(String),
    #[error("{field} value {value:?} is not a safe BML attribute value")]
    UnsafeAttribute { field: &'static str, value: String },
    #[error("invalid lexicon file: {0}")]
    Format(#[from] serde_json::Error),
}

/// True for non-empty strings without XML-reserved or control characters and
/// without surrounding whitespace.
pub fn is_attribute_safe(value: &str) -> bool {
    !value.is_empty()
        && value.trim() == value
        && !value
            .chars()
            .any(|c| matches!(c, '<' | '>' | '&' | '"' | '\'') || c.is_control())
}

fn intent_key(name: &str) -> String {
    name.trim().to_lowercase()
}

/// Intent definitions plus the mapping from intent names to animation
/// lexemes. Lookups are case-insensitive and ignore surrounding whitespace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LexiconFile", into = "LexiconFile")]
pub struct GestureLexicon {
    intents: Vec<IntentDefinition>,
    lexemes: BTreeMap<String, (String, LexemeEntry)>,
    default_emotion: String,
    fallback_lexeme: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LexiconFile {
    intents: Vec<IntentDefinition>,
    #[serde(default)]
    lexemes: IndexMap<String, LexemeEntry>,
    #[serde(default = "default_emotion")]
    default_emotion: String,
    #[serde(default = "default_fallback")]
    fallback_lexeme: String,
}

fn default_emotion() -> String {
    DEFAULT_EMOTION.to_string()
}

fn default_fallback() -> String {
    DEFAULT_FALLBACK_LEXEME.to_string()
}

impl TryFrom<LexiconFile> for GestureLexicon {
    type Error = LexiconError;

    fn try_from(file: LexiconFile) -> Result<Self, Self::Error> {
        let mut lexicon = GestureLexicon {
            intents: Vec::new(),
            lexemes: BTreeMap::new(),
            default_emotion: file.default_emotion,
            fallback_lexeme: file.fallback_lexeme,
        };
        for (name, entry) in file.lexemes {
            lexicon.lexemes.insert(intent_key(&name), (name, entry));
        }
        for intent in file.intents {
            lexicon.push_intent(intent)?;
        }
        lexicon.validate()?;
        Ok(lexicon)
    }
}

impl From<GestureLexicon> for LexiconFile {
    fn from(lexicon: GestureLexicon) -> Self {
        LexiconFile {
            intents: lexicon.intents,
            lexemes: lexicon.lexemes.into_values().collect(),
            default_emotion: lexicon.default_emotion,
            fallback_lexeme: lexicon.fallback_lexeme,
        }
    }
}

impl Default for GestureLexicon {
    fn default() -> Self {
        Self::builtin()
    }
}

impl GestureLexicon {
    /// The built-in taxonomy with each intent mapped to an identically named
    /// `METAPHORIC` lexeme.
    pub fn builtin() -> Self {
        let mut lexicon = GestureLexicon {
            intents: Vec::new(),
            lexemes: BTreeMap::new(),
            default_emotion: DEFAULT_EMOTION.to_string(),
            fallback_lexeme: DEFAULT_FALLBACK_LEXEME.to_string(),
        };
        for intent in builtin_intents() {
            lexicon.map_lexeme(&intent.name, &intent.name, DEFAULT_BML_TYPE);
            lexicon
                .push_intent(intent)
                .expect("built-in intents are unique");
        }
        lexicon
    }

    pub fn from_json(text: &str) -> Result<Self, LexiconError> {
        let file: LexiconFile = serde_json::from_str(text)?;
        file.try_into()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("lexicon serializes")
    }

    fn push_intent(&mut self, intent: IntentDefinition) -> Result<(), LexiconError> {
        if intent.name.trim().is_empty() {
            return Err(LexiconError::EmptyName);
        }
        if intent.definition.trim().is_empty() {
            return Err(LexiconError::EmptyDefinition(intent.name));
        }
        if self.intent(&intent.name).is_some() {
            return Err(LexiconError::DuplicateIntent(intent.name));
        }
        self.intents.push(intent);
        Ok(())
    }

    fn validate(&self) -> Result<(), LexiconError> {
        for intent in &self.intents {
            if !self.lexemes.contains_key(&intent_key(&intent.name)) {
                return Err(LexiconError::MissingLexeme(intent.name.clone()));
            }
        }
        let mut checks: Vec<(&'static str, &str)> = vec![
            ("default_emotion", &self.default_emotion),
            ("fallback_lexeme", &self.fallback_lexeme),
        ];
        for (_, entry) in self.lexemes.values() {
            checks.push(("lexeme", &entry.lexeme));
            checks.push(("type", &entry.bml_type));
        }
        for (field, value) in checks {
            if !is_attribute_safe(value) {
                return Err(LexiconError::UnsafeAttribute {
                    field,
                    value: value.to_string(),
                });
            }
        }
        Ok(())
    }

    /// Adds or replaces the lexeme for `intent`.
    pub fn map_lexeme(&mut self, intent: &str, lexeme: &str, bml_type: &str) {
        self.lexemes.insert(
            intent_key(intent),
            (
                intent.trim().to_string(),
                LexemeEntry {
                    lexeme: lexeme.to_string(),
                    bml_type: bml_type.to_string(),
                },
            ),
        );
    }

    pub fn with_fallback_lexeme(mut self, lexeme: impl Into<String>) -> Result<Self, LexiconError> {
        self.fallback_lexeme = lexeme.into();
        self.validate()?;
        Ok(self)
    }

    pub fn intents(&self) -> &[IntentDefinition] {
        &self.intents
    }

    pub fn intent(&self, name: &str) -> Option<&IntentDefinition> {
        let key = intent_key(name);
        self.intents.iter().find(|i| intent_key(&i.name) == key)
    }

    pub fn default_emotion(&self) -> &str {
        &self.default_emotion
    }

    pub fn fallback_lexeme(&self) -> &str {
        &self.fallback_lexeme
    }

    /// Maps an intent name to its lexeme. Never fails: unknown intents get
    /// the fallback lexeme with type `METAPHORIC` and `fallback` set.
    pub fn resolve_lexeme(&self, intent_name: &str) -> ResolvedLexeme {
        match self.lexemes.get(&intent_key(intent_name)) {
            Some((_, entry)) => ResolvedLexeme {
                lexeme: entry.lexeme.clone(),
                bml_type: entry.bml_type.clone(),
                emotion: self.default_emotion.clone(),
                fallback: false,
            },
            None => ResolvedLexeme {
                lexeme: self.fallback_lexeme.clone(),
                bml_type: DEFAULT_BML_TYPE.to_string(),
                emotion: self.default_emotion.clone(),
                fallback: true,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GestureCategory {
    Deictic,
    Beat,
    Metaphoric,
    Iconic,
}

impl fmt::Display for GestureCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GestureCategory::Deictic => "deictic",
            GestureCategory::Beat => "beat",
            GestureCategory::Metaphoric => "metaphoric",
            GestureCategory::Iconic => "iconic",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// One ground-truth speaker gesture over a word span of an utterance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub utterance_id: String,
    pub span: WordSpan,
    pub intent: Option<String>,
    pub category: GestureCategory,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: annotation references unknown utterance {utterance_id:?}")]
    DanglingUtterance { line: usize, utterance_id: String },
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
    #[error("utterance {0:?} is in both the training and test splits")]
    SplitOverlap(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

const CORPUS_FORMAT: &str = "gesture-corpus";
const CORPUS_VERSION: u32 = 1;

/// Utterances plus training and test annotations. Immutable after loading.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    utterances: IndexMap<String, Utterance>,
    train_ids: Vec<String>,
    test_ids: Vec<String>,
    training: Vec<AnnotationRecord>,
    test: Vec<AnnotationRecord>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    format: Option<String>,
    version: Option<u32>,
    train: Option<Vec<String>>,
    test: Option<Vec<String>>,
    utterance_id: Option<String>,
    text: Option<String>,
    span: Option<[i64; 2]>,
    #[serde(default, deserialize_with = "nullable")]
    intent: Option<Option<String>>,
    category: Option<GestureCategory>,
    split: Option<Split>,
}

fn nullable<'de, D, T>(de: D) -> Result<Option<Option<T>>, D::Error>
where
    D: serde::Deserializer<'de>,
    T: Deserialize<'de>,
{
    Option::<T>::deserialize(de).map(Some)
}

#[derive(Serialize)]
struct HeaderOut<'a> {
    format: &'a str,
    version: u32,
    train: &'a [String],
    test: &'a [String],
}

#[derive(Serialize)]
struct UtteranceOut<'a> {
    utterance_id: &'a str,
    text: &'a str,
}

#[derive(Serialize)]
struct AnnotationOut<'a> {
    utterance_id: &'a str,
    span: WordSpan,
    intent: &'a Option<String>,
    category: GestureCategory,
    split: Split,
}

impl Corpus {
    pub fn utterance(&self, id: &str) -> Option<&Utterance> {
        self.utterances.get(id)
    }

    pub fn utterances(&self) -> impl Iterator<Item = &Utterance> {
        self.utterances.values()
    }

    pub fn training(&self) -> &[AnnotationRecord] {
        &self.training
    }

    pub fn test(&self) -> &[AnnotationRecord] {
        &self.test
    }

    pub fn train_ids(&self) -> &[String] {
        &self.train_ids
    }

    pub fn test_ids(&self) -> &[String] {
        &self.test_ids
    }

    pub fn test_utterances(&self) -> impl Iterator<Item = &Utterance> {
        self.test_ids.iter().filter_map(|id| self.utterances.get(id))
    }

    pub fn annotations_for<'a>(
        &'a self,
        utterance_id: &'a str,
    ) -> impl Iterator<Item = &'a AnnotationRecord> + 'a {
        self.training
            .iter()
            .chain(&self.test)
            .filter(move |a| a.utterance_id == utterance_id)
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty() && self.training.is_empty() && self.test.is_empty()
    }

    /// Parses the JSON Lines corpus format. An optional header on the first
    /// record declares split membership; without it, membership follows the
    /// annotations' `split` fields.
    pub fn load<R: BufRead>(source: R) -> Result<Self, CorpusError> {
        let mut corpus = Corpus::default();
        let mut header_split: Option<(BTreeSet<String>, BTreeSet<String>)> = None;
        let mut pending: Vec<(usize, AnnotationRecord, Split)> = Vec::new();
        let mut seen_record = false;

        for (idx, line) in source.lines().enumerate() {
            let lineno = idx + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let raw: RawRecord = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
                line: lineno,
                message: e.to_string(),
            })?;
            let invalid = |message: &str| CorpusError::Invalid {
                line: lineno,
                message: message.to_string(),
            };

            if raw.format.is_some() {
                if seen_record {
                    return Err(invalid("header must be the first record"));
                }
                if raw.format.as_deref() != Some(CORPUS_FORMAT) {
                    return Err(invalid("unknown corpus format"));
                }
                if raw.version.unwrap_or(CORPUS_VERSION) != CORPUS_VERSION {
                    return Err(invalid("unsupported corpus version"));
                }
                if raw.utterance_id.is_some() || raw.text.is_some() || raw.span.is_some() {
                    return Err(invalid("header mixes in record fields"));
                }
                let train: Vec<String> = raw.train.unwrap_or_default();
                let test: Vec<String> = raw.test.unwrap_or_default();
                let train_set: BTreeSet<String> = train.iter().cloned().collect();
                let test_set: BTreeSet<String> = test.iter().cloned().collect();
                if let Some(id) = train_set.intersection(&test_set).next() {
                    return Err(CorpusError::SplitOverlap(id.clone()));
                }
                if train_set.len() != train.len() || test_set.len() != test.len() {
                    return Err(invalid("duplicate id in split list"));
                }
                corpus.train_ids = train;
                corpus.test_ids = test;
                header_split = Some((train_set, test_set));
                seen_record = true;
                continue;
            }
            seen_record = true;
            if raw.train.is_some() || raw.test.is_some() || raw.version.is_some() {
                return Err(invalid("split lists are only allowed in the header"));
            }
            let utterance_id = raw
                .utterance_id
                .ok_or_else(|| invalid("missing utterance_id"))?;
            if utterance_id.is_empty() {
                return Err(invalid("empty utterance_id"));
            }

            match (raw.text, raw.span) {
                (Some(text), None) => {
                    if raw.category.is_some() || raw.split.is_some() || raw.intent.is_some() {
                        return Err(invalid("utterance record carries annotation fields"));
                    }
                    if corpus.utterances.contains_key(&utterance_id) {
                        return Err(invalid("duplicate utterance_id"));
                    }
                    let utt = Utterance::new(utterance_id.clone(), text);
                    corpus.utterances.insert(utterance_id, utt);
                }
                (None, Some([start, end])) => {
                    if start < 0 || end < 0 {
                        return Err(invalid("negative span index"));
                    }
                    let span = WordSpan::new(start as usize, end as usize)
                        .map_err(|e| invalid(&e.to_string()))?;
                    let category = raw.category.ok_or_else(|| invalid("missing category"))?;
                    let split = raw.split.ok_or_else(|| invalid("missing split"))?;
                    let intent = raw.intent.flatten().filter(|s| !s.trim().is_empty());
                    pending.push((
                        lineno,
                        AnnotationRecord {
                            utterance_id,
                            span,
                            intent,
                            category,
                        },
                        split,
                    ));
                }
                (Some(_), Some(_)) => return Err(invalid("record has both text and span")),
                (None, None) => return Err(invalid("record has neither text nor span")),
            }
        }

        // Split membership from annotations when no header was given.
        if header_split.is_none() {
            for (_, record, split) in &pending {
                let (list, other) = match split {
                    Split::Train => (&mut corpus.train_ids, &corpus.test_ids),
                    Split::Test => (&mut corpus.test_ids, &corpus.train_ids),
                };
                if other.contains(&record.utterance_id) {
                    return Err(CorpusError::SplitOverlap(record.utterance_id.clone()));
                }
                if !list.contains(&record.utterance_id) {
                    list.push(record.utterance_id.clone());
                }
            }
        }

        for id in corpus.train_ids.iter().chain(&corpus.test_ids) {
            if !corpus.utterances.contains_key(id) {
                return Err(CorpusError::DanglingUtterance {
                    line: 1,
                    utterance_id: id.clone(),
                });
            }
        }

        for (line, record, split) in pending {
            let utt = corpus.utterances.get(&record.utterance_id).ok_or_else(|| {
                CorpusError::DanglingUtterance {
                    line,
                    utterance_id: record.utterance_id.clone(),
                }
            })?;
            record.span.within(utt.len()).map_err(|e| CorpusError::Invalid {
                line,
                message: e.to_string(),
            })?;
            let member = match split {
                Split::Train => corpus.train_ids.contains(&record.utterance_id),
                Split::Test => corpus.test_ids.contains(&record.utterance_id),
            };
            if !member {
                return Err(CorpusError::Invalid {
                    line,
                    message: format!(
                        "annotation split disagrees with the header for {:?}",
                        record.utterance_id
                    ),
                });
            }
            match split {
                Split::Train => corpus.training.push(record),
                Split::Test => corpus.test.push(record),
            }
        }
        Ok(corpus)
    }

    pub fn from_jsonl(text: &str) -> Result<Self, CorpusError> {
        Self::load(text.as_bytes())
    }

    /// Writes the corpus back in the JSON Lines format read by [`Corpus::load`].
    pub fn save<W: Write>(&self, mut out: W) -> Result<(), CorpusError> {
        if self.is_empty() {
            return Ok(());
        }
        write_line(&mut out, &HeaderOut {
            format: CORPUS_FORMAT,
            version: CORPUS_VERSION,
            train: &self.train_ids,
            test: &self.test_ids,
        })?;
        for utt in self.utterances.values() {
            write_line(&mut out, &UtteranceOut {
                utterance_id: &utt.id,
                text: &utt.text,
            })?;
        }
        for (split, records) in [(Split::Train, &self.training), (Split::Test, &self.test)] {
            for r in records {
                write_line(&mut out, &AnnotationOut {
                    utterance_id: &r.utterance_id,
                    span: r.span,
                    intent: &r.intent,
                    category: r.category,
                    split,
                })?;
            }
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.save(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }
}

fn write_line<W: Write, T: Serialize>(out: &mut W, value: &T) -> Result<(), CorpusError> {
    serde_json::to_writer(&mut *out, value).map_err(std::io::Error::from)?;
    out.write_all(b"\n")?;
    Ok(())
}

/// The bundled synthetic replica of the annotated speech corpus: 21 training
/// and 20 test utterances.
pub fn replica_corpus() -> Corpus {
    Corpus::from_jsonl(include_str!("../data/replica_corpus.jsonl"))
        .expect("bundled corpus is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn builtin_taxonomy() {
        let intents = builtin_intents();
        let names: Vec<_> = intents.iter().map(|i| i.name.as_str()).collect();
        assert_eq!(
            names,
            ["Progress", "Regress", "Cycle", "Collect", "Container", "Oscillation", "Temporal"]
        );
        let container = &intents[4];
        assert!(container.definition.contains("a boundary, a sweep"));
        assert_eq!(intents[0].schema_group.as_deref(), Some("path group"));
        assert_eq!(intents[1].schema_group.as_deref(), Some("path group"));
        assert_eq!(builtin_intents(), intents);
    }

    #[test]
    fn resolve_examples() {
        let lex = GestureLexicon::builtin();
        let r = lex.resolve_lexeme("Container");
        assert_eq!(
            (r.lexeme.as_str(), r.bml_type.as_str(), r.emotion.as_str(), r.fallback),
            ("Container", "METAPHORIC", "neutral", false)
        );
        assert_eq!(lex.resolve_lexeme("Progress").lexeme, "Progress");
        assert_eq!(lex.resolve_lexeme("  container ").lexeme, "Container");
        let novel = lex.resolve_lexeme("NovelSweep");
        assert!(novel.fallback);
        assert_eq!(novel.lexeme, DEFAULT_FALLBACK_LEXEME);
        assert_eq!(novel.bml_type, "METAPHORIC");
        assert_eq!(novel.emotion, "neutral");
    }

    #[test]
    fn lexicon_file_round_trip_and_validation() {
        let lex = GestureLexicon::builtin();
        let back = GestureLexicon::from_json(&lex.to_json()).unwrap();
        assert_eq!(back, lex);

        let missing = r#"{"intents":[{"name":"Sweep","definition":"d"}]}"#;
        assert!(matches!(
            GestureLexicon::from_json(missing),
            Err(LexiconError::MissingLexeme(_))
        ));
        let dup = r#"{"intents":[{"name":"A","definition":"d"},{"name":"a","definition":"e"}],
                      "lexemes":{"A":{"lexeme":"A"}}}"#;
        assert!(matches!(
            GestureLexicon::from_json(dup),
            Err(LexiconError::DuplicateIntent(_))
        ));
        let unsafe_lexeme = r#"{"intents":[{"name":"A","definition":"d"}],
                                "lexemes":{"A":{"lexeme":"a\"b"}}}"#;
        assert!(matches!(
            GestureLexicon::from_json(unsafe_lexeme),
            Err(LexiconError::UnsafeAttribute { .. })
        ));
        let custom = r#"{"intents":[{"name":"Sweep","definition":"d"}],
                         "lexemes":{"sweep":{"lexeme":"BigSweep","type":"ICONIC"}},
                         "default_emotion":"happy","fallback_lexeme":"Beat"}"#;
        let lex = GestureLexicon::from_json(custom).unwrap();
        let r = lex.resolve_lexeme("SWEEP");
        assert_eq!((r.lexeme.as_str(), r.bml_type.as_str(), r.emotion.as_str()), ("BigSweep", "ICONIC", "happy"));
        assert_eq!(lex.resolve_lexeme("x").lexeme, "Beat");
        assert!(GestureLexicon::builtin().with_fallback_lexeme("a<b").is_err());
    }

    #[test]
    fn empty_corpus() {
        let corpus = Corpus::load(&b""[..]).unwrap();
        assert!(corpus.is_empty());
        assert_eq!(corpus.utterances().count(), 0);
        assert!(corpus.training().is_empty() && corpus.test().is_empty());
        assert_eq!(corpus.to_jsonl(), "");
    }

    #[test]
    fn replica_counts() {
        let corpus = replica_corpus();
        assert_eq!(corpus.train_ids().len(), 21);
        assert_eq!(corpus.test_ids().len(), 20);
        assert_eq!(corpus.training().len(), 21);
        assert_eq!(corpus.test().len(), 49);
        let reloaded = Corpus::from_jsonl(&corpus.to_jsonl()).unwrap();
        assert_eq!(reloaded, corpus);
    }

    #[test]
    fn corpus_errors() {
        let inverted = "{\"utterance_id\":\"a\",\"text\":\"one two three\"}\n\
                        {\"utterance_id\":\"a\",\"span\":[2,1],\"intent\":null,\"category\":\"beat\",\"split\":\"test\"}\n";
        match Corpus::from_jsonl(inverted) {
            Err(CorpusError::Invalid { line: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
        let dangling = "{\"utterance_id\":\"a\",\"span\":[0,0],\"category\":\"beat\",\"split\":\"test\"}\n";
        assert!(matches!(
            Corpus::from_jsonl(dangling),
            Err(CorpusError::DanglingUtterance { line: 1, .. })
        ));
        let malformed = "{\"utterance_id\":\"a\",\"text\":\"x\"}\n{not json\n";
        assert!(matches!(Corpus::from_jsonl(malformed), Err(CorpusError::Parse { line: 2, .. })));
        let out_of_range = "{\"utterance_id\":\"a\",\"text\":\"x y\"}\n\
                            {\"utterance_id\":\"a\",\"span\":[1,2],\"category\":\"beat\",\"split\":\"test\"}\n";
        assert!(matches!(Corpus::from_jsonl(out_of_range), Err(CorpusError::Invalid { line: 2, .. })));
        let overlap = "{\"format\":\"gesture-corpus\",\"train\":[\"a\"],\"test\":[\"a\"]}\n";
        assert!(matches!(Corpus::from_jsonl(overlap), Err(CorpusError::SplitOverlap(_))));
        let mixed = "{\"utterance_id\":\"a\",\"text\":\"x y\"}\n\
                     {\"utterance_id\":\"a\",\"span\":[0,0],\"category\":\"beat\",\"split\":\"test\"}\n\
                     {\"utterance_id\":\"a\",\"span\":[1,1],\"category\":\"beat\",\"split\":\"train\"}\n";
        assert!(matches!(Corpus::from_jsonl(mixed), Err(CorpusError::SplitOverlap(_))));
        let late_header = "{\"utterance_id\":\"a\",\"text\":\"x\"}\n{\"format\":\"gesture-corpus\"}\n";
        assert!(matches!(Corpus::from_jsonl(late_header), Err(CorpusError::Invalid { line: 2, .. })));
        let unknown_field = "{\"utterance_id\":\"a\",\"text\":\"x\",\"bogus\":1}\n";
        assert!(matches!(Corpus::from_jsonl(unknown_field), Err(CorpusError::Parse { line: 1, .. })));
    }

    fn arb_corpus() -> impl Strategy<Value = Corpus> {
        let utt = prop::collection::vec("[a-z]{1,6}[.,]?", 1..8).prop_map(|w| w.join(" "));
        prop::collection::vec((utt, any::<bool>(), prop::collection::vec((any::<u8>(), any::<u8>(), prop::option::of("[A-Z][a-z]{1,6}"), 0u8..4), 0..4)), 0..6)
            .prop_map(|utts| {
                let mut text = String::from("");
                let mut train = Vec::new();
                let mut test = Vec::new();
                let mut lines = Vec::new();
                let mut annos = Vec::new();
                for (i, (t, is_train, spans)) in utts.into_iter().enumerate() {
                    let id = format!("u{i}");
                    let n = t.split_whitespace().count();
                    if is_train { train.push(id.clone()) } else { test.push(id.clone()) }
                    lines.push(serde_json::json!({"utterance_id": id, "text": t}).to_string());
                    for (a, b, intent, cat) in spans {
                        let (a, b) = (a as usize % n, b as usize % n);
                        let cat = ["deictic", "beat", "metaphoric", "iconic"][cat as usize];
                        annos.push(serde_json::json!({"utterance_id": id, "span": [a.min(b), a.max(b)],
                            "intent": intent, "category": cat, "split": if is_train {"train"} else {"test"}}).to_string());
                    }
                }
                if !lines.is_empty() {
                    text.push_str(&serde_json::json!({"format": "gesture-corpus", "version": 1, "train": train, "test": test}).to_string());
                    text.push('\n');
                }
                for l in lines.into_iter().chain(annos) {
                    text.push_str(&l);
                    text.push('\n');
                }
                Corpus::from_jsonl(&text).unwrap()
            })
    }

    proptest! {
        #[test]
        fn corpus_round_trip(corpus in arb_corpus()) {
            let again = Corpus::from_jsonl(&corpus.to_jsonl()).unwrap();
            prop_assert_eq!(again, corpus);
        }

        #[test]
        fn resolve_is_total(name in ".*") {
            let r = GestureLexicon::builtin().resolve_lexeme(&name);
            prop_assert!(is_attribute_safe(&r.lexeme));
        }
    }
}
