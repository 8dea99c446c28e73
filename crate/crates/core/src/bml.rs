//! BML documents: one marked speech block plus gesture behaviors whose
//! stroke starts at a word mark.
//!
//! Canonical output:
//!
//! ```text
//! <?xml version="1.0" encoding="UTF-8"?>
//! <bml>
//!   <speech id="u0"><mark name="T0"/>We <mark name="T1"/>put ... <mark name="T7"/></speech>
//!   <gesture id="g0" stroke-start="T3" lexeme="Container" type="METAPHORIC" emotion="neutral" priority="0" />
//! </bml>
//! ```
//!
//! `id` and `priority` on gestures are extensions; [`Dialect::Plain`] leaves
//! them out. The parser accepts both and any attribute order.

use std::borrow::Cow;

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexicon::{is_attribute_safe, GestureLexicon};
use crate::selector::GestureProposal;
use crate::textproc::{mark_name, mark_words, parse_mark_name, Utterance};

pub const XML_DECLARATION: &str = r#"<?xml version="1.0" encoding="UTF-8"?>"#;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GestureBehavior {
    pub stroke_start: String,
    pub lexeme: String,
    pub bml_type: String,
    pub emotion: String,
    /// 0 is the highest priority.
    pub priority: u32,
}

impl GestureBehavior {
    pub fn stroke_index(&self) -> Option<usize> {
        parse_mark_name(&self.stroke_start)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BmlDocument {
    pub utterance_id: String,
    /// The spoken words; word `i` follows mark `T{i}`.
    pub words: Vec<String>,
    pub gestures: Vec<GestureBehavior>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dialect {
    /// Gesture ids and priorities included.
    #[default]
    Extended,
    /// Only stroke-start, lexeme, type and emotion on gestures.
    Plain,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BmlError {
    #[error("malformed XML: {0}")]
    Xml(String),
    #[error("unsupported behavior <{0}>")]
    UnsupportedBehavior(String),
    #[error("unexpected attribute {attribute:?} on <{element}>")]
    UnexpectedAttribute { element: String, attribute: String },
    #[error("<{element}> is missing attribute {attribute:?}")]
    MissingAttribute { element: &'static str, attribute: &'static str },
    #[error("invalid {attribute} value {value:?}")]
    InvalidAttribute { attribute: &'static str, value: String },
    #[error("stroke-start references missing mark {0}")]
    DanglingMark(String),
    #[error("speech block: {0}")]
    Speech(String),
    #[error("{0}")]
    Structure(String),
}

impl BmlDocument {
    /// Number of marks in the speech block, including the trailing boundary.
    pub fn mark_count(&self) -> usize {
        if self.words.is_empty() {
            0
        } else {
            self.words.len() + 1
        }
    }

    pub fn speech_fragment(&self) -> String {
        mark_words(self.words.iter().map(String::as_str))
    }

    pub fn validate(&self) -> Result<(), BmlError> {
        for word in &self.words {
            if word.is_empty() || word.chars().any(|c| c.is_whitespace() || !is_xml_char(c)) {
                return Err(BmlError::Speech(format!("invalid word {word:?}")));
            }
        }
        if self.utterance_id.chars().any(|c| !is_xml_char(c)) {
            return Err(BmlError::InvalidAttribute {
                attribute: "id",
                value: self.utterance_id.clone(),
            });
        }
        let mut previous = None;
        for g in &self.gestures {
            let index = g
                .stroke_index()
                .filter(|&k| k < self.mark_count())
                .ok_or_else(|| BmlError::DanglingMark(g.stroke_start.clone()))?;
            for (attribute, value) in [("lexeme", &g.lexeme), ("type", &g.bml_type), ("emotion", &g.emotion)] {
                if !is_attribute_safe(value) {
                    return Err(BmlError::InvalidAttribute {
                        attribute,
                        value: value.clone(),
                    });
                }
            }
            let key = (index, g.priority);
            if previous.is_some_and(|p| p > key) {
                return Err(BmlError::Structure(
                    "gestures must be ordered by stroke mark, then priority".into(),
                ));
            }
            previous = Some(key);
        }
        Ok(())
    }
}

fn is_xml_char(c: char) -> bool {
    matches!(c, '\t' | '\n' | '\r') || (!c.is_control() && !matches!(c, '\u{FFFE}' | '\u{FFFF}'))
}

fn sort_gestures(gestures: &mut [GestureBehavior]) {
    gestures.sort_by_key(|g| (g.stroke_index().unwrap_or(usize::MAX), g.priority));
}

/// One behavior per proposal, stroke at the first word of its span. The
/// input order is taken as priority order.
pub fn build_bml(utt: &Utterance, proposals: &[GestureProposal], lexicon: &GestureLexicon) -> BmlDocument {
    let mut gestures: Vec<GestureBehavior> = proposals
        .iter()
        .enumerate()
        .map(|(priority, p)| {
            let resolved = lexicon.resolve_lexeme(&p.intent);
            GestureBehavior {
                stroke_start: mark_name(p.span.start),
                lexeme: resolved.lexeme,
                bml_type: resolved.bml_type,
                emotion: resolved.emotion,
                priority: priority as u32,
            }
        })
        .collect();
    sort_gestures(&mut gestures);
    BmlDocument {
        utterance_id: utt.id.clone(),
        words: utt
            .words()
            .map(|w| w.chars().map(|c| if is_xml_char(c) { c } else { '\u{FFFD}' }).collect())
            .collect(),
        gestures,
    }
}

fn escape_attr(value: &str) -> Cow<'_, str> {
    quick_xml::escape::escape(value)
}

pub fn serialize(doc: &BmlDocument) -> String {
    serialize_with(doc, Dialect::Extended)
}

pub fn serialize_with(doc: &BmlDocument, dialect: Dialect) -> String {
    let mut out = String::new();
    out.push_str(XML_DECLARATION);
    out.push_str("\n<bml>\n");
    out.push_str(&format!(
        "  <speech id=\"{}\">{}</speech>\n",
        escape_attr(&doc.utterance_id),
        doc.speech_fragment()
    ));
    for (i, g) in doc.gestures.iter().enumerate() {
        out.push_str("  <gesture ");
        if dialect == Dialect::Extended {
            out.push_str(&format!("id=\"g{i}\" "));
        }
        out.push_str(&format!(
            "stroke-start=\"{}\" lexeme=\"{}\" type=\"{}\" emotion=\"{}\"",
            escape_attr(&g.stroke_start),
            escape_attr(&g.lexeme),
            escape_attr(&g.bml_type),
            escape_attr(&g.emotion)
        ));
        if dialect == Dialect::Extended {
            out.push_str(&format!(" priority=\"{}\"", g.priority));
        }
        out.push_str(" />\n");
    }
    out.push_str("</bml>\n");
    out
}

fn xml_err(e: impl std::fmt::Display) -> BmlError {
    BmlError::Xml(e.to_string())
}

fn element_name(e: &BytesStart<'_>) -> String {
    String::from_utf8_lossy(e.name().as_ref()).into_owned()
}

fn attributes(e: &BytesStart<'_>) -> Result<Vec<(String, String)>, BmlError> {
    e.attributes()
        .map(|a| {
            let a = a.map_err(xml_err)?;
            let key = String::from_utf8_lossy(a.key.as_ref()).into_owned();
            let value = a.unescape_value().map_err(xml_err)?.into_owned();
            Ok((key, value))
        })
        .collect()
}

#[derive(Default)]
struct Speech {
    id: String,
    marks: Vec<String>,
    /// Text before the first mark, then after each mark.
    texts: Vec<String>,
}

impl Speech {
    fn into_words(self) -> Result<Vec<String>, BmlError> {
        if self.texts[0].trim() != "" {
            return Err(BmlError::Speech("text before the first mark".into()));
        }
        for (i, m) in self.marks.iter().enumerate() {
            if parse_mark_name(m) != Some(i) {
                return Err(BmlError::Speech(format!("mark {m:?} out of sequence, expected T{i}")));
            }
        }
        if self.marks.is_empty() {
            return Ok(Vec::new());
        }
        if self.marks.len() == 1 {
            return Err(BmlError::Speech("a lone mark without words".into()));
        }
        let n = self.marks.len() - 1;
        if self.texts[n + 1].trim() != "" {
            return Err(BmlError::Speech("text after the boundary mark".into()));
        }
        self.texts[1..=n]
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let word = t.trim();
                if word.is_empty() || word.contains(char::is_whitespace) {
                    Err(BmlError::Speech(format!("mark T{i} must be followed by exactly one word")))
                } else {
                    Ok(word.to_string())
                }
            })
            .collect()
    }
}

fn gesture_from(e: &BytesStart<'_>, position: usize) -> Result<GestureBehavior, BmlError> {
    let mut stroke_start = None;
    let mut lexeme = None;
    let mut bml_type = None;
    let mut emotion = None;
    let mut priority = None;
    for (key, value) in attributes(e)? {
        match key.as_str() {
            "stroke-start" => stroke_start = Some(value),
            "lexeme" => lexeme = Some(value),
            "type" => bml_type = Some(value),
            "emotion" => emotion = Some(value),
            "priority" => {
                priority = Some(value.parse::<u32>().map_err(|_| BmlError::InvalidAttribute {
                    attribute: "priority",
                    value,
                })?)
            }
            "id" => {}
            _ => {
                return Err(BmlError::UnexpectedAttribute {
                    element: "gesture".into(),
                    attribute: key,
                })
            }
        }
    }
    let missing = |attribute| BmlError::MissingAttribute {
        element: "gesture",
        attribute,
    };
    Ok(GestureBehavior {
        stroke_start: stroke_start.ok_or_else(|| missing("stroke-start"))?,
        lexeme: lexeme.ok_or_else(|| missing("lexeme"))?,
        bml_type: bml_type.ok_or_else(|| missing("type"))?,
        emotion: emotion.ok_or_else(|| missing("emotion"))?,
        priority: priority.unwrap_or(position as u32),
    })
}

#[derive(PartialEq)]
enum State {
    Prolog,
    Root,
    Speech,
    Mark,
    Gesture,
    Done,
}

/// Parses a BML document. Gestures without `priority` take their position
/// in the document.
pub fn parse(xml: &str) -> Result<BmlDocument, BmlError> {
    let mut reader = Reader::from_str(xml);
    let mut state = State::Prolog;
    let mut speech: Option<Speech> = None;
    let mut current = Speech::default();
    let mut gestures = Vec::new();
    loop {
        let event = reader.read_event().map_err(xml_err)?;
        let empty = matches!(event, Event::Empty(_));
        match (&state, event) {
            (_, Event::Eof) => break,
            (_, Event::Comment(_) | Event::PI(_)) => {}
            (State::Prolog, Event::Decl(_) | Event::DocType(_)) => {}
            (State::Prolog, Event::Start(e)) if e.name().as_ref() == b"bml" => state = State::Root,
            (State::Prolog, Event::Empty(e)) if e.name().as_ref() == b"bml" => state = State::Done,
            (State::Root, Event::Start(e)) | (State::Root, Event::Empty(e))
                if e.name().as_ref() == b"speech" =>
            {
                if speech.is_some() {
                    return Err(BmlError::Structure("more than one speech block".into()));
                }
                let mut id = None;
                for (key, value) in attributes(&e)? {
                    match key.as_str() {
                        "id" => id = Some(value),
                        _ => {
                            return Err(BmlError::UnexpectedAttribute {
                                element: "speech".into(),
                                attribute: key,
                            })
                        }
                    }
                }
                current = Speech {
                    id: id.ok_or(BmlError::MissingAttribute {
                        element: "speech",
                        attribute: "id",
                    })?,
                    marks: Vec::new(),
                    texts: vec![String::new()],
                };
                if empty {
                    speech = Some(std::mem::take(&mut current));
                } else {
                    state = State::Speech;
                }
            }
            (State::Root, Event::Start(e)) | (State::Root, Event::Empty(e))
                if e.name().as_ref() == b"gesture" =>
            {
                gestures.push(gesture_from(&e, gestures.len())?);
                if !empty {
                    state = State::Gesture;
                }
            }
            (State::Root, Event::Start(e) | Event::Empty(e)) => {
                return Err(BmlError::UnsupportedBehavior(element_name(&e)))
            }
            (State::Root, Event::End(_)) => state = State::Done,
            (State::Gesture, Event::End(_)) => state = State::Root,
            (State::Speech, Event::Empty(e)) | (State::Speech, Event::Start(e))
                if e.name().as_ref() == b"mark" =>
            {
                let mut name = None;
                for (key, value) in attributes(&e)? {
                    match key.as_str() {
                        "name" => name = Some(value),
                        _ => {
                            return Err(BmlError::UnexpectedAttribute {
                                element: "mark".into(),
                                attribute: key,
                            })
                        }
                    }
                }
                current.marks.push(name.ok_or(BmlError::MissingAttribute {
                    element: "mark",
                    attribute: "name",
                })?);
                current.texts.push(String::new());
                if !empty {
                    state = State::Mark;
                }
            }
            (State::Mark, Event::End(_)) => state = State::Speech,
            (State::Speech, Event::Text(t)) => {
                current.texts.last_mut().unwrap().push_str(&t.decode().map_err(xml_err)?)
            }
            (State::Speech, Event::CData(t)) => {
                current.texts.last_mut().unwrap().push_str(&t.decode().map_err(xml_err)?)
            }
            (State::Speech, Event::GeneralRef(r)) => {
                let resolved = match r.resolve_char_ref().map_err(xml_err)? {
                    Some(c) => c.to_string(),
                    None => {
                        let name = r.decode().map_err(xml_err)?;
                        quick_xml::escape::resolve_predefined_entity(&name)
                            .ok_or_else(|| BmlError::Xml(format!("unknown entity &{name};")))?
                            .to_string()
                    }
                };
                current.texts.last_mut().unwrap().push_str(&resolved);
            }
            (State::Speech, Event::End(_)) => {
                speech = Some(std::mem::take(&mut current));
                state = State::Root;
            }
            (State::Speech, Event::Start(e) | Event::Empty(e)) => {
                return Err(BmlError::Speech(format!("unexpected element <{}>", element_name(&e))))
            }
            (_, Event::Text(t)) if t.iter().all(u8::is_ascii_whitespace) => {}
            (_, other) => {
                return Err(BmlError::Structure(format!("unexpected content {other:?}")));
            }
        }
    }
    if state != State::Done {
        return Err(BmlError::Structure("document has no complete <bml> root".into()));
    }
    let speech = speech.ok_or_else(|| BmlError::Structure("no speech block".into()))?;
    let utterance_id = speech.id.clone();
    let words = speech.into_words()?;
    sort_gestures(&mut gestures);
    let doc = BmlDocument {
        utterance_id,
        words,
        gestures,
    };
    doc.validate()?;
    Ok(doc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textproc::{tokenize, WordSpan};
    use proptest::prelude::*;

    const GOLDEN: &str = r#"<gesture stroke-start="T3" lexeme="Container" type="METAPHORIC" emotion="neutral" />"#;

    fn fund_doc() -> BmlDocument {
        let mut utt = tokenize("We put it into a trust fund.");
        utt.id = "u0".into();
        let p = GestureProposal::new("Container", "into a trust fund", WordSpan::new(3, 6).unwrap());
        build_bml(&utt, &[p], &GestureLexicon::builtin())
    }

    #[test]
    fn golden_gesture_line() {
        let plain = serialize_with(&fund_doc(), Dialect::Plain);
        assert!(plain.lines().any(|l| l.trim() == GOLDEN), "{plain}");
        let extended = serialize(&fund_doc());
        assert!(extended.contains(r#"stroke-start="T3" lexeme="Container" type="METAPHORIC" emotion="neutral""#));
        assert_eq!(
            extended,
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<bml>\n  <speech id=\"u0\"><mark name=\"T0\"/>We <mark name=\"T1\"/>put <mark name=\"T2\"/>it <mark name=\"T3\"/>into <mark name=\"T4\"/>a <mark name=\"T5\"/>trust <mark name=\"T6\"/>fund. <mark name=\"T7\"/></speech>\n  <gesture id=\"g0\" stroke-start=\"T3\" lexeme=\"Container\" type=\"METAPHORIC\" emotion=\"neutral\" priority=\"0\" />\n</bml>\n"
        );
    }

    #[test]
    fn build_orders_by_stroke_and_keeps_priority() {
        let utt = tokenize("one two three four five six seven eight nine");
        let ps = vec![
            GestureProposal::new("Progress", "eight", WordSpan::single(7)),
            GestureProposal::new("Handshake", "three", WordSpan::single(2)),
        ];
        let doc = build_bml(&utt, &ps, &GestureLexicon::builtin());
        let marks: Vec<_> = doc.gestures.iter().map(|g| g.stroke_start.as_str()).collect();
        assert_eq!(marks, ["T2", "T7"]);
        assert_eq!(doc.gestures[0].priority, 1);
        assert_eq!(doc.gestures[0].lexeme, GestureLexicon::builtin().fallback_lexeme());
        assert_eq!(build_bml(&utt, &[], &GestureLexicon::builtin()).gestures.len(), 0);
    }

    #[test]
    fn speech_only_document() {
        let mut doc = fund_doc();
        doc.gestures.clear();
        let xml = serialize(&doc);
        assert!(!xml.contains("<gesture"));
        assert_eq!(parse(&xml).unwrap(), doc);
        let empty = BmlDocument { utterance_id: "e".into(), words: vec![], gestures: vec![] };
        assert_eq!(parse(&serialize(&empty)).unwrap(), empty);
    }

    #[test]
    fn parse_tolerates_layout_and_attribute_order() {
        let xml = r#"<bml>
            <!-- test -->
            <speech id="u0">
              <mark name="T0"/> Hi
              <mark name="T1"></mark>
            </speech>
            <gesture emotion="neutral" type="METAPHORIC" lexeme="Cycle" stroke-start="T0"/>
          </bml>"#;
        let doc = parse(xml).unwrap();
        assert_eq!(doc.words, ["Hi"]);
        assert_eq!(doc.gestures[0].lexeme, "Cycle");
        assert_eq!(doc.gestures[0].priority, 0);
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(parse("not xml at all"), Err(BmlError::Structure(_))));
        assert!(matches!(parse("<bml><speech id='a'>"), Err(_)));
        let dangling = r#"<bml><speech id="u"><mark name="T0"/>a <mark name="T1"/>b <mark name="T2"/>c <mark name="T3"/>d <mark name="T4"/></speech><gesture stroke-start="T99" lexeme="X" type="METAPHORIC" emotion="neutral" /></bml>"#;
        assert_eq!(parse(dangling), Err(BmlError::DanglingMark("T99".into())));
        let gaze = r#"<bml><speech id="u"></speech><gaze target="x"/></bml>"#;
        assert_eq!(parse(gaze), Err(BmlError::UnsupportedBehavior("gaze".into())));
        let skipped = r#"<bml><speech id="u"><mark name="T0"/>a <mark name="T2"/></speech></bml>"#;
        assert!(matches!(parse(skipped), Err(BmlError::Speech(_))));
        let two_words = r#"<bml><speech id="u"><mark name="T0"/>a b <mark name="T1"/></speech></bml>"#;
        assert!(matches!(parse(two_words), Err(BmlError::Speech(_))));
        let missing = r#"<bml><speech id="u"><mark name="T0"/>a <mark name="T1"/></speech><gesture stroke-start="T0" /></bml>"#;
        assert!(matches!(parse(missing), Err(BmlError::MissingAttribute { .. })));
    }

    #[test]
    fn escaped_words_round_trip() {
        let doc = BmlDocument {
            utterance_id: "q\"&<".into(),
            words: vec!["a&b".into(), "<x>".into(), "\"q\"".into(), "it's".into()],
            gestures: vec![],
        };
        let xml = serialize(&doc);
        assert_eq!(parse(&xml).unwrap(), doc);
    }

    fn arb_word() -> impl Strategy<Value = String> {
        "[a-zA-Z0-9&<>\"'.,;:!?\u{e9}\u{4e2d}-]{1,8}"
    }

    fn arb_attr() -> impl Strategy<Value = String> {
        "[A-Za-z][A-Za-z0-9_]{0,10}"
    }

    pub(crate) fn arb_document() -> impl Strategy<Value = BmlDocument> {
        (
            "[a-z0-9-]{1,6}",
            proptest::collection::vec(arb_word(), 0..12),
        )
            .prop_flat_map(|(id, words)| {
                let marks = if words.is_empty() { 0 } else { words.len() + 1 };
                let gesture = (0..marks.max(1), arb_attr(), arb_attr(), arb_attr(), 0u32..20).prop_map(
                    |(k, lexeme, bml_type, emotion, priority)| GestureBehavior {
                        stroke_start: mark_name(k),
                        lexeme,
                        bml_type,
                        emotion,
                        priority,
                    },
                );
                let count = if marks == 0 { 0..1 } else { 0..6 };
                (Just(id), Just(words), proptest::collection::vec(gesture, count))
            })
            .prop_map(|(utterance_id, words, mut gestures)| {
                sort_gestures(&mut gestures);
                BmlDocument { utterance_id, words, gestures }
            })
    }

    /// Rewrites every gesture element with its attributes in a permuted order.
    fn permute_attributes(xml: &str, seed: usize) -> String {
        xml.lines()
            .map(|line| {
                let Some(inner) = line.trim().strip_prefix("<gesture ").and_then(|l| l.strip_suffix(" />")) else {
                    return line.to_string();
                };
                let mut attrs: Vec<&str> = inner.split("\" ").map(|a| a.trim_end_matches('"')).collect();
                let n = attrs.len();
                attrs.rotate_left(seed % n);
                if seed % 2 == 1 {
                    attrs.reverse();
                }
                let body: Vec<String> = attrs.iter().map(|a| format!("{a}\"")).collect();
                format!("\t<gesture\n   {}/>", body.join("  "))
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    proptest! {
        #[test]
        fn round_trip_and_fixpoint(doc in arb_document(), seed in 0usize..12) {
            prop_assert!(doc.validate().is_ok());
            let xml = serialize(&doc);
            let back = parse(&xml).unwrap();
            prop_assert_eq!(&back, &doc);
            prop_assert_eq!(serialize(&back), xml.clone());
            let permuted = permute_attributes(&xml, seed);
            prop_assert_eq!(parse(&permuted).unwrap(), doc);
        }

        #[test]
        fn marks_in_speech_are_sequential(doc in arb_document()) {
            let fragment = doc.speech_fragment();
            let names: Vec<usize> = fragment.match_indices("<mark name=\"T")
                .map(|(i, _)| fragment[i + 13..].split('"').next().unwrap().parse().unwrap())
                .collect();
            prop_assert_eq!(names, (0..doc.mark_count()).collect::<Vec<_>>());
        }

        #[test]
        fn parse_never_panics(xml in "[<>/a-z =\"'&;#0-9\n!?-]{0,120}") {
            let _ = parse(&xml);
        }
    }
}
