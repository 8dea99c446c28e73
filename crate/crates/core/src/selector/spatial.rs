//! Spatial planning for ideational units: the model groups phrases under
//! image-schema headers and says where each gesture begins and ends in
//! gesture space.
//!
//! ```text
//! [Type of Image Schema: PATH]
//!     ["coming together" : hands move toward each other :
//!        Spatially Begins:Left and Right : Spatially Ends:Center]
//! ```

use std::collections::BTreeSet;

use super::backend::{Backend, CompletionParams};
use super::proposal::{ParsedProposals, ProposalError};
use super::{exchange, BackendExchange, GestureProposal, PromptTemplates, SelectError, Side, SpatialExtent};
use crate::textproc::{locate_phrase, Utterance};

const SCHEMA_HEADER: &str = "type of image schema";
const BEGINS: &str = "spatially begins";
const ENDS: &str = "spatially ends";
const CONNECTIVES: &[&str] = &["and", "or", "both", "the", "side", "sides", "to"];

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialSelection {
    pub proposals: Vec<GestureProposal>,
    pub warnings: Vec<String>,
    pub exchange: BackendExchange,
}

/// Parses a set of sides such as "Left and Right" or "center".
pub fn parse_sides(text: &str) -> Result<BTreeSet<Side>, String> {
    let mut sides = BTreeSet::new();
    for word in text
        .split(|c: char| !c.is_alphabetic())
        .filter(|w| !w.is_empty())
    {
        let side = match word.to_lowercase().as_str() {
            "left" => Side::Left,
            "right" => Side::Right,
            "center" | "centre" | "middle" => Side::Center,
            w if CONNECTIVES.contains(&w) => continue,
            _ => return Err(format!("unknown side {word:?}")),
        };
        sides.insert(side);
    }
    if sides.is_empty() {
        return Err(format!("no side in {text:?}"));
    }
    Ok(sides)
}

/// Contents of the top-level `[...]` groups, whitespace-collapsed.
fn bracket_groups(raw: &str) -> (Vec<String>, bool) {
    let mut groups = Vec::new();
    let mut depth = 0usize;
    let mut start = 0;
    for (i, c) in raw.char_indices() {
        match c {
            '[' => {
                if depth == 0 {
                    start = i + 1;
                }
                depth += 1;
            }
            ']' if depth > 0 => {
                depth -= 1;
                if depth == 0 {
                    let inner = &raw[start..i];
                    groups.push(inner.split_whitespace().collect::<Vec<_>>().join(" "));
                }
            }
            _ => {}
        }
    }
    (groups, depth > 0)
}

fn find_ci(haystack: &str, needle: &str) -> Option<usize> {
    haystack.to_ascii_lowercase().find(needle)
}

fn trim_field(s: &str) -> &str {
    s.trim_matches(|c: char| c == ':' || c.is_whitespace())
}

struct Entry {
    phrase: String,
    gesture: String,
    begin: BTreeSet<Side>,
    end: BTreeSet<Side>,
}

fn split_phrase(head: &str) -> Result<(String, String), String> {
    let head = head.trim();
    let quoted = head
        .strip_prefix('"')
        .map(|rest| (rest, '"'))
        .or_else(|| head.strip_prefix('\u{201c}').map(|rest| (rest, '\u{201d}')));
    let (phrase, gesture) = match quoted {
        Some((rest, close)) => {
            let end = rest.find(close).ok_or("unterminated quoted phrase")?;
            (&rest[..end], &rest[end + close.len_utf8()..])
        }
        None => head.split_once(':').ok_or("no phrase separator")?,
    };
    let phrase = trim_field(phrase);
    if phrase.is_empty() {
        return Err("empty phrase".into());
    }
    Ok((phrase.to_string(), trim_field(gesture).to_string()))
}

fn parse_entry(content: &str) -> Result<Entry, String> {
    let (head, begin, end) = match find_ci(content, BEGINS) {
        Some(b) => {
            let rest = &content[b + BEGINS.len()..];
            let e = find_ci(rest, ENDS).ok_or("missing Spatially Ends")?;
            (&content[..b], &rest[..e], &rest[e + ENDS.len()..])
        }
        None => {
            let fields: Vec<&str> = content.rsplitn(3, ':').collect();
            if fields.len() < 3 {
                return Err("expected phrase : gesture : begins : ends".into());
            }
            (fields[2], fields[1], fields[0])
        }
    };
    let (phrase, gesture) = split_phrase(head)?;
    Ok(Entry {
        phrase,
        gesture,
        begin: parse_sides(trim_field(begin))?,
        end: parse_sides(trim_field(end))?,
    })
}

/// Parses a spatial-planning response. Lines that cannot be read and
/// phrases that cannot be located are skipped with a warning.
pub fn parse_spatial(raw: &str, utt: &Utterance) -> Result<ParsedProposals, ProposalError> {
    let (groups, unclosed) = bracket_groups(raw);
    let mut warnings = Vec::new();
    if unclosed {
        warnings.push("unclosed bracket at end of response".to_string());
    }
    let mut schema: Option<String> = None;
    let mut proposals = Vec::new();
    for group in groups {
        if group.is_empty() {
            continue;
        }
        if group.to_ascii_lowercase().starts_with(SCHEMA_HEADER) {
            let name = trim_field(&group[SCHEMA_HEADER.len()..]);
            schema = (!name.is_empty()).then(|| name.to_string());
            continue;
        }
        let entry = match parse_entry(&group) {
            Ok(entry) => entry,
            Err(e) => {
                warnings.push(format!("[{group}]: {e}"));
                continue;
            }
        };
        let Some(schema) = &schema else {
            warnings.push(format!("[{group}]: entry outside any image schema"));
            continue;
        };
        match locate_phrase(utt, &entry.phrase) {
            Ok(span) => {
                let mut p = GestureProposal::new(schema.clone(), entry.phrase, span);
                p.image_schema = Some(schema.clone());
                p.physical_description = (!entry.gesture.is_empty()).then_some(entry.gesture);
                p.spatial = Some(SpatialExtent {
                    begin: entry.begin,
                    end: entry.end,
                });
                proposals.push(p);
            }
            Err(e) => warnings.push(format!("[{group}]: {e}")),
        }
    }
    if proposals.is_empty() {
        return Err(ProposalError::EmptyProposalSet { warnings });
    }
    Ok(ParsedProposals { proposals, warnings })
}

/// Asks the backend for a spatial plan of `utt`.
pub async fn spatial_select(
    utt: &Utterance,
    backend: &dyn Backend,
    templates: &PromptTemplates,
    params: &CompletionParams,
) -> Result<SpatialSelection, SelectError> {
    let ex = exchange(backend, templates.spatial(utt), params).await?;
    let parsed = parse_spatial(&ex.raw_response, utt)?;
    Ok(SpatialSelection {
        proposals: parsed.proposals,
        warnings: parsed.warnings,
        exchange: ex,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::selector::MockBackend;
    use crate::textproc::tokenize;
    use proptest::prelude::*;

    fn set(sides: &[Side]) -> BTreeSet<Side> {
        sides.iter().copied().collect()
    }

    #[test]
    fn sides() {
        assert_eq!(parse_sides("Left and Right").unwrap(), set(&[Side::Left, Side::Right]));
        assert_eq!(parse_sides("centre").unwrap(), set(&[Side::Center]));
        assert_eq!(parse_sides("left/center").unwrap(), set(&[Side::Left, Side::Center]));
        assert!(parse_sides("up").is_err());
        assert!(parse_sides(" ").is_err());
    }

    #[test]
    fn transcript_replay() {
        let utt = tokenize(include_str!("../../data/spatial_utterance.txt"));
        let raw = include_str!("../../data/spatial_transcript.txt");
        let parsed = parse_spatial(raw, &utt).unwrap();
        assert_eq!(parsed.proposals.len(), 5, "{:?}", parsed.warnings);
        let find = |phrase: &str| parsed.proposals.iter().find(|p| p.phrase == phrase).unwrap();
        let coming = find("coming together");
        assert_eq!(coming.image_schema.as_deref(), Some("PATH"));
        let extent = coming.spatial.as_ref().unwrap();
        assert_eq!(extent.begin, set(&[Side::Left, Side::Right]));
        assert_eq!(extent.end, set(&[Side::Center]));
        let seiu = find("with SEIU-1199");
        assert_eq!(seiu.image_schema.as_deref(), Some("CONTAINER"));
        assert_eq!(seiu.spatial.as_ref().unwrap().begin, set(&[Side::Center]));
        assert_eq!(find("provide for care").image_schema.as_deref(), Some("SUPPORT"));
    }

    #[test]
    fn unquoted_and_plain_colon_forms() {
        let utt = tokenize("We gather in one place.");
        let raw = "[Type of Image Schema: PATH]\n[We gather : hands meet : Left and Right : Center]";
        let p = parse_spatial(raw, &utt).unwrap().proposals;
        assert_eq!(p[0].phrase, "We gather");
        assert_eq!(p[0].spatial.as_ref().unwrap().end, set(&[Side::Center]));
    }

    #[test]
    fn template_echo_and_bad_lines_are_skipped() {
        let utt = tokenize("We gather in one place.");
        let raw = "[Type of Image Schema:]\n[Phrase : Gesture : Spatially Begins: Spatially Ends]\n\
                   [Type of Image Schema: PATH]\n[\"absent\" : x : Spatially Begins:Left : Spatially Ends:Right]\n\
                   [\"in one place\" : x : Spatially Begins:Up : Spatially Ends:Right]\n\
                   [\"We gather\" : x : Spatially Begins:Left : Spatially Ends:Right]";
        let parsed = parse_spatial(raw, &utt).unwrap();
        assert_eq!(parsed.proposals.len(), 1);
        assert_eq!(parsed.warnings.len(), 3);
    }

    #[test]
    fn empty_responses() {
        let utt = tokenize("We gather.");
        assert!(matches!(parse_spatial("[]", &utt), Err(ProposalError::EmptyProposalSet { .. })));
        assert!(matches!(parse_spatial("", &utt), Err(ProposalError::EmptyProposalSet { .. })));
    }

    #[tokio::test]
    async fn mock_spatial_round_trip() {
        let utt = tokenize("We keep coming together, moving forward into a trust fund.");
        let sel = spatial_select(&utt, &MockBackend::new(), &PromptTemplates::builtin(), &CompletionParams::default())
            .await
            .unwrap();
        assert_eq!(sel.proposals.len(), 3);
        assert!(sel.proposals.iter().all(|p| p.spatial.is_some() && p.image_schema.is_some()));
    }

    proptest! {
        #[test]
        fn never_panics(raw in "[\\[\\]:\"a-zA-Z \n\u{201c}\u{201d}]{0,120}") {
            let _ = parse_spatial(&raw, &tokenize("a b c"));
        }
    }
}
