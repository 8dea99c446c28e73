//! Deterministic keyword-rule backend for offline runs and tests.
//!
//! The mock reads the prompt it is given: it recognises the gesture, rheme
//! and spatial tasks, which approach cell a gesture prompt belongs to, and
//! whether physical descriptions were asked for.

use async_trait::async_trait;
use serde_json::json;

use super::backend::{Backend, BackendError, CompletionParams};
use super::prompt::{inspect_prompt, UTTERANCE_PREFIX};
use super::Approach;
use crate::textproc::{normalize_word, tokenize, Utterance};

struct Rule {
    intent: &'static str,
    words: &'static [&'static str],
    prefixes: &'static [&'static str],
    free_name: &'static str,
    description: &'static str,
    schema: &'static str,
    begin: &'static str,
    end: &'static str,
}

const RULES: &[Rule] = &[
    Rule {
        intent: "Container",
        words: &["into", "inside", "within", "fund", "box", "bucket", "pool"],
        prefixes: &["contain"],
        free_name: "Cupped hands",
        description: "both hands curve to hold a bounded space in front of the torso",
        schema: "CONTAINER",
        begin: "Center",
        end: "Center",
    },
    Rule {
        intent: "Collect",
        words: &["together", "join", "bring"],
        prefixes: &["gather", "collect", "combin", "unite", "uniti"],
        free_name: "Hands converge",
        description: "open hands sweep inward from the sides and meet at the center",
        schema: "PATH",
        begin: "Left and Right",
        end: "Center",
    },
    Rule {
        intent: "Progress",
        words: &["forward", "ahead", "onward"],
        prefixes: &["progress", "advanc", "improv", "grow", "build"],
        free_name: "Forward sweep",
        description: "flat hand moves forward and to the right along a path",
        schema: "PATH",
        begin: "Left",
        end: "Right",
    },
    Rule {
        intent: "Regress",
        words: &["back", "backward", "backwards", "behind"],
        prefixes: &["regress", "return", "retreat", "declin"],
        free_name: "Backward sweep",
        description: "flat hand moves back toward the left along a path",
        schema: "PATH",
        begin: "Right",
        end: "Left",
    },
    Rule {
        intent: "Cycle",
        words: &["again", "around", "every", "cycle", "always"],
        prefixes: &["repeat", "cycl", "recurr"],
        free_name: "Rolling hands",
        description: "index finger traces repeated circles in front of the chest",
        schema: "CYCLE",
        begin: "Center",
        end: "Center",
    },
    Rule {
        intent: "Oscillation",
        words: &["whether", "either", "between", "maybe"],
        prefixes: &["balanc", "uncertain", "oscillat", "waver"],
        free_name: "Hand wobble",
        description: "palm down hand rocks from side to side",
        schema: "BALANCE",
        begin: "Left and Right",
        end: "Center",
    },
    Rule {
        intent: "Temporal",
        words: &["past", "future", "today", "tomorrow", "yesterday", "now", "years", "history", "used"],
        prefixes: &["histor", "generation"],
        free_name: "Timeline point",
        description: "hand places points along a left to right time line",
        schema: "PATH",
        begin: "Left",
        end: "Right",
    },
];

const SELF_WORDS: &[&str] = &["i", "we", "our", "my", "me", "us"];
const PHRASE_TAIL: usize = 3;
const INTENT_LIST_LIMIT: usize = 2;

fn rule_for(word: &str) -> Option<&'static Rule> {
    let w = normalize_word(word);
    if w.is_empty() {
        return None;
    }
    RULES.iter().find(|r| {
        r.words.contains(&w.as_str()) || r.prefixes.iter().any(|p| w.starts_with(p))
    })
}

fn ends_clause(word: &str) -> bool {
    word.ends_with(|c: char| c.is_ascii_punctuation() && !matches!(c, '\'' | '"' | ')' | '-'))
}

fn strip_edge_punct(phrase: &str) -> String {
    phrase
        .trim_matches(|c: char| !c.is_alphanumeric())
        .to_string()
}

/// The keyword token and up to three following tokens, stopping after a
/// token that closes a clause. Returns the phrase and the index after it.
fn phrase_from(utt: &Utterance, start: usize) -> (String, usize) {
    let mut end = start;
    while end + 1 < utt.len() && end - start < PHRASE_TAIL && !ends_clause(&utt.tokens[end].word) {
        end += 1;
    }
    let words: Vec<&str> = utt.tokens[start..=end].iter().map(|t| t.word.as_str()).collect();
    (strip_edge_punct(&words.join(" ")), end + 1)
}

struct Hit {
    rule: Option<&'static Rule>,
    phrase: String,
}

fn keyword_hits(utt: &Utterance, with_self: bool) -> Vec<Hit> {
    let mut hits = Vec::new();
    let mut i = 0;
    while i < utt.len() {
        let word = &utt.tokens[i].word;
        let rule = rule_for(word);
        let is_self = with_self && SELF_WORDS.contains(&normalize_word(word).as_str());
        if rule.is_some() || is_self {
            let (phrase, next) = phrase_from(utt, i);
            if !phrase.is_empty() {
                hits.push(Hit { rule, phrase });
                i = next;
                continue;
            }
        }
        i += 1;
    }
    hits
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Task {
    Gestures,
    RhemeTheme,
    Spatial,
}

fn classify(prompt: &str) -> Task {
    let instructions: String = prompt
        .lines()
        .filter(|l| !l.starts_with(UTTERANCE_PREFIX))
        .collect::<Vec<_>>()
        .join("\n");
    if instructions.contains("Spatially Begins") {
        Task::Spatial
    } else if instructions.contains("rheme") && instructions.contains("theme") {
        Task::RhemeTheme
    } else {
        Task::Gestures
    }
}

/// Keyword-rule backend. A pure function of the prompt.
#[derive(Debug, Clone, Default)]
pub struct MockBackend;

impl MockBackend {
    pub fn new() -> Self {
        Self
    }

    pub fn respond(&self, prompt: &str) -> String {
        let info = inspect_prompt(prompt);
        let utt = tokenize(info.utterance.unwrap_or_default());
        match classify(prompt) {
            Task::Gestures => gestures(&utt, info.approach(), !prompt.contains("\"description\"")),
            Task::RhemeTheme => rheme_theme(&utt),
            Task::Spatial => spatial(&utt),
        }
    }
}

fn gestures(utt: &Utterance, approach: Approach, truncated: bool) -> String {
    let free = approach == Approach::Baseline;
    let mut hits = keyword_hits(utt, free);
    if approach == Approach::IntentList {
        hits.truncate(INTENT_LIST_LIMIT);
    }
    let records: Vec<serde_json::Value> = hits
        .iter()
        .map(|hit| {
            let (name, description) = match hit.rule {
                Some(rule) if free => (rule.free_name, rule.description),
                Some(rule) => (rule.intent, rule.description),
                None => ("Point to self", "index finger points to own chest"),
            };
            let mut record = json!({"intent": name, "phrase": hit.phrase});
            if !truncated {
                record["description"] = json!(description);
            }
            record
        })
        .collect();
    let body = serde_json::Value::Array(records).to_string();
    if free && utt.len() % 2 == 1 {
        format!("Sure! Here are some gestures for this utterance:\n{body}\nLet me know if you need more.")
    } else {
        body
    }
}

fn rheme_theme(utt: &Utterance) -> String {
    let words: Vec<&str> = utt.words().collect();
    let boundary = words
        .iter()
        .position(|w| *w == "--" || w.ends_with(',') || w.ends_with(';'))
        .filter(|&b| b + 1 < words.len());
    let (theme, rheme) = match boundary {
        Some(b) => {
            let theme = strip_edge_punct(&words[..=b].join(" "));
            let rheme = strip_edge_punct(&words[b + 1..].join(" "));
            (if theme.is_empty() { None } else { Some(theme) }, rheme)
        }
        None => (None, strip_edge_punct(&words.join(" "))),
    };
    // an all-punctuation utterance still needs a locatable rheme
    let rheme = if rheme.is_empty() { words.join(" ") } else { rheme };
    json!({"theme": theme, "rheme": rheme}).to_string()
}

fn spatial(utt: &Utterance) -> String {
    let hits = keyword_hits(utt, false);
    let mut schemas: Vec<&str> = Vec::new();
    for hit in &hits {
        let schema = hit.rule.expect("no self hits").schema;
        if !schemas.contains(&schema) {
            schemas.push(schema);
        }
    }
    let mut out = String::from("Here are the image schemas in the utterance:\n");
    for schema in schemas {
        out.push_str(&format!("[Type of Image Schema: {schema}]\n"));
        for hit in hits.iter().filter(|h| h.rule.is_some_and(|r| r.schema == schema)) {
            let rule = hit.rule.unwrap();
            out.push_str(&format!(
                "\t[\"{}\" : {} : Spatially Begins:{} : Spatially Ends:{}]\n",
                hit.phrase, rule.description, rule.begin, rule.end
            ));
        }
    }
    out
}

#[async_trait]
impl Backend for MockBackend {
    async fn complete(&self, prompt: &str, _params: &CompletionParams) -> Result<String, BackendError> {
        Ok(self.respond(prompt))
    }

    fn name(&self) -> &str {
        "mock"
    }

    fn model_id(&self) -> &str {
        "keyword-rules-v1"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::{replica_corpus, GestureLexicon};
    use crate::selector::{build_prompt, parse_proposals, PromptConfig, PromptTemplates};

    fn prompt(approach: Approach, truncated: bool, text: &str) -> String {
        let config = PromptConfig { approach, truncated, ..PromptConfig::default() };
        build_prompt(
            &PromptTemplates::builtin(),
            &config,
            &tokenize(text),
            &GestureLexicon::builtin(),
            Some(&replica_corpus()),
        )
        .unwrap()
    }

    #[test]
    fn every_builtin_intent_has_a_rule() {
        let lex = GestureLexicon::builtin();
        let names: Vec<&str> = RULES.iter().map(|r| r.intent).collect();
        for intent in lex.intents() {
            assert!(names.contains(&intent.name.as_str()), "{}", intent.name);
        }
    }

    #[test]
    fn container_phrase_starts_at_keyword() {
        let text = "We put it into a trust fund.";
        let raw = MockBackend::new().respond(&prompt(Approach::Combined, false, text));
        let parsed = parse_proposals(&raw, &tokenize(text)).unwrap();
        assert_eq!(parsed.proposals.len(), 1);
        let p = &parsed.proposals[0];
        assert_eq!((p.intent.as_str(), p.phrase.as_str(), p.span.start), ("Container", "into a trust fund", 3));
        assert!(p.physical_description.is_some());
    }

    #[test]
    fn cells_change_the_answer() {
        let text = "We keep moving forward, together, into the future, again.";
        let m = MockBackend::new();
        let utt = tokenize(text);
        let n = |a| parse_proposals(&m.respond(&prompt(a, false, text)), &utt).unwrap().proposals;
        assert_eq!(n(Approach::IntentList).len(), 2);
        assert!(n(Approach::Combined).len() > 2);
        let free = n(Approach::Baseline);
        assert!(free.iter().any(|p| p.intent == "Point to self"));
        assert!(free.iter().all(|p| GestureLexicon::builtin().intent(&p.intent).is_none()));
    }

    #[test]
    fn truncated_prompts_get_no_descriptions() {
        let text = "We put it into a trust fund.";
        let raw = MockBackend::new().respond(&prompt(Approach::IntentList, true, text));
        assert!(!raw.contains("description"));
    }

    #[test]
    fn rheme_splits_at_first_clause_boundary() {
        let t = PromptTemplates::builtin();
        let utt = tokenize("As the workplace has changed, our values have not changed.");
        let raw = MockBackend::new().respond(&t.rheme_theme(&utt));
        let v: serde_json::Value = serde_json::from_str(&raw).unwrap();
        assert_eq!(v["theme"], "As the workplace has changed");
        assert_eq!(v["rheme"], "our values have not changed");
        let raw = MockBackend::new().respond(&t.rheme_theme(&tokenize("Hello.")));
        let v: serde_json::Value = serde_json::from_str(&raw).unwrap();
        assert!(v["theme"].is_null());
        assert_eq!(v["rheme"], "Hello");
    }

    #[test]
    fn deterministic() {
        let p = prompt(Approach::Baseline, false, "Bring it back together again.");
        assert_eq!(MockBackend::new().respond(&p), MockBackend::new().respond(&p));
    }
}
