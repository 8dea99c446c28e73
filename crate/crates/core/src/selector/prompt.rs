//! Prompt templates and prompt construction for the four prompting approaches.
//!
//! Each approach is one cell of the (intent list given / not given) x
//! (annotated examples given / not given) design. Templates are plain text
//! files with `{UTTERANCE}`, `{INTENT_LIST}`, `{EXAMPLES}` and
//! `{RESPONSE_FORMAT}` placeholders.

use std::path::Path;

use thiserror::Error;

use crate::lexicon::{Corpus, GestureLexicon};
use crate::textproc::Utterance;

use super::{Approach, PromptConfig};

pub const TEMPLATE_VERSION: &str = "v1";

/// First line of a rendered intent list.
pub const INTENT_LIST_HEADER: &str = "GESTURAL INTENTS";
/// First line of a rendered example block.
pub const EXAMPLES_HEADER: &str = "ANNOTATED EXAMPLES";
/// Prefix of the line carrying the utterance in every template.
pub const UTTERANCE_PREFIX: &str = "Utterance: ";

const UTTERANCE: &str = "{UTTERANCE}";
const INTENT_LIST: &str = "{INTENT_LIST}";
const EXAMPLES: &str = "{EXAMPLES}";
const RESPONSE_FORMAT: &str = "{RESPONSE_FORMAT}";

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("approach {0} needs a corpus with training annotations")]
    MissingCorpus(u8),
    #[error("template {name}: {problem}")]
    BadTemplate { name: String, problem: String },
    #[error("reading template {name}: {source}")]
    Io {
        name: String,
        source: std::io::Error,
    },
}

/// All prompt resources. [`PromptTemplates::builtin`] carries the bundled
/// set; [`PromptTemplates::load_dir`] overrides any of them from files with
/// the same names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    approaches: [String; 4],
    format_intent: String,
    format_intent_truncated: String,
    format_free: String,
    format_free_truncated: String,
    reminder: String,
    rheme_theme: String,
    spatial: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self::builtin()
    }
}

impl PromptTemplates {
    pub fn builtin() -> Self {
        Self {
            approaches: [
                include_str!("../../templates/gesture_approach0.txt").to_string(),
                include_str!("../../templates/gesture_approach1.txt").to_string(),
                include_str!("../../templates/gesture_approach2.txt").to_string(),
                include_str!("../../templates/gesture_approach3.txt").to_string(),
            ],
            format_intent: include_str!("../../templates/format_intent.txt").to_string(),
            format_intent_truncated: include_str!("../../templates/format_intent_truncated.txt")
                .to_string(),
            format_free: include_str!("../../templates/format_free.txt").to_string(),
            format_free_truncated: include_str!("../../templates/format_free_truncated.txt")
                .to_string(),
            reminder: include_str!("../../templates/format_reminder.txt").to_string(),
            rheme_theme: include_str!("../../templates/rheme_theme.txt").to_string(),
            spatial: include_str!("../../templates/spatial.txt").to_string(),
        }
    }

    pub fn load_dir(dir: &Path) -> Result<Self, PromptError> {
        let mut templates = Self::builtin();
        let slots: Vec<(&str, &mut String)> = {
            let [a0, a1, a2, a3] = &mut templates.approaches;
            vec![
                ("gesture_approach0.txt", a0),
                ("gesture_approach1.txt", a1),
                ("gesture_approach2.txt", a2),
                ("gesture_approach3.txt", a3),
                ("format_intent.txt", &mut templates.format_intent),
                ("format_intent_truncated.txt", &mut templates.format_intent_truncated),
                ("format_free.txt", &mut templates.format_free),
                ("format_free_truncated.txt", &mut templates.format_free_truncated),
                ("format_reminder.txt", &mut templates.reminder),
                ("rheme_theme.txt", &mut templates.rheme_theme),
                ("spatial.txt", &mut templates.spatial),
            ]
        };
        for (name, slot) in slots {
            let path = dir.join(name);
            if path.exists() {
                *slot = std::fs::read_to_string(&path).map_err(|source| PromptError::Io {
                    name: name.to_string(),
                    source,
                })?;
            }
        }
        templates.validate()?;
        Ok(templates)
    }

    /// Checks that every approach template has exactly the placeholders its
    /// factorial cell calls for.
    pub fn validate(&self) -> Result<(), PromptError> {
        for approach in Approach::ALL {
            let name = format!("gesture_approach{}.txt", approach.index());
            let text = &self.approaches[approach.index() as usize];
            let bad = |problem: String| PromptError::BadTemplate {
                name: name.clone(),
                problem,
            };
            let utterance_line = format!("{UTTERANCE_PREFIX}{UTTERANCE}");
            if !text.lines().any(|l| l == utterance_line) {
                return Err(bad(format!("needs a line {utterance_line:?}")));
            }
            if !text.contains(RESPONSE_FORMAT) {
                return Err(bad(format!("missing {RESPONSE_FORMAT}")));
            }
            if text.contains(INTENT_LIST) != approach.has_intent_list() {
                return Err(bad(format!("{INTENT_LIST} presence must match the approach")));
            }
            if text.contains(EXAMPLES) != approach.has_examples() {
                return Err(bad(format!("{EXAMPLES} presence must match the approach")));
            }
        }
        for (name, text) in [("rheme_theme.txt", &self.rheme_theme), ("spatial.txt", &self.spatial)] {
            if !text.contains(UTTERANCE) {
                return Err(PromptError::BadTemplate {
                    name: name.to_string(),
                    problem: format!("missing {UTTERANCE}"),
                });
            }
        }
        Ok(())
    }

    pub fn approach(&self, approach: Approach) -> &str {
        &self.approaches[approach.index() as usize]
    }

    pub fn response_format(&self, approach: Approach, truncated: bool) -> &str {
        match (approach == Approach::Baseline, truncated) {
            (false, false) => &self.format_intent,
            (false, true) => &self.format_intent_truncated,
            (true, false) => &self.format_free,
            (true, true) => &self.format_free_truncated,
        }
    }

    pub fn reminder(&self) -> &str {
        &self.reminder
    }

    pub fn rheme_theme(&self, utt: &Utterance) -> String {
        self.rheme_theme.replace(UTTERANCE, &utt.normalized_text())
    }

    pub fn spatial(&self, utt: &Utterance) -> String {
        self.spatial.replace(UTTERANCE, &utt.normalized_text())
    }
}

pub fn render_intent_list(lexicon: &GestureLexicon) -> String {
    let mut out = String::from(INTENT_LIST_HEADER);
    for intent in lexicon.intents() {
        out.push_str(&format!("\n- {}: {}", intent.name, intent.definition));
    }
    out
}

pub fn render_examples(corpus: &Corpus) -> String {
    let mut out = String::from(EXAMPLES_HEADER);
    for record in corpus.training() {
        let Some(utt) = corpus.utterance(&record.utterance_id) else {
            continue;
        };
        out.push_str(&format!(
            "\n- \"{}\" -> {} gesture",
            utt.normalized_text(),
            record.category
        ));
        if let Some(intent) = &record.intent {
            out.push_str(&format!(", intent: {intent}"));
        }
        out.push_str(&format!(", phrase: \"{}\"", utt.span_text(record.span)));
    }
    out
}

/// Renders the gesture-selection prompt for `config.approach`.
pub fn build_prompt(
    templates: &PromptTemplates,
    config: &PromptConfig,
    utt: &Utterance,
    lexicon: &GestureLexicon,
    corpus: Option<&Corpus>,
) -> Result<String, PromptError> {
    let approach = config.approach;
    let mut prompt = templates.approach(approach).to_string();
    if approach.has_intent_list() {
        prompt = prompt.replace(INTENT_LIST, &render_intent_list(lexicon));
    }
    if approach.has_examples() {
        let corpus = corpus.ok_or(PromptError::MissingCorpus(approach.index()))?;
        prompt = prompt.replace(EXAMPLES, &render_examples(corpus));
    }
    prompt = prompt.replace(
        RESPONSE_FORMAT,
        templates.response_format(approach, config.truncated).trim_end(),
    );
    // utterance last so its text is never scanned for placeholders
    Ok(prompt.replace(UTTERANCE, &utt.normalized_text()))
}

/// What a rendered prompt reveals about how it was built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptInspection<'a> {
    pub has_intent_list: bool,
    pub has_examples: bool,
    /// The last `Utterance: ` line, without the prefix.
    pub utterance: Option<&'a str>,
}

impl PromptInspection<'_> {
    pub fn approach(&self) -> Approach {
        Approach::from_cell(self.has_intent_list, self.has_examples)
    }
}

pub fn inspect_prompt(prompt: &str) -> PromptInspection<'_> {
    PromptInspection {
        has_intent_list: prompt.lines().any(|l| l == INTENT_LIST_HEADER),
        has_examples: prompt.lines().any(|l| l == EXAMPLES_HEADER),
        utterance: prompt
            .lines()
            .filter_map(|l| l.strip_prefix(UTTERANCE_PREFIX))
            .last(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::replica_corpus;
    use crate::textproc::tokenize;

    fn config(approach: Approach) -> PromptConfig {
        PromptConfig {
            approach,
            ..PromptConfig::default()
        }
    }

    #[test]
    fn approach_zero_has_no_prior_information() {
        let lex = GestureLexicon::builtin();
        let utt = tokenize("We put it into a trust fund.");
        let p = build_prompt(&PromptTemplates::builtin(), &config(Approach::Baseline), &utt, &lex, None).unwrap();
        for intent in lex.intents() {
            assert!(!p.contains(&intent.definition));
        }
        assert!(!p.contains(INTENT_LIST_HEADER) && !p.contains(EXAMPLES_HEADER));
        assert!(p.contains("\"description\""));
        assert!(p.ends_with("Utterance: We put it into a trust fund.\n"));
    }

    #[test]
    fn approach_three_has_everything() {
        let lex = GestureLexicon::builtin();
        let corpus = replica_corpus();
        let utt = tokenize("We put it into a trust fund.");
        let p = build_prompt(&PromptTemplates::builtin(), &config(Approach::Combined), &utt, &lex, Some(&corpus)).unwrap();
        assert_eq!(lex.intents().len(), 7);
        for intent in lex.intents() {
            assert!(p.contains(&format!("- {}: {}", intent.name, intent.definition)));
        }
        let examples = render_examples(&corpus);
        assert_eq!(examples.lines().count(), 1 + 21);
        assert!(p.contains(&examples));
    }

    #[test]
    fn approaches_one_and_two_differ_by_cell() {
        let lex = GestureLexicon::builtin();
        let corpus = replica_corpus();
        let utt = tokenize("Our values have not changed.");
        let t = PromptTemplates::builtin();
        let p1 = build_prompt(&t, &config(Approach::IntentList), &utt, &lex, Some(&corpus)).unwrap();
        let p2 = build_prompt(&t, &config(Approach::Examples), &utt, &lex, Some(&corpus)).unwrap();
        let i1 = inspect_prompt(&p1);
        let i2 = inspect_prompt(&p2);
        assert!(i1.has_intent_list && !i1.has_examples);
        assert!(!i2.has_intent_list && i2.has_examples);
        assert_eq!(i1.approach(), Approach::IntentList);
        assert_eq!(i2.approach(), Approach::Examples);
        assert_eq!(i1.utterance, Some("Our values have not changed."));
    }

    #[test]
    fn missing_corpus_is_a_configuration_error() {
        let lex = GestureLexicon::builtin();
        let utt = tokenize("x");
        for a in [Approach::Examples, Approach::Combined] {
            assert!(matches!(
                build_prompt(&PromptTemplates::builtin(), &config(a), &utt, &lex, None),
                Err(PromptError::MissingCorpus(_))
            ));
        }
    }

    #[test]
    fn truncated_drops_physical_properties() {
        let lex = GestureLexicon::builtin();
        let utt = tokenize("x");
        let cfg = PromptConfig { truncated: true, ..config(Approach::IntentList) };
        let p = build_prompt(&PromptTemplates::builtin(), &cfg, &utt, &lex, None).unwrap();
        assert!(!p.contains("description"));
        assert!(p.contains("\"intent\"") && p.contains("\"phrase\""));
    }

    #[test]
    fn placeholders_in_utterance_are_literal() {
        let lex = GestureLexicon::builtin();
        let utt = tokenize("say {INTENT_LIST} loudly");
        let p = build_prompt(&PromptTemplates::builtin(), &config(Approach::Baseline), &utt, &lex, None).unwrap();
        assert!(p.contains("Utterance: say {INTENT_LIST} loudly"));
        assert!(!inspect_prompt(&p).has_intent_list);
    }

    #[test]
    fn builtin_templates_validate_and_bad_ones_fail() {
        PromptTemplates::builtin().validate().unwrap();
        let mut t = PromptTemplates::builtin();
        t.approaches[0] = t.approaches[1].clone();
        assert!(matches!(t.validate(), Err(PromptError::BadTemplate { .. })));

        let dir = std::env::temp_dir().join(format!("gesturegen-templates-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        std::fs::write(dir.join("gesture_approach2.txt"), "no placeholders\n").unwrap();
        assert!(PromptTemplates::load_dir(&dir).is_err());
        std::fs::write(
            dir.join("gesture_approach2.txt"),
            "Custom\n{EXAMPLES}\n{RESPONSE_FORMAT}\nUtterance: {UTTERANCE}\n",
        )
        .unwrap();
        let t = PromptTemplates::load_dir(&dir).unwrap();
        assert!(t.approach(Approach::Examples).starts_with("Custom"));
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
