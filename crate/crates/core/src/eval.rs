//! Evaluation bookkeeping: model/speaker gesture alignment, expert
//! appropriateness tallies and latency statistics per prompting approach.

use std::collections::HashMap;
use std::fmt;
use std::io::BufRead;

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexicon::{AnnotationRecord, Corpus};
use crate::selector::{select_gestures, Approach, Backend, GestureProposal, PromptConfig, PromptContext};
use crate::textproc::WordSpan;

pub const DEFAULT_TOLERANCE: usize = 2;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no latency samples")]
    NoSamples,
    #[error("label \"no_corresponding_gesture\" is only valid in category 1")]
    NoCorrespondingInCategory2,
    #[error("line {line}: {message}")]
    Labels { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Category 1: a speaker gesture exists at or near the proposal. Category 2:
/// no ground truth to compare against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Category {
    GroundTruth,
    NoGroundTruth,
}

impl Category {
    pub fn number(self) -> u8 {
        match self {
            Category::GroundTruth => 1,
            Category::NoGroundTruth => 2,
        }
    }
}

impl Serialize for Category {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(self.number())
    }
}

impl<'de> Deserialize<'de> for Category {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match u8::deserialize(d)? {
            1 => Ok(Category::GroundTruth),
            2 => Ok(Category::NoGroundTruth),
            n => Err(serde::de::Error::custom(format!("category must be 1 or 2, got {n}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AppropriatenessLabel {
    Appropriate,
    Inappropriate,
    NoCorrespondingGesture,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignmentKind {
    Both,
    ModelOnly,
    SpeakerOnly,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentOutcome {
    pub kind: AlignmentKind,
    pub utterance_id: String,
    pub model_span: Option<WordSpan>,
    pub speaker_span: Option<WordSpan>,
}

/// Minimum-cost perfect assignment on a square cost matrix.
fn hungarian(cost: &[Vec<i64>]) -> Vec<usize> {
    let n = cost.len();
    let inf = i64::MAX / 4;
    // 1-based potentials over rows (u) and columns (v); p[j] is the row
    // assigned to column j
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

/// One-to-one matching of model spans to speaker spans. Two spans may pair
/// when they overlap or are at most `tolerance` tokens apart. The matching
/// has as many pairs as possible and, among those, the smallest total gap.
pub fn align(
    utterance_id: &str,
    model: &[WordSpan],
    speaker: &[WordSpan],
    tolerance: usize,
) -> Vec<AlignmentOutcome> {
    let n = model.len().max(speaker.len());
    let pairs = if model.is_empty() || speaker.is_empty() {
        Vec::new()
    } else {
        // a missed pair must cost more than any total of real gaps
        let miss = (tolerance as i64 + 1) * (n as i64 + 1);
        let cost: Vec<Vec<i64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| match (model.get(i), speaker.get(j)) {
                        (Some(m), Some(s)) if m.gap(*s) <= tolerance => m.gap(*s) as i64,
                        _ => miss,
                    })
                    .collect()
            })
            .collect();
        hungarian(&cost)
            .into_iter()
            .enumerate()
            .filter(|&(i, j)| cost[i][j] < miss)
            .collect()
    };
    let outcome = |kind, m: Option<WordSpan>, s: Option<WordSpan>| AlignmentOutcome {
        kind,
        utterance_id: utterance_id.to_string(),
        model_span: m,
        speaker_span: s,
    };
    let mut model_matched = vec![false; model.len()];
    let mut speaker_matched = vec![false; speaker.len()];
    let mut out = Vec::new();
    for &(i, j) in &pairs {
        model_matched[i] = true;
        speaker_matched[j] = true;
        out.push(outcome(AlignmentKind::Both, Some(model[i]), Some(speaker[j])));
    }
    for (i, _) in model_matched.iter().enumerate().filter(|(_, m)| !**m) {
        out.push(outcome(AlignmentKind::ModelOnly, Some(model[i]), None));
    }
    for (j, _) in speaker_matched.iter().enumerate().filter(|(_, m)| !**m) {
        out.push(outcome(AlignmentKind::SpeakerOnly, None, Some(speaker[j])));
    }
    out
}

/// [`align`] over proposals and ground-truth annotations of one utterance.
pub fn align_proposals(
    utterance_id: &str,
    proposals: &[GestureProposal],
    annotations: &[&AnnotationRecord],
    tolerance: usize,
) -> Vec<AlignmentOutcome> {
    let model: Vec<WordSpan> = proposals.iter().map(|p| p.span).collect();
    let speaker: Vec<WordSpan> = annotations.iter().map(|a| a.span).collect();
    align(utterance_id, &model, &speaker, tolerance)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentCounts {
    pub both: usize,
    pub model_only: usize,
    pub speaker_only: usize,
}

impl AlignmentCounts {
    pub fn add(&mut self, outcomes: &[AlignmentOutcome]) {
        for o in outcomes {
            match o.kind {
                AlignmentKind::Both => self.both += 1,
                AlignmentKind::ModelOnly => self.model_only += 1,
                AlignmentKind::SpeakerOnly => self.speaker_only += 1,
            }
        }
    }

    pub fn misaligned(&self) -> usize {
        self.model_only + self.speaker_only
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub appropriate: usize,
    pub inappropriate: usize,
    pub no_corresponding_gesture: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tallies {
    pub category1: LabelCounts,
    pub category2: LabelCounts,
}

pub fn tally(labels: &[(Category, AppropriatenessLabel)]) -> Result<Tallies, EvalError> {
    let mut t = Tallies::default();
    for &(category, label) in labels {
        let counts = match category {
            Category::GroundTruth => &mut t.category1,
            Category::NoGroundTruth => &mut t.category2,
        };
        match label {
            AppropriatenessLabel::Appropriate => counts.appropriate += 1,
            AppropriatenessLabel::Inappropriate => counts.inappropriate += 1,
            AppropriatenessLabel::NoCorrespondingGesture if category == Category::NoGroundTruth => {
                return Err(EvalError::NoCorrespondingInCategory2)
            }
            AppropriatenessLabel::NoCorrespondingGesture => counts.no_corresponding_gesture += 1,
        }
    }
    Ok(t)
}

/// Seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

impl fmt::Display for LatencyStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "min {:.2} s, max {:.2} s, mean {:.2} s", self.min, self.max, self.mean)
    }
}

pub fn latency_stats(samples: &[f64]) -> Result<LatencyStats, EvalError> {
    let (&first, rest) = samples.split_first().ok_or(EvalError::NoSamples)?;
    let (min, max) = rest
        .iter()
        .fold((first, first), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let mean = (samples.iter().sum::<f64>() / samples.len() as f64).clamp(min, max);
    Ok(LatencyStats { min, max, mean })
}

/// One line of an expert label file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelRecord {
    pub approach: Approach,
    pub utterance_id: String,
    /// Which proposal of the utterance was judged; absent for
    /// "no corresponding gesture".
    pub proposal_index: Option<usize>,
    pub category: Category,
    pub label: AppropriatenessLabel,
}

pub fn load_labels<R: BufRead>(source: R) -> Result<Vec<LabelRecord>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| EvalError::Labels { line: i + 1, message };
        let record: LabelRecord = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        if record.category == Category::NoGroundTruth
            && record.label == AppropriatenessLabel::NoCorrespondingGesture
        {
            return Err(bad(EvalError::NoCorrespondingInCategory2.to_string()));
        }
        out.push(record);
    }
    Ok(out)
}

/// Appropriateness labels for the bundled recordings.
pub fn replica_labels() -> Vec<LabelRecord> {
    load_labels(include_str!("../data/replica_labels.jsonl").as_bytes()).expect("bundled labels are valid")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtteranceFailure {
    pub utterance_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproachReport {
    pub approach: Approach,
    pub utterances: usize,
    pub proposals: usize,
    pub alignment: AlignmentCounts,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub appropriateness: Option<Tallies>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub latency: Option<LatencyStats>,
    pub failures: Vec<UtteranceFailure>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tolerance: usize,
    pub approaches: Vec<ApproachReport>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalOptions {
    pub tolerance: usize,
    /// Concurrent backend calls.
    pub parallelism: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            tolerance: DEFAULT_TOLERANCE,
            parallelism: 1,
        }
    }
}

/// Runs gesture selection on every test utterance under each config and
/// scores it. Selection failures are recorded per utterance. Labels, when
/// given, are tallied per approach.
pub async fn compare_approaches(
    corpus: &Corpus,
    configs: &[PromptConfig],
    backend: &dyn Backend,
    ctx: &PromptContext,
    labels: Option<&[LabelRecord]>,
    options: EvalOptions,
) -> Result<EvalReport, EvalError> {
    let mut report = EvalReport {
        tolerance: options.tolerance,
        approaches: Vec::new(),
    };
    for config in configs {
        let results: Vec<_> = stream::iter(corpus.test_utterances())
            .map(|utt| async move { (utt, select_gestures(utt, config, backend, ctx).await) })
            .buffered(options.parallelism.max(1))
            .collect()
            .await;
        let mut section = ApproachReport {
            approach: config.approach,
            utterances: results.len(),
            proposals: 0,
            alignment: AlignmentCounts::default(),
            appropriateness: None,
            latency: None,
            failures: Vec::new(),
        };
        let mut samples = Vec::new();
        for (utt, result) in results {
            let annotations: Vec<&AnnotationRecord> = corpus.annotations_for(&utt.id).collect();
            let proposals = match result {
                Ok(selection) => {
                    samples.extend(selection.latency().map(|d| d.as_secs_f64()));
                    selection.proposals
                }
                Err(e) => {
                    section.failures.push(UtteranceFailure {
                        utterance_id: utt.id.clone(),
                        error: e.to_string(),
                    });
                    Vec::new()
                }
            };
            section.proposals += proposals.len();
            section
                .alignment
                .add(&align_proposals(&utt.id, &proposals, &annotations, options.tolerance));
        }
        section.latency = latency_stats(&samples).ok();
        if let Some(labels) = labels {
            let pairs: Vec<_> = labels
                .iter()
                .filter(|l| l.approach == config.approach)
                .map(|l| (l.category, l.label))
                .collect();
            section.appropriateness = Some(tally(&pairs)?);
        }
        report.approaches.push(section);
    }
    Ok(report)
}

/// Plain-text table of a report, one row per approach.
pub fn render_table(report: &EvalReport) -> String {
    let mut out = format!(
        "{:<8} {:>5} {:>10} {:>12} {:>6} {:>6} {:>6} {:>6} {:>6} {:>9} {:>6}\n",
        "approach", "both", "model_only", "speaker_only", "c1_A", "c1_I", "c1_NCG", "c2_A", "c2_I", "mean_s", "failed"
    );
    for a in &report.approaches {
        let t = a.appropriateness;
        let cell = |f: fn(&Tallies) -> usize| t.as_ref().map(|t| f(t).to_string()).unwrap_or_else(|| "-".into());
        out.push_str(&format!(
            "{:<8} {:>5} {:>10} {:>12} {:>6} {:>6} {:>6} {:>6} {:>6} {:>9} {:>6}\n",
            a.approach.index(),
            a.alignment.both,
            a.alignment.model_only,
            a.alignment.speaker_only,
            cell(|t| t.category1.appropriate),
            cell(|t| t.category1.inappropriate),
            cell(|t| t.category1.no_corresponding_gesture),
            cell(|t| t.category2.appropriate),
            cell(|t| t.category2.inappropriate),
            a.latency.map(|l| format!("{:.2}", l.mean)).unwrap_or_else(|| "-".into()),
            a.failures.len(),
        ));
    }
    out
}

/// Labels grouped by approach, for callers that want per-approach access.
pub fn labels_by_approach(labels: &[LabelRecord]) -> HashMap<Approach, Vec<&LabelRecord>> {
    let mut out: HashMap<Approach, Vec<&LabelRecord>> = HashMap::new();
    for l in labels {
        out.entry(l.approach).or_default().push(l);
    }
    out
}
