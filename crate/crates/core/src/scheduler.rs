//! Absolute timing for BML gesture behaviors.
//!
//! Word timings come from the speech engine as a map from mark name to
//! seconds; [`synthetic_timings`] stands in when there is none. Each gesture
//! is prepared `prep_lead` seconds before its stroke and held for at least
//! `min_duration` seconds.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bml::{BmlDocument, GestureBehavior};
use crate::textproc::{mark_name, parse_mark_name, Utterance};

pub const DEFAULT_PREP_LEAD: f64 = 0.25;
pub const DEFAULT_MIN_DURATION: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScheduleError {
    #[error("seconds per word must be positive, got {0}")]
    NonPositiveRate(f64),
    #[error("no timing for mark {0}")]
    MissingMark(String),
    #[error("invalid mark name {0:?}")]
    BadMarkName(String),
    #[error("timing for {mark} must be a finite non-negative number, got {time}")]
    BadTime { mark: String, time: f64 },
    #[error("timing for {later} ({later_time}) is not after {earlier} ({earlier_time})")]
    NotIncreasing {
        earlier: String,
        earlier_time: f64,
        later: String,
        later_time: f64,
    },
    #[error("{0} must be a finite non-negative number")]
    BadParameter(&'static str),
    #[error("timing file: {0}")]
    Format(String),
}

/// Start time in seconds for each mark, keyed by mark index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WordTiming {
    times: BTreeMap<usize, f64>,
}

impl WordTiming {
    /// Checks that times are finite, non-negative and strictly increasing in
    /// mark index.
    pub fn new(times: BTreeMap<usize, f64>) -> Result<Self, ScheduleError> {
        let mut previous: Option<(usize, f64)> = None;
        for (&k, &t) in &times {
            if !t.is_finite() || t < 0.0 {
                return Err(ScheduleError::BadTime { mark: mark_name(k), time: t });
            }
            if let Some((pk, pt)) = previous {
                if t <= pt {
                    return Err(ScheduleError::NotIncreasing {
                        earlier: mark_name(pk),
                        earlier_time: pt,
                        later: mark_name(k),
                        later_time: t,
                    });
                }
            }
            previous = Some((k, t));
        }
        Ok(Self { times })
    }

    pub fn get(&self, mark: &str) -> Option<f64> {
        parse_mark_name(mark).and_then(|k| self.times.get(&k).copied())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (String, f64)> + '_ {
        self.times.iter().map(|(&k, &t)| (mark_name(k), t))
    }

    /// Parses a timing file, a JSON object `{"T0": 0.0, ...}`.
    pub fn from_json(text: &str) -> Result<Self, ScheduleError> {
        serde_json::from_str(text).map_err(|e| ScheduleError::Format(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("timings serialize")
    }
}

impl Serialize for WordTiming {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_map(self.iter())
    }
}

impl<'de> Deserialize<'de> for WordTiming {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let raw = BTreeMap::<String, f64>::deserialize(d)?;
        let mut times = BTreeMap::new();
        for (name, t) in raw {
            let k = parse_mark_name(&name)
                .ok_or_else(|| D::Error::custom(ScheduleError::BadMarkName(name.clone())))?;
            times.insert(k, t);
        }
        WordTiming::new(times).map_err(D::Error::custom)
    }
}

/// Mark `Tk` at `k * seconds_per_word`, trailing boundary mark included.
pub fn synthetic_timings(utt: &Utterance, seconds_per_word: f64) -> Result<WordTiming, ScheduleError> {
    if !(seconds_per_word > 0.0 && seconds_per_word.is_finite()) {
        return Err(ScheduleError::NonPositiveRate(seconds_per_word));
    }
    if utt.is_empty() {
        return Ok(WordTiming::default());
    }
    let times = (0..=utt.len()).map(|k| (k, k as f64 * seconds_per_word)).collect();
    WordTiming::new(times)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub behavior: GestureBehavior,
    pub stroke_time: f64,
    pub start_time: f64,
    pub end_time: f64,
}

impl ScheduleEntry {
    /// Whether the half-open intervals `[start, end)` intersect.
    pub fn overlaps(&self, other: &ScheduleEntry) -> bool {
        self.start_time < other.end_time && other.start_time < self.end_time
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dropped {
    pub behavior: GestureBehavior,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timeline {
    /// Surviving entries, by start time.
    pub entries: Vec<ScheduleEntry>,
    pub dropped: Vec<Dropped>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub prep_lead: f64,
    pub min_duration: f64,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        Self {
            prep_lead: DEFAULT_PREP_LEAD,
            min_duration: DEFAULT_MIN_DURATION,
        }
    }
}

/// Assigns absolute times to every gesture of `doc` and resolves overlaps.
///
/// An entry ends at `stroke + min_duration`, or later if the next gesture's
/// preparation starts later than that, so a gesture is held until the next
/// one takes over.
pub fn resolve_schedule(
    doc: &BmlDocument,
    timings: &WordTiming,
    params: ScheduleParams,
) -> Result<Timeline, ScheduleError> {
    if !(params.prep_lead.is_finite() && params.prep_lead >= 0.0) {
        return Err(ScheduleError::BadParameter("prep_lead"));
    }
    if !(params.min_duration.is_finite() && params.min_duration > 0.0) {
        return Err(ScheduleError::BadParameter("min_duration"));
    }
    let mut entries = doc
        .gestures
        .iter()
        .map(|g| {
            let stroke_time = timings
                .get(&g.stroke_start)
                .ok_or_else(|| ScheduleError::MissingMark(g.stroke_start.clone()))?;
            Ok(ScheduleEntry {
                behavior: g.clone(),
                stroke_time,
                start_time: (stroke_time - params.prep_lead).max(0.0),
                end_time: stroke_time + params.min_duration,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    entries.sort_by(|a, b| {
        a.stroke_time
            .total_cmp(&b.stroke_time)
            .then(a.behavior.priority.cmp(&b.behavior.priority))
    });
    // hold each gesture until the next distinct stroke's preparation begins
    for i in 0..entries.len() {
        let stroke = entries[i].stroke_time;
        if let Some(next) = entries[i + 1..].iter().find(|e| e.stroke_time > stroke) {
            entries[i].end_time = entries[i].end_time.max(next.start_time);
        }
    }
    Ok(resolve_conflicts(entries))
}

/// Keeps entries in priority order (lower number first, then earlier stroke),
/// skipping any that overlaps an entry already kept. Dropped entries carry
/// the reason "overlap".
pub fn resolve_conflicts(entries: Vec<ScheduleEntry>) -> Timeline {
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.sort_by(|&a, &b| {
        let (ea, eb) = (&entries[a], &entries[b]);
        ea.behavior
            .priority
            .cmp(&eb.behavior.priority)
            .then(ea.stroke_time.total_cmp(&eb.stroke_time))
            .then(a.cmp(&b))
    });
    let mut keep = vec![false; entries.len()];
    for &i in &order {
        if !order
            .iter()
            .any(|&j| keep[j] && entries[j].overlaps(&entries[i]))
        {
            keep[i] = true;
        }
    }
    let mut timeline = Timeline::default();
    for (entry, kept) in entries.into_iter().zip(keep) {
        if kept {
            timeline.entries.push(entry);
        } else {
            timeline.dropped.push(Dropped {
                behavior: entry.behavior,
                reason: "overlap".into(),
            });
        }
    }
    timeline
        .entries
        .sort_by(|a, b| a.start_time.total_cmp(&b.start_time));
    timeline
}

/// One line of an exported timeline.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimelineRecord<'a> {
    pub lexeme: &'a str,
    pub stroke_time: Option<f64>,
    pub start_time: Option<f64>,
    pub end_time: Option<f64>,
    pub dropped: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<&'a str>,
}

/// Kept entries by start time, then dropped behaviors.
pub fn timeline_records(timeline: &Timeline) -> Vec<TimelineRecord<'_>> {
    let kept = timeline.entries.iter().map(|e| TimelineRecord {
        lexeme: &e.behavior.lexeme,
        stroke_time: Some(e.stroke_time),
        start_time: Some(e.start_time),
        end_time: Some(e.end_time),
        dropped: false,
        reason: None,
    });
    let dropped = timeline.dropped.iter().map(|d| TimelineRecord {
        lexeme: &d.behavior.lexeme,
        stroke_time: None,
        start_time: None,
        end_time: None,
        dropped: true,
        reason: Some(&d.reason),
    });
    kept.chain(dropped).collect()
}

/// [`timeline_records`] as JSON Lines.
pub fn export_timeline(timeline: &Timeline) -> String {
    timeline_records(timeline)
        .iter()
        .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
        .collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::textproc::tokenize;
    use proptest::prelude::*;

    fn behavior(mark: usize, priority: u32) -> GestureBehavior {
        GestureBehavior {
            stroke_start: mark_name(mark),
            lexeme: format!("L{mark}p{priority}"),
            bml_type: "METAPHORIC".into(),
            emotion: "neutral".into(),
            priority,
        }
    }

    fn entry(start: f64, end: f64, priority: u32) -> ScheduleEntry {
        ScheduleEntry {
            behavior: behavior(0, priority),
            stroke_time: start,
            start_time: start,
            end_time: end,
        }
    }

    /// Enumerates every overlap-free subset and picks the one that is
    /// lexicographically greatest as a keep/drop vector over the entries in
    /// rank order (priority, then stroke time, then input position).
    pub(crate) fn brute_force_keep(entries: &[ScheduleEntry]) -> Vec<bool> {
        let n = entries.len();
        let mut ranked: Vec<usize> = (0..n).collect();
        ranked.sort_by(|&a, &b| {
            let (ea, eb) = (&entries[a], &entries[b]);
            ea.behavior.priority.cmp(&eb.behavior.priority)
                .then(ea.stroke_time.total_cmp(&eb.stroke_time))
                .then(a.cmp(&b))
        });
        let mut best: Option<(Vec<bool>, u32)> = None;
        for mask in 0u32..(1 << n) {
            let members: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            let free = members.iter().all(|&a| {
                members.iter().all(|&b| a == b || !entries[a].overlaps(&entries[b]))
            });
            if !free {
                continue;
            }
            let key: Vec<bool> = ranked.iter().map(|&i| mask & (1 << i) != 0).collect();
            if best.as_ref().is_none_or(|(k, _)| key > *k) {
                best = Some((key, mask));
            }
        }
        let mask = best.map(|b| b.1).unwrap_or(0);
        (0..n).map(|i| mask & (1 << i) != 0).collect()
    }

    #[test]
    fn synthetic_examples() {
        let t = synthetic_timings(&tokenize("a b c d"), 0.3).unwrap();
        let got: Vec<_> = t.iter().collect();
        let want: Vec<_> = (0..5).map(|k| (mark_name(k), k as f64 * 0.3)).collect();
        assert_eq!(got, want);
        assert_eq!(t.get("T3"), Some(0.8999999999999999));
        assert!(synthetic_timings(&tokenize(""), 0.3).unwrap().is_empty());
        let one = synthetic_timings(&tokenize("a"), 0.5).unwrap();
        assert_eq!(one.iter().collect::<Vec<_>>(), [("T0".to_string(), 0.0), ("T1".to_string(), 0.5)]);
        assert!(matches!(synthetic_timings(&tokenize("a"), 0.0), Err(ScheduleError::NonPositiveRate(_))));
        assert!(synthetic_timings(&tokenize("a"), -1.0).is_err());
    }

    #[test]
    fn timing_file_round_trip_and_validation() {
        let t = WordTiming::from_json(r#"{"T0": 0.0, "T1": 0.31, "T2": 0.7}"#).unwrap();
        assert_eq!(WordTiming::from_json(&t.to_json()).unwrap(), t);
        assert!(WordTiming::from_json(r#"{"T0": 0.5, "T1": 0.5}"#).is_err());
        assert!(WordTiming::from_json(r#"{"T0": -1}"#).is_err());
        assert!(WordTiming::from_json(r#"{"X0": 1}"#).is_err());
        assert!(WordTiming::from_json("[1]").is_err());
    }

    fn doc(gestures: Vec<GestureBehavior>, words: usize) -> BmlDocument {
        BmlDocument {
            utterance_id: "u".into(),
            words: (0..words).map(|i| format!("w{i}")).collect(),
            gestures,
        }
    }

    #[test]
    fn stroke_at_t3() {
        let utt = tokenize("a b c d");
        let t = synthetic_timings(&utt, 0.3).unwrap();
        let tl = resolve_schedule(&doc(vec![behavior(3, 0)], 4), &t, ScheduleParams::default()).unwrap();
        assert_eq!(tl.entries[0].stroke_time, 3.0 * 0.3);
        assert_eq!(tl.entries[0].start_time, 3.0 * 0.3 - 0.25);
        assert_eq!(tl.entries[0].end_time, 3.0 * 0.3 + 1.0);
        assert_eq!(resolve_schedule(&doc(vec![], 4), &t, ScheduleParams::default()).unwrap(), Timeline::default());
        assert_eq!(
            resolve_schedule(&doc(vec![behavior(99, 0)], 4), &t, ScheduleParams::default()),
            Err(ScheduleError::MissingMark("T99".into()))
        );
    }

    #[test]
    fn held_until_next_preparation() {
        let utt = tokenize("a b c d e f g h i j k l");
        let t = synthetic_timings(&utt, 0.5).unwrap();
        let tl = resolve_schedule(&doc(vec![behavior(0, 0), behavior(8, 1)], 12), &t, ScheduleParams::default()).unwrap();
        assert_eq!(tl.entries.len(), 2);
        assert_eq!(tl.entries[0].end_time, 4.0 - 0.25);
        assert_eq!(tl.entries[1].end_time, 5.0);
    }

    #[test]
    fn conflict_examples() {
        let tl = resolve_conflicts(vec![entry(0.0, 1.0, 0), entry(1.0, 2.0, 1)]);
        assert_eq!(tl.entries.len(), 2);
        let tl = resolve_conflicts(vec![entry(0.0, 1.0, 1), entry(0.5, 1.5, 0)]);
        assert_eq!(tl.entries.len(), 1);
        assert_eq!(tl.entries[0].behavior.priority, 0);
        assert_eq!(tl.dropped[0].reason, "overlap");
        let tl = resolve_conflicts(vec![entry(0.0, 2.0, 1), entry(0.5, 2.5, 0), entry(1.0, 3.0, 2)]);
        assert_eq!(tl.entries.len(), 1);
        assert_eq!(tl.entries[0].behavior.priority, 0);
    }

    #[test]
    fn export_format() {
        let tl = resolve_conflicts(vec![entry(0.0, 1.0, 1), entry(0.5, 1.5, 0)]);
        let lines: Vec<serde_json::Value> =
            export_timeline(&tl).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(lines[0]["dropped"], false);
        assert_eq!(lines[0]["stroke_time"], 0.5);
        assert!(lines[0].get("reason").is_none());
        assert_eq!(lines[1]["dropped"], true);
        assert_eq!(lines[1]["reason"], "overlap");
    }

    pub(crate) fn arb_entries(max: usize) -> impl Strategy<Value = Vec<ScheduleEntry>> {
        proptest::collection::vec((0u32..8, 1u32..6, 0u32..4), 0..=max).prop_map(|raw| {
            raw.into_iter()
                .enumerate()
                .map(|(i, (start, len, priority))| {
                    let mut e = entry(start as f64 * 0.25, (start + len) as f64 * 0.25, priority);
                    e.behavior.lexeme = format!("e{i}");
                    e
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn conflicts_match_brute_force(entries in arb_entries(6)) {
            let want = brute_force_keep(&entries);
            let tl = resolve_conflicts(entries.clone());
            let kept: Vec<bool> = entries.iter().map(|e| tl.entries.contains(e)).collect();
            prop_assert_eq!(kept, want);
            prop_assert_eq!(tl.entries.len() + tl.dropped.len(), entries.len());
            for (i, a) in tl.entries.iter().enumerate() {
                for b in &tl.entries[i + 1..] {
                    prop_assert!(!a.overlaps(b));
                }
            }
            prop_assert!(tl.entries.windows(2).all(|w| w[0].start_time <= w[1].start_time));
        }

        #[test]
        fn strokes_scale_with_rate(n in 1usize..40, marks in proptest::collection::vec(0usize..40, 0..6), k in 1u32..5) {
            let utt = tokenize(&vec!["w"; n].join(" "));
            let gestures: Vec<_> = marks.iter().map(|&m| m % (n + 1)).enumerate()
                .map(|(p, m)| behavior(m, p as u32)).collect();
            let mut gestures = gestures;
            gestures.sort_by_key(|g| (g.stroke_index(), g.priority));
            let d = doc(gestures, n);
            let base = 0.3;
            let slow = base * k as f64;
            for rate in [base, slow] {
                let t = synthetic_timings(&utt, rate).unwrap();
                let tl = resolve_schedule(&d, &t, ScheduleParams::default()).unwrap();
                for e in &tl.entries {
                    let idx = e.behavior.stroke_index().unwrap();
                    prop_assert_eq!(e.stroke_time, idx as f64 * rate);
                    prop_assert!(e.start_time <= e.stroke_time && e.stroke_time < e.end_time);
                }
            }
        }
    }
}
