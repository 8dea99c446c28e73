use std::collections::HashMap;
use std::io::BufReader;

use gesturegen_core::eval::{compare_approaches, load_labels, render_table, EvalOptions, EvalReport};
use gesturegen_core::lexicon::{replica_corpus, GestureLexicon};
use gesturegen_core::selector::{Approach, PromptConfig, PromptContext, ReplayBackend};
use serde_json::Value;

const RECORDED: &str = include_str!("../data/recorded_exchanges.jsonl");
const EXPECTED: &str = include_str!("../data/recorded_expected.json");
const LABELS: &str = include_str!("../data/replica_labels.jsonl");

async fn replay_report() -> EvalReport {
    let backend = ReplayBackend::load(BufReader::new(RECORDED.as_bytes())).unwrap();
    let corpus = replica_corpus();
    let ctx = PromptContext::new(GestureLexicon::builtin(), Some(corpus.clone()));
    let configs: Vec<_> = Approach::ALL
        .iter()
        .map(|&approach| PromptConfig {
            approach,
            ..PromptConfig::default()
        })
        .collect();
    let labels = load_labels(BufReader::new(LABELS.as_bytes())).unwrap();
    compare_approaches(&corpus, &configs, &backend, &ctx, Some(&labels), EvalOptions::default())
        .await
        .unwrap()
}

#[tokio::test]
async fn recorded_exchanges_reproduce_fixture_counts() {
    let report = replay_report().await;
    let expected: Value = serde_json::from_str(EXPECTED).unwrap();
    assert_eq!(report.tolerance as u64, expected["tolerance"].as_u64().unwrap());
    assert_eq!(report.approaches.len(), 4);
    for section in &report.approaches {
        assert!(section.failures.is_empty(), "{:?}", section.failures);
        let want = &expected["approaches"][section.approach.index().to_string()];
        let a = section.alignment;
        assert_eq!(a.both as u64, want["both"].as_u64().unwrap(), "approach {}", section.approach);
        assert_eq!(a.model_only as u64, want["model_only"].as_u64().unwrap(), "approach {}", section.approach);
        assert_eq!(a.speaker_only as u64, want["speaker_only"].as_u64().unwrap(), "approach {}", section.approach);
        assert_eq!(a.both + a.model_only, section.proposals);
    }
}

#[tokio::test]
async fn ordering_claims_hold_on_replay() {
    let report = replay_report().await;
    let by: HashMap<u8, _> = report.approaches.iter().map(|s| (s.approach.index(), s)).collect();
    let c1 = |i: u8| by[&i].appropriateness.unwrap().category1.appropriate;
    assert!(c1(3) > c1(1) && c1(3) > c1(2));
    assert!(c1(1) > c1(0) && c1(2) > c1(0));

    let both = |i: u8| by[&i].alignment.both;
    assert!((0..4).filter(|&i| i != 2).all(|i| both(2) > both(i)));
    let mis = |i: u8| by[&i].alignment.misaligned();
    assert!((1..4).all(|i| mis(0) > mis(i)));
}

#[tokio::test]
async fn table_has_one_row_per_approach() {
    let report = replay_report().await;
    let table = render_table(&report);
    assert_eq!(table.lines().count(), 5);
    assert!(table.lines().nth(1).unwrap().starts_with("0 "));
}
