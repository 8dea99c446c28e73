#![no_main]

use gesturegen_core::lexicon::Corpus;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(corpus) = Corpus::load(data) {
        let again = Corpus::from_jsonl(&corpus.to_jsonl()).expect("saved corpus reloads");
        assert_eq!(corpus, again);
    }
});
