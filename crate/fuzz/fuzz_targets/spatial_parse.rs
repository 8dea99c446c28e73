#![no_main]

use gesturegen_core::selector::parse_spatial;
use gesturegen_core::textproc::tokenize;
use libfuzzer_sys::fuzz_target;

// First line is the utterance, the rest is the model response.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let (utterance, raw) = text.split_once('\n').unwrap_or((text, ""));
    let utt = tokenize(utterance);
    if let Ok(parsed) = parse_spatial(raw, &utt) {
        for p in parsed.proposals {
            assert!(p.span.end < utt.len());
        }
    }
});
