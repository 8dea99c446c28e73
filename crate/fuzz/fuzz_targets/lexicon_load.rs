#![no_main]

use gesturegen_core::lexicon::GestureLexicon;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(lexicon) = GestureLexicon::from_json(text) {
        assert_eq!(GestureLexicon::from_json(&lexicon.to_json()).expect("reloads"), lexicon);
    }
});
