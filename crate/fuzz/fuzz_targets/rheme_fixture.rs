#![no_main]

use gesturegen_core::discourse::{load_rheme_fixture, save_rheme_fixture};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(fixture) = load_rheme_fixture(data) {
        let again = load_rheme_fixture(save_rheme_fixture(&fixture).as_bytes()).expect("saved fixture reloads");
        assert_eq!(fixture, again);
    }
});
