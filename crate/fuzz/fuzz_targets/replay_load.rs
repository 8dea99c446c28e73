#![no_main]

use gesturegen_core::selector::ReplayBackend;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = ReplayBackend::load(data);
});
