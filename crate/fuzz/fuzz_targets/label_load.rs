#![no_main]

use gesturegen_core::eval::load_labels;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = load_labels(data);
});
