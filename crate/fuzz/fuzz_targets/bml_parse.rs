#![no_main]

use gesturegen_core::bml::{parse, serialize};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(xml) = std::str::from_utf8(data) else { return };
    if let Ok(doc) = parse(xml) {
        let canonical = serialize(&doc);
        let back = parse(&canonical).expect("canonical output parses");
        assert_eq!(back, doc);
        assert_eq!(serialize(&back), canonical);
    }
});
