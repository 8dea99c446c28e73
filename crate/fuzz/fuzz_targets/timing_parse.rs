#![no_main]

use gesturegen_core::pipeline::TimingSource;
use gesturegen_core::scheduler::WordTiming;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(timing) = WordTiming::from_json(text) {
        assert_eq!(WordTiming::from_json(&timing.to_json()).expect("reloads"), timing);
    }
    let _ = TimingSource::from_json(text);
});
