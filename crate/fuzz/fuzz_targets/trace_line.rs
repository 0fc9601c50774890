#![no_main]

use kairos::workload::parse_trace_line;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(trace) = parse_trace_line(text, 1) {
        // Anything accepted must survive a round trip unchanged.
        let again = serde_json::to_string(&trace).unwrap();
        assert_eq!(parse_trace_line(&again, 1).unwrap(), trace);
    }
});
