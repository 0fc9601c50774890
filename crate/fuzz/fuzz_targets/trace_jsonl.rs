#![no_main]

use kairos::workload::{read_traces, write_traces};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(traces) = read_traces(data) {
        let mut buf = Vec::new();
        write_traces(&traces, &mut buf).unwrap();
        assert_eq!(read_traces(&buf[..]).unwrap(), traces);
    }
});
