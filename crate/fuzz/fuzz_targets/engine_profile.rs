#![no_main]

use kairos::platform::EngineProfile;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(p) = EngineProfile::from_json(text) else { return };
    let mut prev = 0;
    for b in 1..=p.max_batch().min(4096) {
        let l = p.batch_latency(b).unwrap().as_micros();
        assert!(l >= prev);
        prev = l;
    }
    assert!(p.batch_latency(p.max_batch() + 1).is_err());
});
