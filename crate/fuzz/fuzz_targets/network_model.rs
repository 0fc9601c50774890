#![no_main]

use kairos::platform::{Direction, NetworkModel};
use kairos::time::Duration;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Some((head, rest)) = data.split_first_chunk::<8>() else { return };
    let bytes = u64::from_le_bytes(*head) >> 16;
    let Ok(text) = std::str::from_utf8(rest) else { return };
    let Ok(n) = NetworkModel::from_json(text) else { return };
    let up = n.transfer_time(bytes, Direction::Up);
    assert!(up >= n.base_latency());
    let rt = n.cloud_round_trip(bytes, bytes, Duration::ZERO);
    assert!(rt >= up);
});
