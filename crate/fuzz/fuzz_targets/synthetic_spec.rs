#![no_main]

use kairos::horizon::HorizonPolicy;
use kairos::task::TaskId;
use kairos::time::Duration;
use kairos::workload::{synthesize_trace, SyntheticSpec};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(spec) = SyntheticSpec::from_json(text) else { return };
    // Keep generated work bounded.
    if spec.action_budget.max > 5_000 || spec.diffusion_steps > 64 || spec.chunk_size > 512 || spec.action_dim > 16 {
        return;
    }
    let trace = synthesize_trace(&spec, TaskId::new("f"), &HorizonPolicy::default(), Duration::from_millis(150), 7)
        .expect("a valid spec always synthesizes");
    trace.validate().expect("synthesized traces are valid");
});
