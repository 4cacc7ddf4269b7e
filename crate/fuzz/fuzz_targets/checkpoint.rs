//! Checkpoint documents: malformed shapes or parameter counts must be
//! rejected, never trusted.
#![no_main]

use ihanas::surrogate::Checkpoint;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(ck) = Checkpoint::from_json(text) else {
        return;
    };
    if let Ok(model) = ck.to_encoder() {
        assert_eq!(
            model.param_count(),
            model.tensors().iter().map(|t| t.len()).sum::<usize>()
        );
    }
});
