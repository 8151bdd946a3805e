#![no_main]

use dash_core::ledger::validate_serialized;
use libfuzzer_sys::fuzz_target;

// A stored chain file; the first byte picks the difficulty.
fuzz_target!(|data: &[u8]| {
    if let Some((d, rest)) = data.split_first() {
        let _ = validate_serialized(rest, u32::from(*d % 4));
    }
});
