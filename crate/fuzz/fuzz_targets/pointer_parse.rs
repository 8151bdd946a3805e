#![no_main]

use dash_core::recordstore::StoragePointer;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(p) = s.parse::<StoragePointer>() {
            assert_eq!(p.to_string().parse::<StoragePointer>().expect("display reparses"), p);
        }
    }
});
