#![no_main]

use dash_core::canonical;
use libfuzzer_sys::fuzz_target;

// Anything the strict parser accepts must re-encode to the same bytes.
fuzz_target!(|data: &[u8]| {
    if let Ok(value) = canonical::parse_strict(data) {
        let again = canonical::encode_value(&value).expect("accepted values encode");
        assert_eq!(again, data);
    }
});
