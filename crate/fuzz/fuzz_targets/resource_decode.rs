#![no_main]

use dash_core::recordstore::Resource;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(resource) = Resource::decode(data) {
        let _ = resource.validate();
        assert_eq!(resource.canonical_bytes().expect("decoded resources encode"), data);
    }
});
