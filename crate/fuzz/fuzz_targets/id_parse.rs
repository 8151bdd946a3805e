#![no_main]

use dash_core::runtime::Address;
use dash_core::Digest;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(d) = s.parse::<Digest>() {
        assert_eq!(d.to_string().parse::<Digest>().expect("display reparses"), d);
    }
    if let Ok(a) = s.parse::<Address>() {
        assert_eq!(a.to_string().parse::<Address>().expect("display reparses"), a);
    }
});
