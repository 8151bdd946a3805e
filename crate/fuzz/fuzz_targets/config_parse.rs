#![no_main]

use dash_service::ServiceConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(config) = ServiceConfig::from_json(data) {
        let again = ServiceConfig::from_json(&config.to_canonical()).expect("canonical form reparses");
        assert_eq!(again, config);
    }
});
