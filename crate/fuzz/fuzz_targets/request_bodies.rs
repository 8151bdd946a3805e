#![no_main]

use dash_core::pubsub::Filter;
use dash_core::recordstore::Resource;
use dash_service::{OnboardRequest, PermissionRequest, PrescriptionBody, ProviderRequest};
use libfuzzer_sys::fuzz_target;

// Every JSON body the HTTP API accepts.
fuzz_target!(|data: &[u8]| {
    let _ = serde_json::from_slice::<OnboardRequest>(data);
    let _ = serde_json::from_slice::<ProviderRequest>(data);
    let _ = serde_json::from_slice::<PermissionRequest>(data);
    let _ = serde_json::from_slice::<PrescriptionBody>(data);
    if let Ok(r) = serde_json::from_slice::<Resource>(data) {
        let _ = r.validate();
    }
    if let Ok(f) = serde_json::from_slice::<Filter>(data) {
        let _ = f.validate();
    }
});
