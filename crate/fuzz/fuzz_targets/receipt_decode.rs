#![no_main]

use dash_core::canonical;
use dash_core::ledger::Receipt;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(receipt) = Receipt::decode(data) {
        assert_eq!(canonical::to_vec(&receipt).expect("decoded receipts encode"), data);
    }
});
