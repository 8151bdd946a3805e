#![no_main]

use dash_core::ledger::Transaction;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(tx) = Transaction::decode(data) {
        assert_eq!(tx.encode().expect("decoded transactions encode"), data);
        let _ = tx.compute_id();
    }
});
