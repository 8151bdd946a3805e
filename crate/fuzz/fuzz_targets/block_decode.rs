#![no_main]

use dash_core::ledger::Block;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(block) = Block::decode(data) {
        assert_eq!(block.encode().expect("decoded blocks encode"), data);
        let _ = block.hash();
    }
});
