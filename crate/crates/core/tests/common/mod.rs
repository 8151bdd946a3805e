#![allow(dead_code)]

use std::sync::Arc;

use dash_core::clock::FixedClock;
use dash_core::contracts::{self, calls, calls::Call, SystemAddresses};
use dash_core::ledger::{Chain, ChainConfig, Receipt, ReceiptStatus};
use dash_core::runtime::Address;
use serde_json::Value;

pub const GAS: u64 = 5_000_000;

/// A chain with the contract suite installed and helpers to drive it.
pub struct Dash {
    pub chain: Chain,
    pub sys: SystemAddresses,
}

impl Dash {
    pub fn new() -> Self {
        let config = ChainConfig { difficulty: 0, ..ChainConfig::default() };
        let mut chain = Chain::new(config, Arc::new(contracts::contract_registry()), Arc::new(FixedClock::new(1_700_000_000)));
        let sys = contracts::bootstrap(&mut chain, "admin").unwrap();
        Dash { chain, sys }
    }

    pub fn eoa(&mut self, label: &str) -> Address {
        self.chain.create_eoa(label).unwrap()
    }

    /// Provider EOA plus its provider account, created by the admin.
    pub fn provider(&mut self, label: &str) -> (Address, Address) {
        let eoa = self.eoa(label);
        let r = self.send(self.sys.admin, calls::create_provider(self.sys.factory, eoa, label));
        (eoa, returned_address(&r))
    }

    /// Patient EOA and its bound account.
    pub fn patient(&mut self, patient_id: &str) -> (Address, Address) {
        let eoa = self.eoa(&format!("patient:{patient_id}"));
        let r = self.send(self.sys.admin, calls::lookup_or_create(self.sys.registry, patient_id, Some(eoa)));
        (eoa, returned_address(&r))
    }

    pub fn submit(&mut self, from: Address, call: Call) {
        let tx = self.chain.build_transaction(from, call.into_payload(), GAS).unwrap();
        self.chain.submit_transaction(tx).unwrap();
    }

    pub fn mine(&mut self) -> Vec<Receipt> {
        self.chain.mine_all().unwrap().into_iter().flat_map(|m| m.receipts).collect()
    }

    pub fn send(&mut self, from: Address, call: Call) -> Receipt {
        self.submit(from, call);
        let mut receipts = self.mine();
        assert_eq!(receipts.len(), 1);
        receipts.pop().unwrap()
    }

    pub fn query(&mut self, from: Address, call: Call) -> Result<Value, String> {
        let out = self.chain.query(from, call.target, call.function, &call.args, GAS);
        out.result.map_err(|e| e.to_string())
    }
}

pub fn returned_address(r: &Receipt) -> Address {
    assert_eq!(r.status, ReceiptStatus::Success, "{r:?}");
    r.return_value.as_ref().and_then(Value::as_str).unwrap().parse().unwrap()
}

/// Leading code of a reverted receipt, or "ok".
pub fn outcome_code(r: &Receipt) -> String {
    match &r.status {
        ReceiptStatus::Success => "ok".into(),
        ReceiptStatus::Reverted { reason } => dash_core::runtime::reason_code(reason).to_owned(),
    }
}

pub fn query_code(r: &Result<Value, String>) -> String {
    match r {
        Ok(_) => "ok".into(),
        Err(reason) => dash_core::runtime::reason_code(reason).to_owned(),
    }
}
