use std::collections::BTreeMap;

use crate::ledger::Receipt;
use crate::runtime::{Address, Event};

/// Per-block polling, the approach dispatch replaces: every provider scans
/// every account it watches in every block, matching or not.
#[derive(Debug, Default)]
pub struct PollingBaseline {
    watched: BTreeMap<String, Vec<Address>>,
    scans: u64,
}

impl PollingBaseline {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn watch(&mut self, provider: &str, account: Address) {
        let list = self.watched.entry(provider.to_owned()).or_default();
        if !list.contains(&account) {
            list.push(account);
        }
    }

    /// Account scans performed so far.
    pub fn scans(&self) -> u64 {
        self.scans
    }

    /// Polls one block. Returns, per provider, the events found on the
    /// accounts it watches, in block order.
    pub fn poll_block<'a>(&mut self, receipts: impl IntoIterator<Item = &'a Receipt>) -> BTreeMap<String, Vec<Event>> {
        let events: Vec<&Event> = receipts.into_iter().flat_map(|r| &r.events).collect();
        let mut found: BTreeMap<String, Vec<Event>> = BTreeMap::new();
        for (provider, accounts) in &self.watched {
            for account in accounts {
                self.scans += 1;
                for event in events.iter().filter(|e| e.emitter == *account) {
                    found.entry(provider.clone()).or_default().push((*event).clone());
                }
            }
        }
        for list in found.values_mut() {
            list.sort_by_key(|e| e.sequence);
        }
        found
    }
}
