use std::collections::{HashMap, HashSet, VecDeque};

use super::Transaction;
use crate::digest::Digest;
use crate::runtime::Address;

/// FIFO queue of submitted, not-yet-mined transactions.
#[derive(Debug, Default, Clone)]
pub struct Mempool {
    queue: VecDeque<Transaction>,
    pending_per_sender: HashMap<Address, u64>,
    ids: HashSet<Digest>,
}

impl Mempool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn contains(&self, id: &Digest) -> bool {
        self.ids.contains(id)
    }

    pub fn pending_from(&self, sender: &Address) -> u64 {
        self.pending_per_sender.get(sender).copied().unwrap_or(0)
    }

    pub fn push(&mut self, tx: Transaction) {
        *self.pending_per_sender.entry(tx.sender).or_default() += 1;
        self.ids.insert(tx.id);
        self.queue.push_back(tx);
    }

    /// Removes up to `max` transactions from the front, oldest first.
    pub fn drain(&mut self, max: usize) -> Vec<Transaction> {
        let n = max.min(self.queue.len());
        let taken: Vec<Transaction> = self.queue.drain(..n).collect();
        for tx in &taken {
            self.ids.remove(&tx.id);
            if let Some(count) = self.pending_per_sender.get_mut(&tx.sender) {
                *count -= 1;
                if *count == 0 {
                    self.pending_per_sender.remove(&tx.sender);
                }
            }
        }
        taken
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transaction> {
        self.queue.iter()
    }
}
