//! Full-chain validation from genesis.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{tx_root, Block};
use crate::digest::Digest;
use crate::runtime::Address;

/// Rule that a block violated, in the order rules are checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Rule {
    /// The stored line is not a canonical block encoding.
    Decode,
    Genesis,
    Height,
    Linkage,
    Difficulty,
    Pow,
    TxRoot,
    TxId,
    Nonce,
    Timestamp,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Rule::Decode => "decode",
            Rule::Genesis => "genesis",
            Rule::Height => "height",
            Rule::Linkage => "linkage",
            Rule::Difficulty => "difficulty",
            Rule::Pow => "pow",
            Rule::TxRoot => "txRoot",
            Rule::TxId => "txId",
            Rule::Nonce => "nonce",
            Rule::Timestamp => "timestamp",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ValidationFailure {
    pub height: u64,
    pub rule: Rule,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ValidationReport {
    pub valid: bool,
    pub first_failure: Option<ValidationFailure>,
    pub blocks_checked: u64,
}

impl ValidationReport {
    fn ok(blocks_checked: u64) -> Self {
        ValidationReport { valid: true, first_failure: None, blocks_checked }
    }

    fn fail(height: u64, rule: Rule, detail: impl Into<String>) -> Self {
        ValidationReport {
            valid: false,
            first_failure: Some(ValidationFailure { height, rule, detail: detail.into() }),
            blocks_checked: height,
        }
    }
}

/// Incremental validator; feed blocks in height order.
#[derive(Debug)]
pub(crate) struct ChainValidator {
    difficulty: u32,
    prev: Option<(u64, Digest, u64)>,
    next_nonce: HashMap<Address, u64>,
    checked: u64,
}

impl ChainValidator {
    pub(crate) fn new(difficulty: u32) -> Self {
        ChainValidator { difficulty, prev: None, next_nonce: HashMap::new(), checked: 0 }
    }

    pub(crate) fn check(&mut self, block: &Block) -> Result<(), ValidationReport> {
        let h = &block.header;
        let position = self.checked;
        let fail = |rule, detail: String| Err(ValidationReport::fail(position, rule, detail));

        match self.prev {
            None => {
                if h.height != 0 || h.prev_hash != Digest::ZERO {
                    return fail(Rule::Genesis, "genesis must have height 0 and an all-zero prevHash".into());
                }
            }
            Some((prev_height, prev_hash, prev_ts)) => {
                if h.height != prev_height + 1 {
                    return fail(Rule::Height, format!("expected height {}, found {}", prev_height + 1, h.height));
                }
                if h.prev_hash != prev_hash {
                    return fail(Rule::Linkage, format!("prevHash {} does not match {}", h.prev_hash, prev_hash));
                }
                if h.timestamp < prev_ts {
                    return fail(Rule::Timestamp, format!("timestamp {} precedes {}", h.timestamp, prev_ts));
                }
            }
        }
        if h.difficulty != self.difficulty {
            return fail(Rule::Difficulty, format!("difficulty {} differs from chain's {}", h.difficulty, self.difficulty));
        }
        let hash = h.hash();
        if hash.leading_zero_bits() < h.difficulty {
            return fail(Rule::Pow, format!("header hash {hash} has fewer than {} leading zero bits", h.difficulty));
        }
        let recomputed: Result<Vec<Digest>, _> = block.transactions.iter().map(|t| t.compute_id()).collect();
        let recomputed = match recomputed {
            Ok(ids) => ids,
            Err(e) => return fail(Rule::TxRoot, format!("transaction not encodable: {e}")),
        };
        if tx_root(&recomputed) != h.tx_root {
            return fail(Rule::TxRoot, "txRoot does not match the block's transactions".into());
        }
        for (i, (tx, id)) in block.transactions.iter().zip(&recomputed).enumerate() {
            if tx.id != *id {
                return fail(Rule::TxId, format!("transaction {i} stores id {} but hashes to {id}", tx.id));
            }
        }
        for (i, tx) in block.transactions.iter().enumerate() {
            let expected = self.next_nonce.entry(tx.sender).or_insert(0);
            if tx.sender_nonce != *expected {
                return fail(
                    Rule::Nonce,
                    format!("transaction {i} from {} has nonce {}, expected {}", tx.sender, tx.sender_nonce, expected),
                );
            }
            *expected += 1;
        }
        self.prev = Some((h.height, hash, h.timestamp));
        self.checked += 1;
        Ok(())
    }

    pub(crate) fn report(&self) -> ValidationReport {
        ValidationReport::ok(self.checked)
    }
}

/// Validates an in-memory chain from genesis. Failures are report content.
pub fn validate_blocks(blocks: &[Block], difficulty: u32) -> ValidationReport {
    let mut validator = ChainValidator::new(difficulty);
    for block in blocks {
        if let Err(report) = validator.check(block) {
            return report;
        }
    }
    validator.report()
}

/// Validates a serialized chain: one canonical-JSON block per line.
pub fn validate_serialized(bytes: &[u8], difficulty: u32) -> ValidationReport {
    let mut validator = ChainValidator::new(difficulty);
    let body = bytes.strip_suffix(b"\n").unwrap_or(bytes);
    if body.is_empty() {
        return validator.report();
    }
    for (i, line) in body.split(|b| *b == b'\n').enumerate() {
        let block = match Block::decode(line) {
            Ok(b) => b,
            Err(e) => return ValidationReport::fail(i as u64, Rule::Decode, e.to_string()),
        };
        if let Err(report) = validator.check(&block) {
            return report;
        }
    }
    validator.report()
}
