use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{DecodeError, Transaction};
use crate::canonical::{self, CanonicalError};
use crate::digest::Digest;
use crate::runtime::{Address, Event};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct BlockHeader {
    pub height: u64,
    pub prev_hash: Digest,
    pub tx_root: Digest,
    pub pow_nonce: u64,
    pub difficulty: u32,
    pub timestamp: u64,
}

impl BlockHeader {
    pub fn hash(&self) -> Digest {
        canonical::hash(self).expect("headers are integer-only")
    }

    pub fn meets_difficulty(&self) -> bool {
        self.hash().leading_zero_bits() >= self.difficulty
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Block {
    pub header: BlockHeader,
    pub transactions: Vec<Transaction>,
}

impl Block {
    pub fn height(&self) -> u64 {
        self.header.height
    }

    pub fn hash(&self) -> Digest {
        self.header.hash()
    }

    pub fn encode(&self) -> Result<Vec<u8>, CanonicalError> {
        canonical::to_vec(self)
    }

    /// Decodes one canonical-JSON block line. Non-canonical input is rejected.
    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let value = canonical::parse_strict(bytes)?;
        Ok(serde_json::from_value(value)?)
    }
}

/// Flat digest over the concatenated transaction ids, in block order.
///
/// Not a Merkle tree: there are no inclusion proofs, only whole-block checks.
pub fn tx_root<'a>(ids: impl IntoIterator<Item = &'a Digest>) -> Digest {
    let mut buf = Vec::new();
    for id in ids {
        buf.extend_from_slice(&id.0);
    }
    Digest::of(&buf)
}

/// Searches `powNonce` upward from zero until the header meets its difficulty.
/// Returns the number of attempts.
pub fn solve_pow(header: &mut BlockHeader) -> u64 {
    header.pow_nonce = 0;
    let mut attempts = 1;
    while !header.meets_difficulty() {
        header.pow_nonce += 1;
        attempts += 1;
    }
    attempts
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum ReceiptStatus {
    Success,
    Reverted { reason: String },
}

impl ReceiptStatus {
    pub fn is_success(&self) -> bool {
        matches!(self, ReceiptStatus::Success)
    }

    pub fn revert_reason(&self) -> Option<&str> {
        match self {
            ReceiptStatus::Reverted { reason } => Some(reason),
            ReceiptStatus::Success => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Receipt {
    pub tx_id: Digest,
    pub status: ReceiptStatus,
    pub gas_used: u64,
    pub return_value: Option<Value>,
    pub events: Vec<Event>,
    /// Contract accounts created by the transaction, in creation order.
    pub created: Vec<Address>,
    pub block_height: u64,
    pub index_in_block: u32,
}

impl Receipt {
    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let value = canonical::parse_strict(bytes)?;
        Ok(serde_json::from_value(value)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(difficulty: u32) -> BlockHeader {
        BlockHeader {
            height: 0,
            prev_hash: Digest::ZERO,
            tx_root: tx_root([]),
            pow_nonce: 0,
            difficulty,
            timestamp: 1_700_000_000,
        }
    }

    #[test]
    fn zero_difficulty_accepts_first_candidate() {
        let mut h = header(0);
        assert_eq!(solve_pow(&mut h), 1);
        assert_eq!(h.pow_nonce, 0);
    }

    #[test]
    fn solved_header_meets_difficulty_and_previous_nonces_do_not() {
        let mut h = header(10);
        let attempts = solve_pow(&mut h);
        assert!(h.meets_difficulty());
        assert_eq!(attempts, h.pow_nonce + 1);
        for n in 0..h.pow_nonce {
            let probe = BlockHeader { pow_nonce: n, ..h.clone() };
            assert!(!probe.meets_difficulty());
        }
    }

    #[test]
    fn tx_root_is_flat_hash_of_ids() {
        let a = Digest::of(b"a");
        let b = Digest::of(b"b");
        let mut cat = a.0.to_vec();
        cat.extend_from_slice(&b.0);
        assert_eq!(tx_root([&a, &b]), Digest::of(&cat));
        assert_ne!(tx_root([&a, &b]), tx_root([&b, &a]));
        assert_eq!(tx_root([]), Digest::of(b""));
    }

    #[test]
    fn receipt_status_wire_shape() {
        let s = ReceiptStatus::Reverted { reason: "Unauthorized: x".into() };
        assert_eq!(
            crate::canonical::to_string(&s).unwrap(),
            r#"{"kind":"Reverted","reason":"Unauthorized: x"}"#
        );
        assert_eq!(crate::canonical::to_string(&ReceiptStatus::Success).unwrap(), r#"{"kind":"Success"}"#);
    }
}
