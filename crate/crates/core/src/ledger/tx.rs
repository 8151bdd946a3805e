use serde::{Deserialize, Serialize};

use super::DecodeError;
use crate::canonical::{self, CanonicalError};
use crate::digest::Digest;
use crate::runtime::{Address, Payload};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Transaction {
    pub id: Digest,
    pub sender: Address,
    pub sender_nonce: u64,
    pub payload: Payload,
    pub gas_limit: u64,
    pub timestamp: u64,
}

/// Every field except `id`; the id is the digest of this view.
#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct TxBody<'a> {
    sender: &'a Address,
    sender_nonce: u64,
    payload: &'a Payload,
    gas_limit: u64,
    timestamp: u64,
}

impl Transaction {
    pub fn new(
        sender: Address,
        sender_nonce: u64,
        payload: Payload,
        gas_limit: u64,
        timestamp: u64,
    ) -> Result<Self, CanonicalError> {
        let mut tx = Transaction { id: Digest::ZERO, sender, sender_nonce, payload, gas_limit, timestamp };
        tx.id = tx.compute_id()?;
        Ok(tx)
    }

    /// Digest of the canonical encoding of everything but `id`.
    pub fn compute_id(&self) -> Result<Digest, CanonicalError> {
        canonical::hash(&TxBody {
            sender: &self.sender,
            sender_nonce: self.sender_nonce,
            payload: &self.payload,
            gas_limit: self.gas_limit,
            timestamp: self.timestamp,
        })
    }

    pub fn id_is_consistent(&self) -> bool {
        self.compute_id().map(|id| id == self.id).unwrap_or(false)
    }

    pub fn encode(&self) -> Result<Vec<u8>, CanonicalError> {
        canonical::to_vec(self)
    }

    /// Decodes a transaction from canonical JSON. The id is not checked here.
    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let value = canonical::parse_strict(bytes)?;
        Ok(serde_json::from_value(value)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn sample() -> Transaction {
        Transaction::new(
            Address::for_eoa("alice"),
            0,
            Payload::CallContract {
                target: Address::for_eoa("x"),
                function: "get".into(),
                args: json!({"patientId": "p-001"}),
            },
            50_000,
            1_700_000_000,
        )
        .unwrap()
    }

    #[test]
    fn id_is_digest_of_body_without_id() {
        let tx = sample();
        let mut v = serde_json::to_value(&tx).unwrap();
        v.as_object_mut().unwrap().remove("id");
        // independent route: hash the serde_json tree with the id stripped
        assert_eq!(Digest::of(&canonical::encode_value(&v).unwrap()), tx.id);
    }

    #[test]
    fn tampered_fields_break_the_id() {
        let mut tx = sample();
        tx.gas_limit += 1;
        assert!(!tx.id_is_consistent());
        let mut tx = sample();
        tx.id.0[0] ^= 1;
        assert!(!tx.id_is_consistent());
    }

    #[test]
    fn encode_decode_round_trip() {
        let tx = sample();
        let bytes = tx.encode().unwrap();
        assert_eq!(Transaction::decode(&bytes).unwrap(), tx);
        assert!(Transaction::decode(b"{}").is_err());
    }

    #[test]
    fn payload_wire_shape() {
        let tx = sample();
        let v = serde_json::to_value(&tx).unwrap();
        assert_eq!(v["payload"]["CallContract"]["function"], json!("get"));
        assert_eq!(v["senderNonce"], json!(0));
    }
}
