//! Proof-of-work ledger: transactions, blocks, receipts, mempool and validation.

mod block;
mod chain;
mod mempool;
mod store;
mod tx;
pub mod validate;

pub use block::{solve_pow, tx_root, Block, BlockHeader, Receipt, ReceiptStatus};
pub use chain::{Chain, ChainConfig, MinedBlock};
pub use mempool::Mempool;
pub use store::ChainStore;
pub use tx::Transaction;
pub use validate::{validate_blocks, validate_serialized, Rule, ValidationFailure, ValidationReport};

use crate::canonical::CanonicalError;
use crate::digest::Digest;
use crate::runtime::{Address, StateError};

#[derive(Debug, thiserror::Error)]
pub enum DecodeError {
    #[error(transparent)]
    Canonical(#[from] CanonicalError),
    #[error("schema: {0}")]
    Schema(#[from] serde_json::Error),
}

#[derive(Debug, thiserror::Error)]
pub enum LedgerError {
    #[error("MalformedTransaction: {0}")]
    MalformedTransaction(String),
    #[error("UnknownSender: {0}")]
    UnknownSender(Address),
    #[error("NonceMismatch: expected {expected}, found {found}")]
    NonceMismatch { expected: u64, found: u64 },
    #[error("EmptyMempool: nothing to mine and empty blocks are disabled")]
    EmptyMempool,
    #[error("NotFound")]
    NotFound,
    #[error("stored chain is invalid: {0:?}")]
    InvalidChain(Box<ValidationReport>),
    #[error("replayed receipt for {0} differs from the stored one")]
    ReplayMismatch(Digest),
    #[error("corrupt chain data: {0}")]
    Corrupt(String),
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Encoding(#[from] CanonicalError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
