use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::validate::{validate_blocks, ChainValidator, ValidationReport};
use super::{solve_pow, tx_root, Block, BlockHeader, ChainStore, LedgerError, Mempool, Receipt, ReceiptStatus, Transaction};
use crate::clock::Clock;
use crate::digest::Digest;
use crate::runtime::{
    execute_query, execute_transaction, Address, BlockEnv, ContractTypeRegistry, GasSchedule, Outcome,
    Payload, TxInput, WorldState,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase", deny_unknown_fields)]
pub struct ChainConfig {
    /// Required leading zero bits of every header digest.
    pub difficulty: u32,
    pub gas_schedule: GasSchedule,
    /// Balance credited to every new externally owned account.
    pub faucet_amount: u64,
    /// Account credited with transaction fees.
    pub miner_label: String,
    /// Flat credit to the miner per block. Zero keeps fees exactly conserved.
    #[serde(default)]
    pub block_reward: u64,
    #[serde(default)]
    pub allow_empty_blocks: bool,
    #[serde(default = "default_max_block_txs")]
    pub max_block_txs: usize,
}

fn default_max_block_txs() -> usize {
    500
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            difficulty: 12,
            gas_schedule: GasSchedule::default(),
            faucet_amount: 1_000_000_000_000,
            miner_label: "miner".into(),
            block_reward: 0,
            allow_empty_blocks: false,
            max_block_txs: default_max_block_txs(),
        }
    }
}

/// A freshly mined block with its receipts and proof-of-work effort.
#[derive(Debug, Clone)]
pub struct MinedBlock {
    pub block: Block,
    pub receipts: Vec<Receipt>,
    /// Header digests evaluated, `powNonce + 1`.
    pub attempts: u64,
}

/// Single-writer chain: blocks, receipts, world state and mempool.
pub struct Chain {
    config: ChainConfig,
    registry: Arc<ContractTypeRegistry>,
    clock: Arc<dyn Clock>,
    blocks: Vec<Block>,
    receipts: HashMap<Digest, Receipt>,
    state: WorldState,
    mempool: Mempool,
    miner: Address,
    store: Option<ChainStore>,
}

impl std::fmt::Debug for Chain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Chain")
            .field("height", &self.blocks.len())
            .field("mempool", &self.mempool.len())
            .field("accounts", &self.state.len())
            .finish()
    }
}

impl Chain {
    /// In-memory chain with only the miner account.
    pub fn new(config: ChainConfig, registry: Arc<ContractTypeRegistry>, clock: Arc<dyn Clock>) -> Self {
        let mut state = WorldState::new();
        let miner = state
            .create_eoa(&config.miner_label, 0)
            .expect("fresh state has no accounts");
        Chain {
            config,
            registry,
            clock,
            blocks: Vec::new(),
            receipts: HashMap::new(),
            state,
            mempool: Mempool::new(),
            miner,
            store: None,
        }
    }

    /// Opens (or creates) a persistent chain, replaying and re-validating every block.
    pub fn open(
        dir: impl AsRef<Path>,
        config: ChainConfig,
        registry: Arc<ContractTypeRegistry>,
        clock: Arc<dyn Clock>,
    ) -> Result<Self, LedgerError> {
        let store = ChainStore::open(dir.as_ref())?;
        let mut chain = Chain::new(config, registry, clock);
        for label in store.read_account_labels()? {
            if label != chain.config.miner_label {
                chain.state.create_eoa(&label, chain.config.faucet_amount)?;
            }
        }

        let raw = store.read_blocks_raw()?;
        let stored_receipts = store.read_receipts()?;
        let mut validator = ChainValidator::new(chain.config.difficulty);
        let mut missing = Vec::new();
        for (i, line) in raw.split(|b| *b == b'\n').filter(|l| !l.is_empty()).enumerate() {
            let block = Block::decode(line).map_err(|e| LedgerError::Corrupt(format!("block line {i}: {e}")))?;
            validator.check(&block).map_err(|report| LedgerError::InvalidChain(Box::new(report)))?;
            let receipts = chain.execute_block(block.header.height, block.header.timestamp, &block.transactions);
            for receipt in receipts {
                match stored_receipts.get(&receipt.tx_id) {
                    Some(stored) if *stored == receipt => {}
                    Some(_) => return Err(LedgerError::ReplayMismatch(receipt.tx_id)),
                    None => missing.push(receipt.clone()),
                }
                chain.receipts.insert(receipt.tx_id, receipt);
            }
            chain.blocks.push(block);
        }
        if !missing.is_empty() {
            store.append_receipts(&missing)?;
        }
        chain.store = Some(store);
        if let Some(store) = &chain.store {
            for tx in store.read_mempool()? {
                chain.submit_transaction(tx)?;
            }
        }
        Ok(chain)
    }

    pub fn config(&self) -> &ChainConfig {
        &self.config
    }

    pub fn registry(&self) -> &Arc<ContractTypeRegistry> {
        &self.registry
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    pub fn miner(&self) -> Address {
        self.miner
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, height: u64) -> Option<&Block> {
        usize::try_from(height).ok().and_then(|h| self.blocks.get(h))
    }

    pub fn tip(&self) -> Option<&Block> {
        self.blocks.last()
    }

    /// Height of the last committed block, `None` before genesis.
    pub fn height(&self) -> Option<u64> {
        self.tip().map(|b| b.header.height)
    }

    pub fn mempool(&self) -> &Mempool {
        &self.mempool
    }

    pub fn store(&self) -> Option<&ChainStore> {
        self.store.as_ref()
    }

    pub fn receipt_count(&self) -> usize {
        self.receipts.len()
    }

    /// Creates an externally owned account funded from the faucet.
    pub fn create_eoa(&mut self, label: &str) -> Result<Address, LedgerError> {
        let address = self.state.create_eoa(label, self.config.faucet_amount)?;
        if let Some(store) = &self.store {
            store.append_account(label)?;
        }
        Ok(address)
    }

    /// Nonce the next submitted transaction from `sender` must carry.
    pub fn next_nonce(&self, sender: &Address) -> u64 {
        self.state.nonce(sender) + self.mempool.pending_from(sender)
    }

    /// Builds a transaction for `sender` with the next nonce and the current time.
    pub fn build_transaction(&self, sender: Address, payload: Payload, gas_limit: u64) -> Result<Transaction, LedgerError> {
        Ok(Transaction::new(sender, self.next_nonce(&sender), payload, gas_limit, self.clock.now())?)
    }

    pub fn submit_transaction(&mut self, tx: Transaction) -> Result<Digest, LedgerError> {
        if !tx.id_is_consistent() {
            return Err(LedgerError::MalformedTransaction("id does not match transaction contents".into()));
        }
        if tx.gas_limit < self.config.gas_schedule.tx_base {
            return Err(LedgerError::MalformedTransaction(format!(
                "gas limit {} is below the base cost {}",
                tx.gas_limit, self.config.gas_schedule.tx_base
            )));
        }
        match &tx.payload {
            Payload::CreateContract { type_id, .. } if type_id.is_empty() => {
                return Err(LedgerError::MalformedTransaction("empty contract type id".into()));
            }
            Payload::CallContract { function, .. } if function.is_empty() => {
                return Err(LedgerError::MalformedTransaction("empty function name".into()));
            }
            _ => {}
        }
        if self.mempool.contains(&tx.id) {
            return Err(LedgerError::MalformedTransaction("transaction already pending".into()));
        }
        match self.state.get(&tx.sender) {
            Some(account) if !account.is_contract() => {}
            _ => return Err(LedgerError::UnknownSender(tx.sender)),
        }
        let expected = self.next_nonce(&tx.sender);
        if tx.sender_nonce != expected {
            return Err(LedgerError::NonceMismatch { expected, found: tx.sender_nonce });
        }
        let id = tx.id;
        self.mempool.push(tx);
        self.persist_mempool()?;
        Ok(id)
    }

    fn persist_mempool(&self) -> Result<(), LedgerError> {
        if let Some(store) = &self.store {
            store.write_mempool(self.mempool.iter())?;
        }
        Ok(())
    }

    /// Drains up to `max_txs` pending transactions into a new proof-of-work block.
    pub fn mine_block(&mut self, max_txs: usize) -> Result<MinedBlock, LedgerError> {
        if self.mempool.is_empty() && !self.config.allow_empty_blocks {
            return Err(LedgerError::EmptyMempool);
        }
        let txs = self.mempool.drain(max_txs.min(self.config.max_block_txs).max(1));
        let (height, prev_hash, prev_ts) = match self.tip() {
            Some(tip) => (tip.header.height + 1, tip.hash(), tip.header.timestamp),
            None => (0, Digest::ZERO, 0),
        };
        let timestamp = self.clock.now().max(prev_ts);
        let receipts = self.execute_block(height, timestamp, &txs);

        let mut header = BlockHeader {
            height,
            prev_hash,
            tx_root: tx_root(txs.iter().map(|t| &t.id)),
            pow_nonce: 0,
            difficulty: self.config.difficulty,
            timestamp,
        };
        let attempts = solve_pow(&mut header);
        let block = Block { header, transactions: txs };

        if let Some(store) = &self.store {
            store.append_block(&block, &receipts)?;
        }
        for r in &receipts {
            self.receipts.insert(r.tx_id, r.clone());
        }
        self.blocks.push(block.clone());
        self.persist_mempool()?;
        Ok(MinedBlock { block, receipts, attempts })
    }

    /// Mines until the mempool is empty; returns the mined blocks.
    pub fn mine_all(&mut self) -> Result<Vec<MinedBlock>, LedgerError> {
        let mut out = Vec::new();
        while !self.mempool.is_empty() {
            out.push(self.mine_block(self.config.max_block_txs)?);
        }
        Ok(out)
    }

    fn execute_block(&mut self, height: u64, timestamp: u64, txs: &[Transaction]) -> Vec<Receipt> {
        let env = BlockEnv { height, timestamp };
        let mut event_base = 0u64;
        let mut fees = 0u64;
        let mut receipts = Vec::with_capacity(txs.len());
        for (index, tx) in txs.iter().enumerate() {
            let outcome = execute_transaction(
                &mut self.state,
                &self.registry,
                self.config.gas_schedule,
                TxInput {
                    sender: tx.sender,
                    sender_nonce: tx.sender_nonce,
                    payload: &tx.payload,
                    gas_limit: tx.gas_limit,
                    env,
                    event_base,
                },
            );
            event_base += outcome.events.len() as u64;
            fees += outcome.gas_used;
            let (status, return_value) = match outcome.result {
                // null and absent encode identically, so keep one in-memory form
                Ok(v) => (ReceiptStatus::Success, Some(v).filter(|v| !v.is_null())),
                Err(e) => (ReceiptStatus::Reverted { reason: e.to_string() }, None),
            };
            receipts.push(Receipt {
                tx_id: tx.id,
                status,
                gas_used: outcome.gas_used,
                return_value,
                events: outcome.events,
                created: outcome.created,
                block_height: height,
                index_in_block: index as u32,
            });
        }
        let credit = fees + self.config.block_reward;
        if let Some(miner) = self.state.get_mut(&self.miner) {
            miner.balance += credit;
        }
        receipts
    }

    pub fn validate(&self) -> ValidationReport {
        validate_blocks(&self.blocks, self.config.difficulty)
    }

    pub fn receipt(&self, tx_id: &Digest) -> Result<&Receipt, LedgerError> {
        self.receipts.get(tx_id).ok_or(LedgerError::NotFound)
    }

    /// Receipts of a committed block, in transaction order.
    pub fn block_receipts(&self, height: u64) -> Vec<&Receipt> {
        self.block(height)
            .map(|b| b.transactions.iter().filter_map(|t| self.receipts.get(&t.id)).collect())
            .unwrap_or_default()
    }

    /// Runs a contract function against committed state and discards its effects.
    pub fn query(&mut self, caller: Address, target: Address, function: &str, args: &Value, gas_limit: u64) -> Outcome {
        let env = match self.tip() {
            Some(tip) => BlockEnv { height: tip.header.height, timestamp: tip.header.timestamp },
            None => BlockEnv { height: 0, timestamp: self.clock.now() },
        };
        execute_query(
            &mut self.state,
            &self.registry,
            self.config.gas_schedule,
            env,
            caller,
            target,
            function,
            args,
            gas_limit,
        )
    }
}
