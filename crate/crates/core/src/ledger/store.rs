//! Append-only on-disk layout of a chain.
//!
//! ```text
//! <dir>/blocks.jsonl    one canonical-JSON block per line, height order
//! <dir>/receipts.jsonl  one canonical-JSON receipt per line, keyed by txId
//! <dir>/accounts.jsonl  {"label":...} per externally owned account, creation order
//! <dir>/mempool.jsonl   pending transactions, rewritten on change
//! ```

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Block, LedgerError, Receipt, Transaction};
use crate::canonical;
use crate::digest::Digest;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AccountLine {
    label: String,
}

#[derive(Debug, Clone)]
pub struct ChainStore {
    dir: PathBuf,
}

fn append_lines(path: &Path, lines: &[Vec<u8>]) -> io::Result<()> {
    let mut buf = Vec::new();
    for line in lines {
        buf.extend_from_slice(line);
        buf.push(b'\n');
    }
    let mut file = OpenOptions::new().create(true).append(true).open(path)?;
    file.write_all(&buf)?;
    file.sync_data()
}

fn read_or_empty(path: &Path) -> io::Result<Vec<u8>> {
    match fs::read(path) {
        Ok(b) => Ok(b),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Vec::new()),
        Err(e) => Err(e),
    }
}

fn lines(bytes: &[u8]) -> impl Iterator<Item = &[u8]> {
    bytes.split(|b| *b == b'\n').filter(|l| !l.is_empty())
}

impl ChainStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, LedgerError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(ChainStore { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn blocks_path(&self) -> PathBuf {
        self.dir.join("blocks.jsonl")
    }

    pub fn receipts_path(&self) -> PathBuf {
        self.dir.join("receipts.jsonl")
    }

    fn accounts_path(&self) -> PathBuf {
        self.dir.join("accounts.jsonl")
    }

    fn mempool_path(&self) -> PathBuf {
        self.dir.join("mempool.jsonl")
    }

    pub fn read_blocks_raw(&self) -> Result<Vec<u8>, LedgerError> {
        Ok(read_or_empty(&self.blocks_path())?)
    }

    pub fn read_receipts(&self) -> Result<HashMap<Digest, Receipt>, LedgerError> {
        let bytes = read_or_empty(&self.receipts_path())?;
        let mut out = HashMap::new();
        for line in lines(&bytes) {
            let receipt = Receipt::decode(line).map_err(|e| LedgerError::Corrupt(format!("receipts file: {e}")))?;
            out.insert(receipt.tx_id, receipt);
        }
        Ok(out)
    }

    pub fn read_account_labels(&self) -> Result<Vec<String>, LedgerError> {
        let bytes = read_or_empty(&self.accounts_path())?;
        lines(&bytes)
            .map(|line| {
                canonical::parse_strict(line)
                    .ok()
                    .and_then(|v| serde_json::from_value::<AccountLine>(v).ok())
                    .map(|a| a.label)
                    .ok_or_else(|| LedgerError::Corrupt("accounts file has a malformed line".into()))
            })
            .collect()
    }

    pub fn read_mempool(&self) -> Result<Vec<Transaction>, LedgerError> {
        let bytes = read_or_empty(&self.mempool_path())?;
        lines(&bytes)
            .map(|line| Transaction::decode(line).map_err(|e| LedgerError::Corrupt(format!("mempool file: {e}"))))
            .collect()
    }

    pub fn append_block(&self, block: &Block, receipts: &[Receipt]) -> Result<(), LedgerError> {
        append_lines(&self.blocks_path(), &[block.encode()?])?;
        self.append_receipts(receipts)
    }

    pub fn append_receipts(&self, receipts: &[Receipt]) -> Result<(), LedgerError> {
        let encoded: Result<Vec<Vec<u8>>, _> = receipts.iter().map(canonical::to_vec).collect();
        append_lines(&self.receipts_path(), &encoded?)?;
        Ok(())
    }

    pub fn append_account(&self, label: &str) -> Result<(), LedgerError> {
        let line = canonical::to_vec(&AccountLine { label: label.to_owned() })?;
        append_lines(&self.accounts_path(), &[line])?;
        Ok(())
    }

    pub fn write_mempool<'a>(&self, txs: impl Iterator<Item = &'a Transaction>) -> Result<(), LedgerError> {
        let tmp = self.dir.join("mempool.jsonl.tmp");
        {
            let mut file = File::create(&tmp)?;
            for tx in txs {
                file.write_all(&tx.encode()?)?;
                file.write_all(b"\n")?;
            }
            file.sync_data()?;
        }
        fs::rename(tmp, self.mempool_path())?;
        Ok(())
    }
}
