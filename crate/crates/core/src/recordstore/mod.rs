//! Off-chain health records behind digest-verified proxies.
//!
//! Records are stored as canonical JSON under their SHA-256 digest; the
//! chain only ever sees the digest and a [`StoragePointer`].

mod backend;
mod pointer;
mod proxy;
mod resource;

pub use backend::{FileBackend, MemoryBackend, RecordBackend};
pub use pointer::{BackendKind, StoragePointer};
pub use proxy::{AuditEntry, RecordProxy};
pub use resource::{AttrKind, AttrValue, FieldError, Resource, ResourceType};

use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::canonical;
use crate::clock::Clock;
use crate::digest::Digest;

#[derive(Debug, thiserror::Error)]
pub enum RecordError {
    #[error("SchemaViolation: {}", join(.0))]
    SchemaViolation(Vec<FieldError>),
    #[error("NotFound: {0}")]
    NotFound(String),
    #[error("IntegrityMismatch: expected {expected}, stored bytes hash to {actual}")]
    IntegrityMismatch { expected: Digest, actual: Digest },
    #[error("BackendUnavailable: {0}")]
    BackendUnavailable(String),
    #[error("BadPointer: {0}")]
    BadPointer(String),
    #[error("Decode: {0}")]
    Decode(String),
}

fn join(errors: &[FieldError]) -> String {
    errors.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// Backend selection, as written in configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum BackendConfig {
    Memory,
    File { dir: PathBuf },
}

impl BackendConfig {
    pub fn build(&self) -> Result<Arc<dyn RecordBackend>, RecordError> {
        Ok(match self {
            BackendConfig::Memory => Arc::new(MemoryBackend::new()),
            BackendConfig::File { dir } => Arc::new(FileBackend::open(dir)?),
        })
    }
}

/// Result of a put.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Stored {
    pub record_hash: Digest,
    pub pointer: StoragePointer,
    /// False when an identical record was already stored.
    pub created: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct AuditLine<'a> {
    accessor_id: &'a str,
    record_hash: Digest,
    timestamp: u64,
}

/// Serialized JSON-lines appender for access audit entries.
#[derive(Debug)]
pub struct AuditLog {
    path: PathBuf,
    file: Mutex<File>,
}

impl AuditLog {
    pub fn open(path: impl Into<PathBuf>) -> io::Result<Self> {
        let path = path.into();
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(AuditLog { path, file: Mutex::new(file) })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn append(&self, entry: &AuditEntry, record_hash: &Digest) -> Result<(), RecordError> {
        let line = AuditLine { accessor_id: &entry.accessor_id, record_hash: *record_hash, timestamp: entry.timestamp };
        let mut bytes = canonical::to_vec(&line).map_err(|e| RecordError::Decode(e.to_string()))?;
        bytes.push(b'\n');
        self.file.lock().write_all(&bytes).map_err(|e| RecordError::BackendUnavailable(format!("audit log: {e}")))
    }
}

/// Put/get front end over one configured backend.
#[derive(Clone)]
pub struct RecordStore {
    backend: Arc<dyn RecordBackend>,
    clock: Arc<dyn Clock>,
    log: Option<Arc<AuditLog>>,
}

impl RecordStore {
    pub fn new(backend: Arc<dyn RecordBackend>, clock: Arc<dyn Clock>) -> Self {
        RecordStore { backend, clock, log: None }
    }

    pub fn with_audit_log(mut self, log: Arc<AuditLog>) -> Self {
        self.log = Some(log);
        self
    }

    pub fn backend(&self) -> &Arc<dyn RecordBackend> {
        &self.backend
    }

    /// Validates, then stores the canonical bytes under their digest.
    pub fn put(&self, resource: &Resource) -> Result<Stored, RecordError> {
        resource.validate()?;
        let bytes = resource.canonical_bytes()?;
        let record_hash = Digest::of(&bytes);
        let pointer = StoragePointer::new(self.backend.kind(), record_hash.to_hex())?;
        let created = self.backend.put(&pointer.locator, &bytes)?;
        Ok(Stored { record_hash, pointer, created })
    }

    /// Removes a record stored by a put that is being rolled back.
    pub fn discard(&self, stored: &Stored) -> Result<(), RecordError> {
        if stored.created {
            self.backend.delete(&stored.pointer.locator)?;
        }
        Ok(())
    }

    /// A proxy; the backend is not touched until it is resolved.
    pub fn make_proxy(&self, pointer: StoragePointer, expected_hash: Digest) -> RecordProxy {
        RecordProxy::new(pointer, expected_hash, self.backend.clone(), self.clock.clone(), self.log.clone())
    }

    pub fn count(&self) -> Result<usize, RecordError> {
        self.backend.count()
    }
}

impl std::fmt::Debug for RecordStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RecordStore").field("backend", &self.backend.kind()).finish()
    }
}
