use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{AuditLog, RecordBackend, RecordError, Resource, StoragePointer};
use crate::clock::Clock;
use crate::digest::Digest;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AuditEntry {
    pub accessor_id: String,
    pub timestamp: u64,
}

/// Lazy handle to an off-chain record. Nothing is read until
/// [`resolve`](Self::resolve); the first resolve verifies the digest and
/// caches, and every resolve is audited.
pub struct RecordProxy {
    pointer: StoragePointer,
    expected_hash: Digest,
    backend: Arc<dyn RecordBackend>,
    clock: Arc<dyn Clock>,
    log: Option<Arc<AuditLog>>,
    cached: Option<Resource>,
    audit: Vec<AuditEntry>,
}

impl RecordProxy {
    pub(super) fn new(
        pointer: StoragePointer,
        expected_hash: Digest,
        backend: Arc<dyn RecordBackend>,
        clock: Arc<dyn Clock>,
        log: Option<Arc<AuditLog>>,
    ) -> Self {
        RecordProxy { pointer, expected_hash, backend, clock, log, cached: None, audit: Vec::new() }
    }

    pub fn pointer(&self) -> &StoragePointer {
        &self.pointer
    }

    pub fn expected_hash(&self) -> Digest {
        self.expected_hash
    }

    pub fn is_cached(&self) -> bool {
        self.cached.is_some()
    }

    pub fn audit(&self) -> &[AuditEntry] {
        &self.audit
    }

    pub fn resolve(&mut self, accessor_id: &str) -> Result<&Resource, RecordError> {
        if self.cached.is_none() {
            self.cached = Some(self.fetch()?);
        }
        let entry = AuditEntry { accessor_id: accessor_id.to_owned(), timestamp: self.clock.now() };
        if let Some(log) = &self.log {
            log.append(&entry, &self.expected_hash)?;
        }
        self.audit.push(entry);
        Ok(self.cached.as_ref().expect("filled above"))
    }

    fn fetch(&self) -> Result<Resource, RecordError> {
        if self.pointer.backend != self.backend.kind() {
            return Err(RecordError::NotFound(format!("{} is not served by the {} backend", self.pointer, self.backend.kind().as_str())));
        }
        let bytes = self
            .backend
            .get(&self.pointer.locator)?
            .ok_or_else(|| RecordError::NotFound(self.pointer.to_string()))?;
        let actual = Digest::of(&bytes);
        if actual != self.expected_hash {
            return Err(RecordError::IntegrityMismatch { expected: self.expected_hash, actual });
        }
        Resource::decode(&bytes)
    }
}

impl PartialEq for RecordProxy {
    fn eq(&self, other: &Self) -> bool {
        self.pointer == other.pointer && self.expected_hash == other.expected_hash
    }
}

impl Eq for RecordProxy {}

impl fmt::Debug for RecordProxy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RecordProxy")
            .field("pointer", &self.pointer.to_string())
            .field("expected_hash", &self.expected_hash)
            .field("cached", &self.cached.is_some())
            .field("audit", &self.audit.len())
            .finish()
    }
}
