use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use dash_core::canonical;
use dash_core::runtime::Address;
use dash_core::Digest;
use serde::{Deserialize, Serialize};

use crate::ServiceError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Patient,
    Provider,
    Admin,
}

/// An API caller. Keys are bearer tokens bound to one EOA; there are no
/// signatures, so holding the key is what authorizes a transaction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Identity {
    pub api_key: String,
    pub role: Role,
    pub eoa_label: String,
    pub address: Address,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patient_id: Option<String>,
    /// ProviderAccount contract, for providers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provider_account: Option<Address>,
}

pub fn patient_label(patient_id: &str) -> String {
    format!("patient:{patient_id}")
}

pub fn provider_label(name: &str) -> String {
    format!("provider:{name}")
}

/// Deterministic key for `label`, so scripted runs can predict keys.
pub fn derive_key(admin_key: &str, label: &str) -> String {
    let d = Digest::of_parts(&[b"dash-key", admin_key.as_bytes(), &[0], label.as_bytes()]);
    format!("dk_{}", &d.to_hex()[..40])
}

/// Identity directory, optionally mirrored to a JSON-lines file.
#[derive(Debug, Default)]
pub struct Identities {
    by_key: HashMap<String, Identity>,
    by_label: HashMap<String, String>,
    by_patient: HashMap<String, String>,
    by_address: HashMap<Address, String>,
    file: Option<(PathBuf, File)>,
}

impl Identities {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn open(path: &Path) -> Result<Self, ServiceError> {
        let mut ids = Identities::default();
        match File::open(path) {
            Ok(f) => {
                for (n, line) in BufReader::new(f).lines().enumerate() {
                    let line = line.map_err(io_err)?;
                    if line.is_empty() {
                        continue;
                    }
                    let value = canonical::parse_strict(line.as_bytes())
                        .map_err(|e| ServiceError::Internal(format!("identities line {n}: {e}")))?;
                    let id: Identity = serde_json::from_value(value)
                        .map_err(|e| ServiceError::Internal(format!("identities line {n}: {e}")))?;
                    ids.index(id);
                }
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => {}
            Err(e) => return Err(io_err(e)),
        }
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(io_err)?;
        ids.file = Some((path.to_owned(), file));
        Ok(ids)
    }

    fn index(&mut self, id: Identity) {
        self.by_label.insert(id.eoa_label.clone(), id.api_key.clone());
        self.by_address.insert(id.address, id.api_key.clone());
        if let Some(p) = &id.patient_id {
            self.by_patient.insert(p.clone(), id.api_key.clone());
        }
        self.by_key.insert(id.api_key.clone(), id);
    }

    /// Adds a new identity. Labels and keys must be unused.
    pub fn insert(&mut self, id: Identity) -> Result<&Identity, ServiceError> {
        if self.by_key.contains_key(&id.api_key) || self.by_label.contains_key(&id.eoa_label) {
            return Err(ServiceError::Internal(format!("identity {} already exists", id.eoa_label)));
        }
        if let Some((_, file)) = &mut self.file {
            let mut line = canonical::to_vec(&id).map_err(|e| ServiceError::Internal(e.to_string()))?;
            line.push(b'\n');
            file.write_all(&line).map_err(io_err)?;
            file.sync_data().map_err(io_err)?;
        }
        let key = id.api_key.clone();
        self.index(id);
        Ok(&self.by_key[&key])
    }

    pub fn by_key(&self, key: &str) -> Option<&Identity> {
        self.by_key.get(key)
    }

    pub fn by_label(&self, label: &str) -> Option<&Identity> {
        self.by_label.get(label).and_then(|k| self.by_key.get(k))
    }

    pub fn by_patient(&self, patient_id: &str) -> Option<&Identity> {
        self.by_patient.get(patient_id).and_then(|k| self.by_key.get(k))
    }

    pub fn by_address(&self, address: &Address) -> Option<&Identity> {
        self.by_address.get(address).and_then(|k| self.by_key.get(k))
    }

    pub fn len(&self) -> usize {
        self.by_key.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_key.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Identity> {
        self.by_key.values()
    }
}

fn io_err(e: io::Error) -> ServiceError {
    ServiceError::Internal(format!("identity store: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity(label: &str) -> Identity {
        Identity {
            api_key: derive_key("k", label),
            role: Role::Provider,
            eoa_label: label.into(),
            address: Address::for_eoa(label),
            patient_id: None,
            provider_account: None,
        }
    }

    #[test]
    fn keys_are_deterministic_and_distinct() {
        assert_eq!(derive_key("k", "a"), derive_key("k", "a"));
        assert_ne!(derive_key("k", "a"), derive_key("k", "b"));
        assert_ne!(derive_key("k", "a"), derive_key("j", "a"));
        assert_eq!(derive_key("k", "a").len(), 43);
    }

    #[test]
    fn persisted_identities_reload() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ids.jsonl");
        {
            let mut ids = Identities::open(&path).unwrap();
            ids.insert(identity("provider:a")).unwrap();
            assert!(ids.insert(identity("provider:a")).is_err());
        }
        let ids = Identities::open(&path).unwrap();
        assert_eq!(ids.len(), 1);
        assert_eq!(ids.by_label("provider:a").unwrap().address, Address::for_eoa("provider:a"));
    }
}
