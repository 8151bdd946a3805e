use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::Address;
use crate::canonical;
use crate::digest::Digest;

/// Identity of registered contract code.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct TypeKey {
    pub type_id: String,
    pub version: u32,
}

impl TypeKey {
    pub fn new(type_id: impl Into<String>, version: u32) -> Self {
        TypeKey { type_id: type_id.into(), version }
    }
}

impl fmt::Display for TypeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@v{}", self.type_id, self.version)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AccountKind {
    #[serde(rename = "EOA")]
    Eoa,
    #[serde(rename = "SCA")]
    Sca,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Account {
    pub address: Address,
    pub kind: AccountKind,
    pub balance: u64,
    pub nonce: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contract_type: Option<TypeKey>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub storage: BTreeMap<String, Value>,
}

impl Account {
    pub fn is_contract(&self) -> bool {
        self.kind == AccountKind::Sca
    }

    /// Sum of canonical value lengths over storage keys starting with `prefix`.
    pub fn storage_bytes(&self, prefix: &str) -> usize {
        self.storage
            .range(prefix.to_owned()..)
            .take_while(|(k, _)| k.starts_with(prefix))
            .map(|(_, v)| canonical::encoded_len(v).unwrap_or(0))
            .sum()
    }

    pub fn storage_keys_with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = &'a String> + 'a {
        self.storage
            .range(prefix.to_owned()..)
            .take_while(move |(k, _)| k.starts_with(prefix))
            .map(|(k, _)| k)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StateError {
    #[error("DuplicateLabel: an account labelled {0:?} already exists")]
    DuplicateLabel(String),
    #[error("AddressCollision: {0} is already in use")]
    AddressCollision(Address),
}

/// All accounts, keyed by address.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WorldState {
    accounts: BTreeMap<Address, Account>,
    labels: BTreeMap<String, Address>,
}

impl WorldState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn create_eoa(&mut self, label: &str, balance: u64) -> Result<Address, StateError> {
        if self.labels.contains_key(label) {
            return Err(StateError::DuplicateLabel(label.to_owned()));
        }
        let address = Address::for_eoa(label);
        if self.accounts.contains_key(&address) {
            return Err(StateError::AddressCollision(address));
        }
        self.accounts.insert(
            address,
            Account {
                address,
                kind: AccountKind::Eoa,
                balance,
                nonce: 0,
                label: Some(label.to_owned()),
                contract_type: None,
                storage: BTreeMap::new(),
            },
        );
        self.labels.insert(label.to_owned(), address);
        Ok(address)
    }

    pub fn get(&self, address: &Address) -> Option<&Account> {
        self.accounts.get(address)
    }

    pub(crate) fn get_mut(&mut self, address: &Address) -> Option<&mut Account> {
        self.accounts.get_mut(address)
    }

    pub(crate) fn insert(&mut self, account: Account) {
        self.accounts.insert(account.address, account);
    }

    pub(crate) fn remove(&mut self, address: &Address) -> Option<Account> {
        self.accounts.remove(address)
    }

    pub fn contains(&self, address: &Address) -> bool {
        self.accounts.contains_key(address)
    }

    pub fn eoa(&self, label: &str) -> Option<Address> {
        self.labels.get(label).copied()
    }

    pub fn balance(&self, address: &Address) -> u64 {
        self.accounts.get(address).map_or(0, |a| a.balance)
    }

    pub fn nonce(&self, address: &Address) -> u64 {
        self.accounts.get(address).map_or(0, |a| a.nonce)
    }

    pub fn accounts(&self) -> impl Iterator<Item = &Account> {
        self.accounts.values()
    }

    pub fn len(&self) -> usize {
        self.accounts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accounts.is_empty()
    }

    /// Digest over every account in address order.
    pub fn state_digest(&self) -> Digest {
        let accounts: Vec<&Account> = self.accounts.values().collect();
        canonical::hash(&accounts).expect("world state holds canonical values only")
    }
}
