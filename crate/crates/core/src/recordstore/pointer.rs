use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::RecordError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Memory,
    File,
}

impl BackendKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BackendKind::Memory => "memory",
            BackendKind::File => "file",
        }
    }
}

/// Where an off-chain record lives, written `<backend>:<locator>`.
/// Locators are 64 lowercase hex digits (the record's digest).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StoragePointer {
    pub backend: BackendKind,
    pub locator: String,
}

fn valid_locator(s: &str) -> bool {
    s.len() == 64 && s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
}

impl StoragePointer {
    pub fn new(backend: BackendKind, locator: impl Into<String>) -> Result<Self, RecordError> {
        let locator = locator.into();
        if !valid_locator(&locator) {
            return Err(RecordError::BadPointer(format!("locator {locator:?} is not a 64-digit lowercase hex digest")));
        }
        Ok(StoragePointer { backend, locator })
    }
}

impl fmt::Display for StoragePointer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.backend.as_str(), self.locator)
    }
}

impl FromStr for StoragePointer {
    type Err = RecordError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (backend, locator) = s
            .split_once(':')
            .ok_or_else(|| RecordError::BadPointer(format!("{s:?} has no backend prefix")))?;
        let backend = match backend {
            "memory" => BackendKind::Memory,
            "file" => BackendKind::File,
            other => return Err(RecordError::BadPointer(format!("unknown backend {other:?}"))),
        };
        StoragePointer::new(backend, locator)
    }
}

impl Serialize for StoragePointer {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for StoragePointer {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
