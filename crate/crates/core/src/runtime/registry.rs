use std::collections::BTreeMap;
use std::sync::Arc;

use serde_json::Value;

use super::{CallContext, ExecError, TypeKey};

/// A contract function: runs against the callee's storage, returns an encodable value.
pub type ContractFn = fn(&mut CallContext<'_, '_>, &Value) -> Result<Value, ExecError>;

/// A constructor: initializes storage of a freshly instantiated account.
pub type ConstructorFn = fn(&mut CallContext<'_, '_>, &Value) -> Result<(), ExecError>;

/// Native contract implementation: constructor plus a named function table.
#[derive(Clone)]
pub struct ContractCode {
    constructor: ConstructorFn,
    functions: BTreeMap<&'static str, ContractFn>,
}

impl ContractCode {
    pub fn new(constructor: ConstructorFn) -> Self {
        ContractCode { constructor, functions: BTreeMap::new() }
    }

    pub fn with(mut self, name: &'static str, function: ContractFn) -> Self {
        self.functions.insert(name, function);
        self
    }

    pub fn constructor(&self) -> ConstructorFn {
        self.constructor
    }

    pub fn function(&self, name: &str) -> Option<ContractFn> {
        self.functions.get(name).copied()
    }

    pub fn function_names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.functions.keys().copied()
    }
}

impl std::fmt::Debug for ContractCode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ContractCode")
            .field("functions", &self.functions.keys().collect::<Vec<_>>())
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("contract type {0} is already registered")]
pub struct AlreadyRegistered(pub TypeKey);

/// Registered contract types. Entries are immutable once added.
#[derive(Debug, Clone, Default)]
pub struct ContractTypeRegistry {
    types: BTreeMap<TypeKey, Arc<ContractCode>>,
}

impl ContractTypeRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, key: TypeKey, code: ContractCode) -> Result<(), AlreadyRegistered> {
        if self.types.contains_key(&key) {
            return Err(AlreadyRegistered(key));
        }
        self.types.insert(key, Arc::new(code));
        Ok(())
    }

    pub fn get(&self, key: &TypeKey) -> Option<&Arc<ContractCode>> {
        self.types.get(key)
    }

    pub fn contains(&self, key: &TypeKey) -> bool {
        self.types.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &TypeKey> {
        self.types.keys()
    }
}
