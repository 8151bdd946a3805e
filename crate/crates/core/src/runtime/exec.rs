//! Transaction execution: call frames, journaled rollback, gas, events.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{
    Account, AccountKind, Address, ContractTypeRegistry, GasMeter, GasSchedule, TypeKey,
    WorldState,
};
use crate::canonical;

const MAX_CALL_DEPTH: u32 = 64;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExecError {
    #[error("NotAContract: {0} has no contract code")]
    NotAContract(Address),
    #[error("UnknownFunction: {0}")]
    UnknownFunction(String),
    #[error("UnknownContractType: {0}")]
    UnknownContractType(TypeKey),
    #[error("OutOfGas")]
    OutOfGas,
    #[error("ConstructorRevert: {0}")]
    ConstructorRevert(String),
    /// Contract-level revert. By convention the reason is `Code` or `Code: detail`.
    #[error("{0}")]
    Reverted(String),
    #[error("UnknownAccount: {0}")]
    UnknownAccount(Address),
    #[error("InsufficientFunds: need {needed}, have {available}")]
    InsufficientFunds { needed: u64, available: u64 },
    #[error("AddressCollision: {0}")]
    AddressCollision(Address),
    #[error("CallDepthExceeded")]
    CallDepthExceeded,
    #[error("BadArguments: {0}")]
    BadArguments(String),
    #[error("CorruptStorage: {0}")]
    CorruptStorage(String),
}

impl ExecError {
    pub fn revert(code: &str, detail: impl std::fmt::Display) -> Self {
        ExecError::Reverted(format!("{code}: {detail}"))
    }

    /// Stable leading token of the error message (`Unauthorized`, `OutOfGas`, ...).
    pub fn code(&self) -> &str {
        match self {
            ExecError::Reverted(reason) => reason_code(reason),
            ExecError::NotAContract(_) => "NotAContract",
            ExecError::UnknownFunction(_) => "UnknownFunction",
            ExecError::UnknownContractType(_) => "UnknownContractType",
            ExecError::OutOfGas => "OutOfGas",
            ExecError::ConstructorRevert(_) => "ConstructorRevert",
            ExecError::UnknownAccount(_) => "UnknownAccount",
            ExecError::InsufficientFunds { .. } => "InsufficientFunds",
            ExecError::AddressCollision(_) => "AddressCollision",
            ExecError::CallDepthExceeded => "CallDepthExceeded",
            ExecError::BadArguments(_) => "BadArguments",
            ExecError::CorruptStorage(_) => "CorruptStorage",
        }
    }
}

/// Leading code of a revert reason string.
pub fn reason_code(reason: &str) -> &str {
    reason.split(':').next().unwrap_or(reason).trim()
}

/// Contract call, creation, or value transfer carried by a transaction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all_fields = "camelCase", deny_unknown_fields)]
pub enum Payload {
    CreateContract { type_id: String, version: u32, ctor_args: Value },
    CallContract { target: Address, function: String, args: Value },
    Transfer { target: Address, amount: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Event {
    pub emitter: Address,
    pub topic: String,
    pub payload: Value,
    /// Ordinal of the event within its block.
    pub sequence: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockEnv {
    pub height: u64,
    pub timestamp: u64,
}

/// Result of executing one transaction or query.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub result: Result<Value, ExecError>,
    pub gas_used: u64,
    pub events: Vec<Event>,
    /// Contract accounts created and kept.
    pub created: Vec<Address>,
}

enum Undo {
    Storage { address: Address, key: String, prev: Option<Value> },
    Balance { address: Address, prev: u64 },
    Nonce { address: Address, prev: u64 },
    Created(Address),
}

#[derive(Clone, Copy)]
struct Checkpoint {
    journal: usize,
    events: usize,
}

/// Mutable view of world state for the duration of one transaction.
pub struct Executor<'s> {
    state: &'s mut WorldState,
    registry: &'s ContractTypeRegistry,
    meter: GasMeter,
    env: BlockEnv,
    journal: Vec<Undo>,
    events: Vec<Event>,
    event_base: u64,
    depth: u32,
}

impl<'s> Executor<'s> {
    pub fn new(
        state: &'s mut WorldState,
        registry: &'s ContractTypeRegistry,
        schedule: GasSchedule,
        gas_limit: u64,
        env: BlockEnv,
        event_base: u64,
    ) -> Self {
        Executor {
            state,
            registry,
            meter: GasMeter::new(schedule, gas_limit),
            env,
            journal: Vec::new(),
            events: Vec::new(),
            event_base,
            depth: 0,
        }
    }

    pub fn meter(&self) -> &GasMeter {
        &self.meter
    }

    pub fn charge(&mut self, steps: u64, stored_bytes: u64, events: u64) -> Result<u64, ExecError> {
        self.meter.charge(steps, stored_bytes, events)
    }

    fn checkpoint(&self) -> Checkpoint {
        Checkpoint { journal: self.journal.len(), events: self.events.len() }
    }

    fn rollback(&mut self, cp: Checkpoint) {
        while self.journal.len() > cp.journal {
            match self.journal.pop().expect("journal length checked") {
                Undo::Storage { address, key, prev } => {
                    if let Some(account) = self.state.get_mut(&address) {
                        match prev {
                            Some(v) => {
                                account.storage.insert(key, v);
                            }
                            None => {
                                account.storage.remove(&key);
                            }
                        }
                    }
                }
                Undo::Balance { address, prev } => {
                    if let Some(account) = self.state.get_mut(&address) {
                        account.balance = prev;
                    }
                }
                Undo::Nonce { address, prev } => {
                    if let Some(account) = self.state.get_mut(&address) {
                        account.nonce = prev;
                    }
                }
                Undo::Created(address) => {
                    self.state.remove(&address);
                }
            }
        }
        self.events.truncate(cp.events);
    }

    fn set_balance(&mut self, address: Address, balance: u64) -> Result<(), ExecError> {
        let account = self.state.get_mut(&address).ok_or(ExecError::UnknownAccount(address))?;
        self.journal.push(Undo::Balance { address, prev: account.balance });
        account.balance = balance;
        Ok(())
    }

    fn bump_nonce(&mut self, address: Address) -> Result<u64, ExecError> {
        let account = self.state.get_mut(&address).ok_or(ExecError::UnknownAccount(address))?;
        let nonce = account.nonce;
        self.journal.push(Undo::Nonce { address, prev: nonce });
        account.nonce = nonce + 1;
        Ok(nonce)
    }

    fn write_storage(&mut self, address: Address, key: &str, value: Option<Value>) -> Result<(), ExecError> {
        let account = self.state.get_mut(&address).ok_or(ExecError::UnknownAccount(address))?;
        let prev = match value {
            Some(v) => account.storage.insert(key.to_owned(), v),
            None => account.storage.remove(key),
        };
        self.journal.push(Undo::Storage { address, key: key.to_owned(), prev });
        Ok(())
    }

    /// Invokes `function` on the contract at `target` in a fresh frame.
    ///
    /// On error every mutation made by the frame (and its children) is undone;
    /// gas already spent stays spent.
    pub fn call(
        &mut self,
        caller: Address,
        target: Address,
        function: &str,
        args: &Value,
    ) -> Result<Value, ExecError> {
        if self.depth >= MAX_CALL_DEPTH {
            return Err(ExecError::CallDepthExceeded);
        }
        let key = match self.state.get(&target) {
            Some(Account { kind: AccountKind::Sca, contract_type: Some(key), .. }) => key.clone(),
            _ => return Err(ExecError::NotAContract(target)),
        };
        let code = self.registry.get(&key).ok_or_else(|| ExecError::UnknownContractType(key.clone()))?;
        let f = code.function(function).ok_or_else(|| ExecError::UnknownFunction(function.to_owned()))?;

        let cp = self.checkpoint();
        self.depth += 1;
        let result = self.charge(1, 0, 0).and_then(|_| {
            let mut ctx = CallContext { exec: self, address: target, caller };
            f(&mut ctx, args)
        });
        self.depth -= 1;
        if result.is_err() {
            self.rollback(cp);
        }
        result
    }

    /// Creates a contract account and runs its constructor.
    ///
    /// `explicit_nonce` is used for externally-originated creations, where the
    /// sender's nonce is consumed by the transaction itself; contract creators
    /// consume their own account nonce.
    pub fn instantiate(
        &mut self,
        creator: Address,
        explicit_nonce: Option<u64>,
        key: &TypeKey,
        args: &Value,
    ) -> Result<Address, ExecError> {
        if self.depth >= MAX_CALL_DEPTH {
            return Err(ExecError::CallDepthExceeded);
        }
        let code = self.registry.get(key).ok_or_else(|| ExecError::UnknownContractType(key.clone()))?;
        let ctor = code.constructor();

        let cp = self.checkpoint();
        self.depth += 1;
        let result = self.instantiate_inner(creator, explicit_nonce, key, ctor, args);
        self.depth -= 1;
        if result.is_err() {
            self.rollback(cp);
        }
        result
    }

    fn instantiate_inner(
        &mut self,
        creator: Address,
        explicit_nonce: Option<u64>,
        key: &TypeKey,
        ctor: super::ConstructorFn,
        args: &Value,
    ) -> Result<Address, ExecError> {
        let nonce = match explicit_nonce {
            Some(n) => n,
            None => self.bump_nonce(creator)?,
        };
        let address = Address::for_contract(&creator, nonce);
        if self.state.contains(&address) {
            return Err(ExecError::AddressCollision(address));
        }
        self.state.insert(Account {
            address,
            kind: AccountKind::Sca,
            balance: 0,
            nonce: 0,
            label: None,
            contract_type: Some(key.clone()),
            storage: Default::default(),
        });
        self.journal.push(Undo::Created(address));
        self.charge(1, 0, 0)?;
        let mut ctx = CallContext { exec: self, address, caller: creator };
        match ctor(&mut ctx, args) {
            Ok(()) => Ok(address),
            Err(ExecError::OutOfGas) => Err(ExecError::OutOfGas),
            Err(ExecError::Reverted(reason)) => Err(ExecError::ConstructorRevert(reason)),
            Err(other) => Err(ExecError::ConstructorRevert(other.to_string())),
        }
    }

    fn transfer(&mut self, from: Address, to: Address, amount: u64, reserve: u64) -> Result<(), ExecError> {
        self.charge(2, 0, 0)?;
        if !self.state.contains(&to) {
            return Err(ExecError::UnknownAccount(to));
        }
        let available = self.state.balance(&from);
        let needed = amount.saturating_add(reserve);
        if available < needed {
            return Err(ExecError::InsufficientFunds { needed, available });
        }
        if from == to {
            return Ok(());
        }
        self.set_balance(from, available - amount)?;
        let to_balance = self.state.balance(&to);
        let credited = to_balance.checked_add(amount).ok_or_else(|| ExecError::revert("BalanceOverflow", to))?;
        self.set_balance(to, credited)
    }

    fn finish(mut self, result: Result<Value, ExecError>, keep: bool) -> Outcome {
        let result = match result {
            Ok(_) if self.meter.is_exhausted() => Err(ExecError::OutOfGas),
            other => other,
        };
        if result.is_err() || !keep {
            self.rollback(Checkpoint { journal: 0, events: 0 });
        }
        let created = self
            .journal
            .iter()
            .filter_map(|u| match u {
                Undo::Created(a) => Some(*a),
                _ => None,
            })
            .collect();
        let events = if result.is_ok() { std::mem::take(&mut self.events) } else { Vec::new() };
        Outcome { result, gas_used: self.meter.used(), events, created }
    }
}

/// Inputs to [`execute_transaction`].
#[derive(Debug, Clone)]
pub struct TxInput<'a> {
    pub sender: Address,
    pub sender_nonce: u64,
    pub payload: &'a Payload,
    pub gas_limit: u64,
    pub env: BlockEnv,
    /// Sequence number assigned to the first event this transaction emits.
    pub event_base: u64,
}

/// Executes a transaction against `state`.
///
/// The sender's nonce is consumed and gas debited whether or not the payload
/// succeeds; on failure no other state change survives.
pub fn execute_transaction(
    state: &mut WorldState,
    registry: &ContractTypeRegistry,
    schedule: GasSchedule,
    tx: TxInput<'_>,
) -> Outcome {
    let failed = |e: ExecError| Outcome { result: Err(e), gas_used: 0, events: Vec::new(), created: Vec::new() };
    let balance = match state.get(&tx.sender) {
        Some(a) if a.kind == AccountKind::Eoa => a.balance,
        _ => return failed(ExecError::UnknownAccount(tx.sender)),
    };
    if let Some(sender) = state.get_mut(&tx.sender) {
        sender.nonce += 1;
    }
    if balance < tx.gas_limit {
        return failed(ExecError::InsufficientFunds { needed: tx.gas_limit, available: balance });
    }

    let mut exec = Executor::new(state, registry, schedule, tx.gas_limit, tx.env, tx.event_base);
    let result = exec.meter.charge_base().and_then(|_| match tx.payload {
        Payload::CreateContract { type_id, version, ctor_args } => {
            let key = TypeKey::new(type_id.clone(), *version);
            exec.instantiate(tx.sender, Some(tx.sender_nonce), &key, ctor_args)
                .map(|a| Value::String(a.to_hex()))
        }
        Payload::CallContract { target, function, args } => exec.call(tx.sender, *target, function, args),
        Payload::Transfer { target, amount } => {
            exec.transfer(tx.sender, *target, *amount, tx.gas_limit).map(|_| Value::Null)
        }
    });
    let outcome = exec.finish(result, true);
    if let Some(sender) = state.get_mut(&tx.sender) {
        sender.balance -= outcome.gas_used;
    }
    outcome
}

/// Runs a contract function without committing anything.
pub fn execute_query(
    state: &mut WorldState,
    registry: &ContractTypeRegistry,
    schedule: GasSchedule,
    env: BlockEnv,
    caller: Address,
    target: Address,
    function: &str,
    args: &Value,
    gas_limit: u64,
) -> Outcome {
    let mut exec = Executor::new(state, registry, schedule, gas_limit, env, 0);
    let result = exec.meter.charge_base().and_then(|_| exec.call(caller, target, function, args));
    exec.finish(result, false)
}

/// Handle a contract function receives for its own frame.
pub struct CallContext<'x, 's> {
    exec: &'x mut Executor<'s>,
    address: Address,
    caller: Address,
}

impl CallContext<'_, '_> {
    /// Address of the executing contract.
    pub fn address(&self) -> Address {
        self.address
    }

    /// Immediate caller: the sending EOA or the calling contract.
    pub fn caller(&self) -> Address {
        self.caller
    }

    pub fn block_height(&self) -> u64 {
        self.exec.env.height
    }

    pub fn timestamp(&self) -> u64 {
        self.exec.env.timestamp
    }

    pub fn charge(&mut self, steps: u64, stored_bytes: u64, events: u64) -> Result<u64, ExecError> {
        self.exec.charge(steps, stored_bytes, events)
    }

    pub fn load(&mut self, key: &str) -> Result<Option<Value>, ExecError> {
        self.exec.charge(1, 0, 0)?;
        Ok(self
            .exec
            .state
            .get(&self.address)
            .and_then(|a| a.storage.get(key))
            .cloned())
    }

    pub fn load_as<T: DeserializeOwned>(&mut self, key: &str) -> Result<Option<T>, ExecError> {
        match self.load(key)? {
            None => Ok(None),
            Some(v) => serde_json::from_value(v)
                .map(Some)
                .map_err(|e| ExecError::CorruptStorage(format!("{key}: {e}"))),
        }
    }

    /// Like [`load_as`](Self::load_as) but a missing key is corrupt storage.
    pub fn expect_as<T: DeserializeOwned>(&mut self, key: &str) -> Result<T, ExecError> {
        self.load_as(key)?.ok_or_else(|| ExecError::CorruptStorage(format!("missing {key}")))
    }

    pub fn store<T: Serialize + ?Sized>(&mut self, key: &str, value: &T) -> Result<(), ExecError> {
        let value = canonical::to_value(value).map_err(|e| ExecError::BadArguments(e.to_string()))?;
        let len = canonical::encoded_len(&value).map_err(|e| ExecError::BadArguments(e.to_string()))?;
        self.exec.charge(1, len as u64, 0)?;
        self.exec.write_storage(self.address, key, Some(value))
    }

    pub fn remove(&mut self, key: &str) -> Result<(), ExecError> {
        self.exec.charge(1, 0, 0)?;
        self.exec.write_storage(self.address, key, None)
    }

    /// All entries under `prefix`, in key order. One step per entry, minimum one.
    pub fn scan_prefix(&mut self, prefix: &str) -> Result<Vec<(String, Value)>, ExecError> {
        let entries: Vec<(String, Value)> = match self.exec.state.get(&self.address) {
            Some(a) => a
                .storage
                .range(prefix.to_owned()..)
                .take_while(|(k, _)| k.starts_with(prefix))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
            None => Vec::new(),
        };
        self.exec.charge(entries.len().max(1) as u64, 0, 0)?;
        Ok(entries)
    }

    pub fn emit<T: Serialize + ?Sized>(&mut self, topic: &str, payload: &T) -> Result<Event, ExecError> {
        let payload = canonical::to_value(payload).map_err(|e| ExecError::BadArguments(e.to_string()))?;
        self.exec.charge(0, 0, 1)?;
        let event = Event {
            emitter: self.address,
            topic: topic.to_owned(),
            payload,
            sequence: self.exec.event_base + self.exec.events.len() as u64,
        };
        self.exec.events.push(event.clone());
        Ok(event)
    }

    /// Calls another contract with this contract as the caller.
    pub fn call(&mut self, target: Address, function: &str, args: &Value) -> Result<Value, ExecError> {
        self.exec.call(self.address, target, function, args)
    }

    /// Instantiates a registered contract type with this contract as creator.
    pub fn instantiate(&mut self, key: &TypeKey, args: &Value) -> Result<Address, ExecError> {
        self.exec.instantiate(self.address, None, key, args)
    }

    pub fn is_registered(&mut self, key: &TypeKey) -> Result<bool, ExecError> {
        self.exec.charge(1, 0, 0)?;
        Ok(self.exec.registry.contains(key))
    }
}

/// Required named argument.
pub fn arg<T: DeserializeOwned>(args: &Value, name: &str) -> Result<T, ExecError> {
    let v = args
        .get(name)
        .ok_or_else(|| ExecError::BadArguments(format!("missing argument {name}")))?;
    serde_json::from_value(v.clone()).map_err(|e| ExecError::BadArguments(format!("{name}: {e}")))
}

/// Optional named argument; `null` counts as absent.
pub fn opt_arg<T: DeserializeOwned>(args: &Value, name: &str) -> Result<Option<T>, ExecError> {
    match args.get(name) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => serde_json::from_value(v.clone())
            .map(Some)
            .map_err(|e| ExecError::BadArguments(format!("{name}: {e}"))),
    }
}
