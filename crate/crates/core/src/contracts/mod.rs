//! Health-record contract suite.
//!
//! | type id                  | role                                              |
//! |--------------------------|---------------------------------------------------|
//! | `dash.PatientRegistry`   | singleton map from patient id to account address  |
//! | `dash.PatientAccount`    | per-patient ACL, record entries, prescriptions    |
//! | `dash.ProviderAccount`   | provider profile bound to the provider's EOA      |
//! | `dash.AccountFactory`    | creates accounts from admin-switchable versions   |
//! | `dash.InsurancePlanStore`| content-addressed shared plan descriptors         |
//! | `dash.BillingAccount`    | extension user type, not active at genesis        |
//!
//! Every function takes a JSON object of named arguments. [`calls`] builds
//! those invocations so clients never spell function names by hand.

pub mod calls;
mod factory;
mod patient;
mod plans;
mod provider;
mod registry;
mod system;
mod types;

pub use patient::{INSURANCE_EXTRINSIC, INSURANCE_INLINE, INSURANCE_REF};
pub use plans::PLAN_PREFIX;
pub use system::{bootstrap, BootstrapError, SystemAddresses, GENESIS_GAS};
pub use types::{
    Extrinsic, PlanDescriptor, PlanInfo, PrescriptionRequest, PrescriptionStatus, RecordEntry,
};

use serde_json::Value;

use crate::runtime::{AlreadyRegistered, ContractTypeRegistry, ExecError, TypeKey};

pub const PATIENT_REGISTRY: &str = "dash.PatientRegistry";
pub const PATIENT_ACCOUNT: &str = "dash.PatientAccount";
pub const PROVIDER_ACCOUNT: &str = "dash.ProviderAccount";
pub const ACCOUNT_FACTORY: &str = "dash.AccountFactory";
pub const PLAN_STORE: &str = "dash.InsurancePlanStore";
pub const BILLING_ACCOUNT: &str = "dash.BillingAccount";

/// User types the factory knows at genesis. Others may be activated later.
pub const USER_PATIENT: &str = "Patient";
pub const USER_PROVIDER: &str = "Provider";

/// Revert codes raised by the suite, as the leading token of the reason.
pub mod codes {
    pub const UNAUTHORIZED: &str = "Unauthorized";
    pub const EMPTY_PATIENT_ID: &str = "EmptyPatientId";
    pub const NOT_A_PROVIDER: &str = "NotAProvider";
    pub const UNKNOWN_REQUEST: &str = "UnknownRequest";
    pub const ALREADY_FULFILLED: &str = "AlreadyFulfilled";
    pub const UNKNOWN_USER_TYPE: &str = "UnknownUserType";
    pub const UNKNOWN_CONTRACT_TYPE: &str = "UnknownContractType";
    pub const INVALID_DESCRIPTOR: &str = "InvalidDescriptor";
    pub const UNKNOWN_PLAN: &str = "UnknownPlan";
    pub const ALREADY_BOUND: &str = "AlreadyBound";
    pub const ALREADY_OWNED: &str = "AlreadyOwned";
    pub const DUPLICATE_PROVIDER: &str = "DuplicateProvider";
}

/// Registers every contract type and version of the suite.
pub fn register_all(reg: &mut ContractTypeRegistry) -> Result<(), AlreadyRegistered> {
    reg.register(TypeKey::new(PATIENT_REGISTRY, 1), registry::code())?;
    reg.register(TypeKey::new(PATIENT_ACCOUNT, 1), patient::code_v1())?;
    reg.register(TypeKey::new(PATIENT_ACCOUNT, 2), patient::code_v2())?;
    reg.register(TypeKey::new(PROVIDER_ACCOUNT, 1), provider::code())?;
    reg.register(TypeKey::new(ACCOUNT_FACTORY, 1), factory::code())?;
    reg.register(TypeKey::new(PLAN_STORE, 1), plans::code())?;
    reg.register(TypeKey::new(BILLING_ACCOUNT, 1), provider::billing_code())?;
    Ok(())
}

/// A fresh registry holding the whole suite.
pub fn contract_registry() -> ContractTypeRegistry {
    let mut reg = ContractTypeRegistry::new();
    register_all(&mut reg).expect("fresh registry has no conflicts");
    reg
}

pub(crate) const ALREADY_BOUND_DETAIL: &str = "system contracts are bound once at genesis";

pub(crate) fn unauthorized(detail: impl std::fmt::Display) -> ExecError {
    ExecError::revert(codes::UNAUTHORIZED, detail)
}

/// Argument object with `key` inserted, for forwarding augmented params.
pub(crate) fn with_field(mut params: Value, key: &str, value: Value) -> Result<Value, ExecError> {
    match params.as_object_mut() {
        Some(map) => {
            map.insert(key.to_owned(), value);
            Ok(params)
        }
        None => Err(ExecError::BadArguments("params must be an object".into())),
    }
}

/// Storage keys use zero-padded indices so prefix scans come back in order.
pub(crate) fn index_key(prefix: &str, i: u64) -> String {
    format!("{prefix}{i:010}")
}

pub(crate) fn invoke(ctx: &mut crate::runtime::CallContext<'_, '_>, call: calls::Call) -> Result<Value, ExecError> {
    ctx.call(call.target, call.function, &call.args)
}

/// Decodes a contract's JSON return value, treating `null` as absent.
pub(crate) fn decode_opt<T: serde::de::DeserializeOwned>(v: Value) -> Result<Option<T>, ExecError> {
    if v.is_null() {
        return Ok(None);
    }
    serde_json::from_value(v).map(Some).map_err(|e| ExecError::CorruptStorage(e.to_string()))
}
