//! Account factory: creates user accounts from the active `(typeId, version)`
//! of each user type, and keeps a directory of what it created.

use serde_json::{json, Value};

use super::{codes, unauthorized, with_field, ALREADY_BOUND_DETAIL, USER_PATIENT, USER_PROVIDER};
use crate::runtime::{arg, Address, CallContext, ContractCode, ExecError, TypeKey};

const ADMIN: &str = "admin";
const REGISTRY: &str = "registry";
const PLAN_STORE: &str = "planStore";

fn active_key(user_type: &str) -> String {
    format!("active/{user_type}")
}
fn account_key(a: &Address) -> String {
    format!("account/{a}")
}
fn provider_key(owner: &Address) -> String {
    format!("provider/{owner}")
}
fn provider_owner_key(sca: &Address) -> String {
    format!("providerOwner/{sca}")
}

pub(super) fn code() -> ContractCode {
    ContractCode::new(construct)
        .with("bind", bind)
        .with("create", create)
        .with("setActiveVersion", set_active_version)
        .with("activeVersion", active_version)
        .with("resolveProvider", resolve_provider)
        .with("providerAccount", provider_account)
        .with("isPatientAccount", is_patient_account)
}

fn activate(ctx: &mut CallContext<'_, '_>, user_type: &str, key: &TypeKey) -> Result<(), ExecError> {
    if user_type.is_empty() {
        return Err(ExecError::BadArguments("userType must be non-empty".into()));
    }
    if !ctx.is_registered(key)? {
        return Err(ExecError::revert(codes::UNKNOWN_CONTRACT_TYPE, key));
    }
    ctx.store(&active_key(user_type), key)
}

/// `{activeVersions: {userType: {typeId, version}}}`; the creator becomes admin.
fn construct(ctx: &mut CallContext<'_, '_>, args: &Value) -> Result<(), ExecError> {
    let versions: std::collections::BTreeMap<String, TypeKey> = arg(args, "activeVersions")?;
    let admin = ctx.caller();
    ctx.store(ADMIN, &admin)?;
    for (user_type, key) in &versions {
        activate(ctx, user_type, key)?;
    }
    Ok(())
}

fn require_admin(ctx: &mut CallContext<'_, '_>) -> Result<Address, ExecError> {
    let admin: Address = ctx.expect_as(ADMIN)?;
    if ctx.caller() != admin {
        return Err(unauthorized(format!("{} is not the factory admin", ctx.caller())));
    }
    Ok(admin)
}

/// `{registry, planStore}`, once, by the admin.
fn bind(ctx: &mut CallContext<'_, '_>, args: &Value) -> Result<Value, ExecError> {
    require_admin(ctx)?;
    if ctx.load(REGISTRY)?.is_some() {
        return Err(ExecError::revert(codes::ALREADY_BOUND, ALREADY_BOUND_DETAIL));
    }
    let registry: Address = arg(args, "registry")?;
    let plan_store: Address = arg(args, "planStore")?;
    ctx.store(REGISTRY, &registry)?;
    ctx.store(PLAN_STORE, &plan_store)?;
    Ok(Value::Null)
}

/// `{userType, params}` -> address of the new account.
fn create(ctx: &mut CallContext<'_, '_>, args: &Value) -> Result<Value, ExecError> {
    let user_type: String = arg(args, "userType")?;
    let params: Value = arg(args, "params")?;
    let key: TypeKey = ctx
        .load_as(&active_key(&user_type))?
        .ok_or_else(|| ExecError::revert(codes::UNKNOWN_USER_TYPE, &user_type))?;

    let caller = ctx.caller();
    let params = if user_type == USER_PATIENT {
        let registry: Option<Address> = ctx.load_as(REGISTRY)?;
        if registry != Some(caller) {
            return Err(unauthorized("patient accounts are created through the registry"));
        }
        let plan_store: Address = ctx.expect_as(PLAN_STORE)?;
        let params = with_field(params, "registry", json!(caller))?;
        let params = with_field(params, "factory", json!(ctx.address()))?;
        with_field(params, "planStore", json!(plan_store))?
    } else {
        require_admin(ctx)?;
        with_field(params, "factory", json!(ctx.address()))?
    };

    let provider_owner = if user_type == USER_PROVIDER {
        let owner: Address = arg(&params, "owner")?;
        if ctx.load(&provider_key(&owner))?.is_some() {
            return Err(ExecError::revert(codes::DUPLICATE_PROVIDER, format!("{owner} already has a provider account")));
        }
        Some(owner)
    } else {
        None
    };

    let address = ctx.instantiate(&key, &params)?;
    ctx.store(&account_key(&address), &user_type)?;
    if let Some(owner) = provider_owner {
        ctx.store(&provider_key(&owner), &address)?;
        ctx.store(&provider_owner_key(&address), &owner)?;
    }
    ctx.emit(
        "AccountCreated",
        &json!({ "userType": user_type, "address": address, "typeId": key.type_id, "version": key.version }),
    )?;
    Ok(json!(address))
}

/// `{userType, typeId, version}`, by the admin. Existing accounts are untouched.
fn set_active_version(ctx: &mut CallContext<'_, '_>, args: &Value) -> Result<Value, ExecError> {
    require_admin(ctx)?;
    let user_type: String = arg(args, "userType")?;
    let key = TypeKey::new(arg::<String>(args, "typeId")?, arg(args, "version")?);
    activate(ctx, &user_type, &key)?;
    ctx.emit(
        "FactoryVersionChanged",
        &json!({ "userType": user_type, "typeId": key.type_id, "version": key.version }),
    )?;
    Ok(Value::Null)
}

fn active_version(ctx: &mut CallContext<'_, '_>, args: &Value) -> Result<Value, ExecError> {
    let user_type: String = arg(args, "userType")?;
    Ok(ctx.load(&active_key(&user_type))?.unwrap_or(Value::Null))
}

/// `{address}` -> owning EOA when `address` is a provider account or a
/// provider's EOA, else null.
fn resolve_provider(ctx: &mut CallContext<'_, '_>, args: &Value) -> Result<Value, ExecError> {
    let address: Address = arg(args, "address")?;
    if let Some(owner) = ctx.load(&provider_owner_key(&address))? {
        return Ok(owner);
    }
    if ctx.load(&provider_key(&address))?.is_some() {
        return Ok(json!(address));
    }
    Ok(Value::Null)
}

fn provider_account(ctx: &mut CallContext<'_, '_>, args: &Value) -> Result<Value, ExecError> {
    let owner: Address = arg(args, "owner")?;
    Ok(ctx.load(&provider_key(&owner))?.unwrap_or(Value::Null))
}

fn is_patient_account(ctx: &mut CallContext<'_, '_>, args: &Value) -> Result<Value, ExecError> {
    let address: Address = arg(args, "address")?;
    let kind: Option<String> = ctx.load_as(&account_key(&address))?;
    Ok(json!(kind.as_deref() == Some(USER_PATIENT)))
}
