//! Patient registry: append-only map from patient id to account address.

use serde_json::{json, Value};

use super::{calls, codes, decode_opt, invoke, unauthorized, USER_PATIENT};
use crate::runtime::{arg, opt_arg, Address, CallContext, ContractCode, ExecError};

const FACTORY: &str = "factory";
const ONBOARDER: &str = "onboarder";

fn entry_key(patient_id: &str) -> String {
    format!("patient/{patient_id}")
}

pub(super) fn code() -> ContractCode {
    ContractCode::new(construct).with("lookupOrCreate", lookup_or_create).with("get", get)
}

/// `{factory, onboarder}`; the onboarder is the identity allowed to bind owners.
fn construct(ctx: &mut CallContext<'_, '_>, args: &Value) -> Result<(), ExecError> {
    let factory: Address = arg(args, "factory")?;
    let onboarder: Address = arg(args, "onboarder")?;
    ctx.store(FACTORY, &factory)?;
    ctx.store(ONBOARDER, &onboarder)
}

fn lookup_or_create(ctx: &mut CallContext<'_, '_>, args: &Value) -> Result<Value, ExecError> {
    let patient_id: String = arg(args, "patientId")?;
    let owner: Option<Address> = opt_arg(args, "owner")?;
    if patient_id.is_empty() {
        return Err(ExecError::revert(codes::EMPTY_PATIENT_ID, "patientId must be non-empty"));
    }
    let caller = ctx.caller();
    let factory: Address = ctx.expect_as(FACTORY)?;
    let onboarder: Address = ctx.expect_as(ONBOARDER)?;
    let is_onboarder = caller == onboarder;
    if !is_onboarder {
        let provider: Option<Address> = decode_opt(invoke(ctx, calls::resolve_provider(factory, caller))?)?;
        if provider.is_none() {
            return Err(unauthorized(format!("{caller} may not look up or create patient accounts")));
        }
        if owner.is_some() {
            return Err(unauthorized("only the onboarding identity binds owners"));
        }
    }

    let key = entry_key(&patient_id);
    if let Some(existing) = ctx.load_as::<Address>(&key)? {
        if let Some(owner) = owner {
            ctx.call(existing, "bindOwner", &json!({ "owner": owner }))?;
        }
        return Ok(json!(existing));
    }

    let mut params = json!({ "patientId": patient_id });
    if let Some(owner) = owner {
        params["owner"] = json!(owner);
    }
    if !is_onboarder {
        // the provider that caused the creation can read and write it until
        // an owner takes over the ACL
        params["initialProvider"] = json!(caller);
    }
    let created = invoke(ctx, calls::create_account(factory, USER_PATIENT, params))?;
    let address: Address = decode_opt(created)?.ok_or_else(|| ExecError::CorruptStorage("factory returned null".into()))?;
    ctx.store(&key, &address)?;
    ctx.emit("PatientAccountCreated", &json!({ "patientId": patient_id, "address": address }))?;
    Ok(json!(address))
}

fn get(ctx: &mut CallContext<'_, '_>, args: &Value) -> Result<Value, ExecError> {
    let patient_id: String = arg(args, "patientId")?;
    Ok(ctx.load(&entry_key(&patient_id))?.unwrap_or(Value::Null))
}
