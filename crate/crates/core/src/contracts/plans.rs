//! Insurance plan store: one stored descriptor per distinct plan, shared by
//! reference from patient accounts.
//!
//! Descriptors live under `plan/<ref>`; reference counts under
//! `refcount/<ref>`, so the shared bytes can be measured on their own.

use serde_json::{json, Value};

use super::{calls, codes, decode_opt, invoke, unauthorized, PlanDescriptor, PlanInfo, ALREADY_BOUND_DETAIL};
use crate::digest::Digest;
use crate::runtime::{arg, Address, CallContext, ContractCode, ExecError};

const ADMIN: &str = "admin";
const FACTORY: &str = "factory";

/// Storage prefix of the shared descriptors.
pub const PLAN_PREFIX: &str = "plan/";

fn plan_key(r: &Digest) -> String {
    format!("{PLAN_PREFIX}{r}")
}
fn count_key(r: &Digest) -> String {
    format!("refcount/{r}")
}

pub(super) fn code() -> ContractCode {
    ContractCode::new(construct)
        .with("bind", bind)
        .with("intern", intern)
        .with("retain", retain)
        .with("release", release)
        .with("getPlan", get_plan)
}

fn construct(ctx: &mut CallContext<'_, '_>, _: &Value) -> Result<(), ExecError> {
    let admin = ctx.caller();
    ctx.store(ADMIN, &admin)
}

/// `{factory}`, once, by the admin.
fn bind(ctx: &mut CallContext<'_, '_>, args: &Value) -> Result<Value, ExecError> {
    let admin: Address = ctx.expect_as(ADMIN)?;
    if ctx.caller() != admin {
        return Err(unauthorized("only the admin binds the plan store"));
    }
    if ctx.load(FACTORY)?.is_some() {
        return Err(ExecError::revert(codes::ALREADY_BOUND, ALREADY_BOUND_DETAIL));
    }
    let factory: Address = arg(args, "factory")?;
    ctx.store(FACTORY, &factory)?;
    Ok(Value::Null)
}

/// `{descriptor}` -> planRef. Storing happens only for unseen descriptors.
fn intern(ctx: &mut CallContext<'_, '_>, args: &Value) -> Result<Value, ExecError> {
    let descriptor: PlanDescriptor = arg(args, "descriptor")?;
    let descriptor = descriptor.canonicalize()?;
    let plan_ref = descriptor.plan_ref()?;
    let key = plan_key(&plan_ref);
    if ctx.load(&key)?.is_none() {
        ctx.store(&key, &descriptor)?;
    }
    Ok(json!(plan_ref))
}

fn require_patient_account(ctx: &mut CallContext<'_, '_>) -> Result<(), ExecError> {
    let caller = ctx.caller();
    let factory: Option<Address> = ctx.load_as(FACTORY)?;
    let Some(factory) = factory else {
        return Err(unauthorized("plan store is not bound"));
    };
    let is_patient: Option<bool> =
        decode_opt(invoke(ctx, calls::is_patient_account(factory, caller))?)?;
    if is_patient != Some(true) {
        return Err(unauthorized(format!("{caller} is not a patient account")));
    }
    Ok(())
}

fn adjust(ctx: &mut CallContext<'_, '_>, args: &Value, delta: i64) -> Result<Value, ExecError> {
    require_patient_account(ctx)?;
    let plan_ref: Digest = arg(args, "planRef")?;
    if ctx.load(&plan_key(&plan_ref))?.is_none() {
        return Err(ExecError::revert(codes::UNKNOWN_PLAN, plan_ref));
    }
    let key = count_key(&plan_ref);
    let count: u64 = ctx.load_as(&key)?.unwrap_or(0);
    let next = count
        .checked_add_signed(delta)
        .ok_or_else(|| ExecError::CorruptStorage(format!("refcount of {plan_ref} would go negative")))?;
    ctx.store(&key, &next)?;
    Ok(json!(next))
}

/// `{planRef}`, by a patient account taking a reference.
fn retain(ctx: &mut CallContext<'_, '_>, args: &Value) -> Result<Value, ExecError> {
    adjust(ctx, args, 1)
}

/// `{planRef}`, by a patient account dropping a reference.
fn release(ctx: &mut CallContext<'_, '_>, args: &Value) -> Result<Value, ExecError> {
    adjust(ctx, args, -1)
}

fn get_plan(ctx: &mut CallContext<'_, '_>, args: &Value) -> Result<Value, ExecError> {
    let plan_ref: Digest = arg(args, "planRef")?;
    let Some(descriptor) = ctx.load_as::<PlanDescriptor>(&plan_key(&plan_ref))? else {
        return Ok(Value::Null);
    };
    let ref_count: u64 = ctx.load_as(&count_key(&plan_ref))?.unwrap_or(0);
    let info = PlanInfo { plan_ref, descriptor, ref_count };
    serde_json::to_value(info).map_err(|e| ExecError::CorruptStorage(e.to_string()))
}
