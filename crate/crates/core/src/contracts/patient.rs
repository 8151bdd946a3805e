//! Patient account: provider ACL, append-only record entries, prescription
//! requests and the insurance assignment.
//!
//! The ACL holds provider EOAs. A grant may name either the provider's
//! account contract or its EOA; both are resolved through the factory.
//!
//! Version 2 adds a per-resource-type index and `listRecordsByType`; every
//! version 1 function keeps its name, arguments and result shape.

use serde_json::{json, Value};

use super::{
    calls, codes, decode_opt, index_key, invoke, unauthorized, Extrinsic, PlanDescriptor,
    PrescriptionRequest, PrescriptionStatus, RecordEntry,
};
use crate::digest::Digest;
use crate::runtime::{arg, opt_arg, Address, CallContext, ContractCode, ExecError};

const PATIENT_ID: &str = "meta/patientId";
const OWNER: &str = "meta/owner";
const REGISTRY: &str = "meta/registry";
const FACTORY: &str = "meta/factory";
const PLAN_STORE: &str = "meta/planStore";
const RECORD_COUNT: &str = "meta/recordCount";
const RX_COUNT: &str = "meta/rxCount";
const RECORD_PREFIX: &str = "record/";
const RX_PREFIX: &str = "rx/";
const ACL_PREFIX: &str = "acl/";

/// Storage keys of the insurance assignment.
pub const INSURANCE_REF: &str = "insurance/ref";
pub const INSURANCE_EXTRINSIC: &str = "insurance/extrinsic";
pub const INSURANCE_INLINE: &str = "insurance/inlinePlan";

fn acl_key(provider: &Address) -> String {
    format!("{ACL_PREFIX}{provider}")
}
fn type_index_prefix(resource_type: &str) -> String {
    format!("byType/{resource_type}/")
}

fn common(ctor: crate::runtime::ConstructorFn, append: crate::runtime::ContractFn, fulfill: crate::runtime::ContractFn) -> ContractCode {
    ContractCode::new(ctor)
        .with("info", info)
        .with("bindOwner", bind_owner)
        .with("grantAccess", grant_access)
        .with("revokeAccess", revoke_access)
        .with("listProviders", list_providers)
        .with("appendRecord", append)
        .with("listRecords", list_records)
        .with("requestPrescription", request_prescription)
        .with("fulfillPrescription", fulfill)
        .with("listPrescriptions", list_prescriptions)
        .with("setInsurancePlan", set_insurance_plan)
        .with("setInsurancePlanInline", set_insurance_plan_inline)
        .with("getInsurance", get_insurance)
}

pub(super) fn code_v1() -> ContractCode {
    common(construct_v1, append_record_v1, fulfill_v1)
}

pub(super) fn code_v2() -> ContractCode {
    common(construct_v2, append_record_v2, fulfill_v2).with("listRecordsByType", list_records_by_type)
}

fn construct_v1(ctx: &mut CallContext<'_, '_>, args: &Value) -> Result<(), ExecError> {
    construct(ctx, args)
}

fn construct_v2(ctx: &mut CallContext<'_, '_>, args: &Value) -> Result<(), ExecError> {
    construct(ctx, args)
}

/// `{patientId, owner?, initialProvider?, registry, factory, planStore}`,
/// only from the factory.
fn construct(ctx: &mut CallContext<'_, '_>, args: &Value) -> Result<(), ExecError> {
    let factory: Address = arg(args, "factory")?;
    if ctx.caller() != factory {
        return Err(unauthorized("patient accounts are created by the factory"));
    }
    let patient_id: String = arg(args, "patientId")?;
    if patient_id.is_empty() {
        return Err(ExecError::revert(codes::EMPTY_PATIENT_ID, "patientId must be non-empty"));
    }
    let registry: Address = arg(args, "registry")?;
    let plan_store: Address = arg(args, "planStore")?;
    ctx.store(PATIENT_ID, &patient_id)?;
    ctx.store(REGISTRY, &registry)?;
    ctx.store(FACTORY, &factory)?;
    ctx.store(PLAN_STORE, &plan_store)?;
    if let Some(owner) = opt_arg::<Address>(args, "owner")? {
        ctx.store(OWNER, &owner)?;
    }
    if let Some(provider) = opt_arg::<Address>(args, "initialProvider")? {
        ctx.store(&acl_key(&provider), &true)?;
    }
    Ok(())
}

fn owner(ctx: &mut CallContext<'_, '_>) -> Result<Option<Address>, ExecError> {
    ctx.load_as(OWNER)
}

fn require_owner(ctx: &mut CallContext<'_, '_>) -> Result<(), ExecError> {
    let caller = ctx.caller();
    if owner(ctx)? != Some(caller) {
        return Err(unauthorized(format!("{caller} is not the account owner")));
    }
    Ok(())
}

fn is_provider(ctx: &mut CallContext<'_, '_>, who: &Address) -> Result<bool, ExecError> {
    Ok(ctx.load(&acl_key(who))?.is_some())
}

/// Owner or a permissioned provider.
fn require_member(ctx: &mut CallContext<'_, '_>) -> Result<(), ExecError> {
    let caller = ctx.caller();
    if owner(ctx)? == Some(caller) || is_provider(ctx, &caller)? {
        return Ok(());
    }
    Err(unauthorized(format!("{caller} has no access to this account")))
}

fn patient_id(ctx: &mut CallContext<'_, '_>) -> Result<String, ExecError> {
    ctx.expect_as(PATIENT_ID)
}

fn info(ctx: &mut CallContext<'_, '_>, _: &Value) -> Result<Value, ExecError> {
    let patient_id = patient_id(ctx)?;
    let owner = owner(ctx)?;
    Ok(json!({ "patientId": patient_id, "owner": owner }))
}

/// `{owner}`, from the registry during onboarding.
fn bind_owner(ctx: &mut CallContext<'_, '_>, args: &Value) -> Result<Value, ExecError> {
    let registry: Address = ctx.expect_as(REGISTRY)?;
    if ctx.caller() != registry {
        return Err(unauthorized("owners are bound through the registry"));
    }
    let new_owner: Address = arg(args, "owner")?;
    match owner(ctx)? {
        Some(current) if current == new_owner => {}
        Some(current) => return Err(ExecError::revert(codes::ALREADY_OWNED, format!("owned by {current}"))),
        None => ctx.store(OWNER, &new_owner)?,
    }
    Ok(Value::Null)
}

/// Provider EOA behind `provider`, or `NotAProvider`.
fn resolve_provider(ctx: &mut CallContext<'_, '_>, provider: Address) -> Result<Address, ExecError> {
    let factory: Address = ctx.expect_as(FACTORY)?;
    decode_opt(invoke(ctx, calls::resolve_provider(factory, provider))?)?
        .ok_or_else(|| ExecError::revert(codes::NOT_A_PROVIDER, provider))
}

fn grant_access(ctx: &mut CallContext<'_, '_>, args: &Value) -> Result<Value, ExecError> {
    require_owner(ctx)?;
    let provider = resolve_provider(ctx, arg(args, "provider")?)?;
    if !is_provider(ctx, &provider)? {
        ctx.store(&acl_key(&provider), &true)?;
        let patient_id = patient_id(ctx)?;
        ctx.emit("AccessGranted", &json!({ "patientId": patient_id, "provider": provider }))?;
    }
    Ok(Value::Null)
}

fn revoke_access(ctx: &mut CallContext<'_, '_>, args: &Value) -> Result<Value, ExecError> {
    require_owner(ctx)?;
    let provider = resolve_provider(ctx, arg(args, "provider")?)?;
    if is_provider(ctx, &provider)? {
        ctx.remove(&acl_key(&provider))?;
        let patient_id = patient_id(ctx)?;
        ctx.emit("AccessRevoked", &json!({ "patientId": patient_id, "provider": provider }))?;
    }
    Ok(Value::Null)
}

fn list_providers(ctx: &mut CallContext<'_, '_>, _: &Value) -> Result<Value, ExecError> {
    require_member(ctx)?;
    let entries = ctx.scan_prefix(ACL_PREFIX)?;
    let providers: Vec<&str> = entries.iter().map(|(k, _)| &k[ACL_PREFIX.len()..]).collect();
    Ok(json!(providers))
}

fn push_record(ctx: &mut CallContext<'_, '_>, entry: &RecordEntry, indexed: bool) -> Result<u64, ExecError> {
    let index: u64 = ctx.load_as(RECORD_COUNT)?.unwrap_or(0);
    ctx.store(&index_key(RECORD_PREFIX, index), entry)?;
    ctx.store(RECORD_COUNT, &(index + 1))?;
    if indexed {
        let prefix = type_index_prefix(&entry.resource_type);
        ctx.store(&index_key(&prefix, index), &index)?;
    }
    let patient_id = patient_id(ctx)?;
    ctx.emit(
        "RecordAppended",
        &json!({ "patientId": patient_id, "entryIndex": index, "resourceType": entry.resource_type }),
    )?;
    Ok(index)
}

fn new_entry(ctx: &CallContext<'_, '_>, record_hash: Digest, pointer: String, resource_type: String) -> Result<RecordEntry, ExecError> {
    if pointer.is_empty() || resource_type.is_empty() {
        return Err(ExecError::BadArguments("pointer and resourceType must be non-empty".into()));
    }
    Ok(RecordEntry { record_hash, pointer, resource_type, added_by: ctx.caller(), block_height: ctx.block_height() })
}

/// `{recordHash, pointer, resourceType}` -> entry index.
fn append_record(ctx: &mut CallContext<'_, '_>, args: &Value, indexed: bool) -> Result<Value, ExecError> {
    require_member(ctx)?;
    let entry = new_entry(ctx, arg(args, "recordHash")?, arg(args, "pointer")?, arg(args, "resourceType")?)?;
    Ok(json!(push_record(ctx, &entry, indexed)?))
}

fn append_record_v1(ctx: &mut CallContext<'_, '_>, args: &Value) -> Result<Value, ExecError> {
    append_record(ctx, args, false)
}

fn append_record_v2(ctx: &mut CallContext<'_, '_>, args: &Value) -> Result<Value, ExecError> {
    append_record(ctx, args, true)
}

fn list_records(ctx: &mut CallContext<'_, '_>, _: &Value) -> Result<Value, ExecError> {
    require_member(ctx)?;
    let entries = ctx.scan_prefix(RECORD_PREFIX)?;
    Ok(Value::Array(entries.into_iter().map(|(_, v)| v).collect()))
}

/// `{resourceType}` -> entries of that type, in append order.
fn list_records_by_type(ctx: &mut CallContext<'_, '_>, args: &Value) -> Result<Value, ExecError> {
    require_member(ctx)?;
    let resource_type: String = arg(args, "resourceType")?;
    let mut out = Vec::new();
    for (_, index) in ctx.scan_prefix(&type_index_prefix(&resource_type))? {
        let index: u64 = serde_json::from_value(index).map_err(|e| ExecError::CorruptStorage(e.to_string()))?;
        out.push(ctx.load(&index_key(RECORD_PREFIX, index))?.unwrap_or(Value::Null));
    }
    Ok(Value::Array(out))
}

/// `{medicationCode}` -> request id, by the owner.
fn request_prescription(ctx: &mut CallContext<'_, '_>, args: &Value) -> Result<Value, ExecError> {
    require_owner(ctx)?;
    let medication_code: String = arg(args, "medicationCode")?;
    if medication_code.is_empty() {
        return Err(ExecError::BadArguments("medicationCode must be non-empty".into()));
    }
    let request_id: u64 = ctx.load_as(RX_COUNT)?.unwrap_or(0);
    let request = PrescriptionRequest {
        request_id,
        medication_code: medication_code.clone(),
        status: PrescriptionStatus::Open,
        requested_at_height: ctx.block_height(),
        fulfilled_by: None,
    };
    ctx.store(&index_key(RX_PREFIX, request_id), &request)?;
    ctx.store(RX_COUNT, &(request_id + 1))?;
    let patient_id = patient_id(ctx)?;
    ctx.emit(
        "PrescriptionRequested",
        &json!({ "patientId": patient_id, "requestId": request_id, "medicationCode": medication_code }),
    )?;
    Ok(json!(request_id))
}

/// `{requestId, recordHash, pointer}`, by a permissioned provider. Marks the
/// request fulfilled and appends the medication record in the same frame.
fn fulfill(ctx: &mut CallContext<'_, '_>, args: &Value, indexed: bool) -> Result<Value, ExecError> {
    let caller = ctx.caller();
    if !is_provider(ctx, &caller)? {
        return Err(unauthorized(format!("{caller} is not a permissioned provider")));
    }
    let request_id: u64 = arg(args, "requestId")?;
    let key = index_key(RX_PREFIX, request_id);
    let mut request: PrescriptionRequest = ctx
        .load_as(&key)?
        .ok_or_else(|| ExecError::revert(codes::UNKNOWN_REQUEST, request_id))?;
    if request.status == PrescriptionStatus::Fulfilled {
        return Err(ExecError::revert(codes::ALREADY_FULFILLED, request_id));
    }
    request.status = PrescriptionStatus::Fulfilled;
    request.fulfilled_by = Some(caller);
    ctx.store(&key, &request)?;
    let entry = new_entry(ctx, arg(args, "recordHash")?, arg(args, "pointer")?, "MedicationRequest".into())?;
    let entry_index = push_record(ctx, &entry, indexed)?;
    let patient_id = patient_id(ctx)?;
    ctx.emit(
        "PrescriptionFulfilled",
        &json!({ "patientId": patient_id, "requestId": request_id, "entryIndex": entry_index }),
    )?;
    Ok(json!(entry_index))
}

fn fulfill_v1(ctx: &mut CallContext<'_, '_>, args: &Value) -> Result<Value, ExecError> {
    fulfill(ctx, args, false)
}

fn fulfill_v2(ctx: &mut CallContext<'_, '_>, args: &Value) -> Result<Value, ExecError> {
    fulfill(ctx, args, true)
}

fn list_prescriptions(ctx: &mut CallContext<'_, '_>, _: &Value) -> Result<Value, ExecError> {
    require_member(ctx)?;
    let entries = ctx.scan_prefix(RX_PREFIX)?;
    Ok(Value::Array(entries.into_iter().map(|(_, v)| v).collect()))
}

/// `{planRef, extrinsic}`, by the owner. Moves one reference between plans.
fn set_insurance_plan(ctx: &mut CallContext<'_, '_>, args: &Value) -> Result<Value, ExecError> {
    require_owner(ctx)?;
    let plan_ref: Digest = arg(args, "planRef")?;
    let extrinsic: Extrinsic = arg(args, "extrinsic")?;
    let plan_store: Address = ctx.expect_as(PLAN_STORE)?;
    let previous: Option<Digest> = ctx.load_as(INSURANCE_REF)?;
    if previous != Some(plan_ref) {
        ctx.call(plan_store, "retain", &json!({ "planRef": plan_ref }))?;
        if let Some(previous) = previous {
            ctx.call(plan_store, "release", &json!({ "planRef": previous }))?;
        }
        ctx.store(INSURANCE_REF, &plan_ref)?;
    }
    ctx.store(INSURANCE_EXTRINSIC, &extrinsic)?;
    let patient_id = patient_id(ctx)?;
    ctx.emit("InsurancePlanSet", &json!({ "patientId": patient_id, "planRef": plan_ref }))?;
    Ok(Value::Null)
}

/// `{descriptor, extrinsic}`, by the owner. Stores a private copy of the
/// descriptor; kept as the unshared baseline.
fn set_insurance_plan_inline(ctx: &mut CallContext<'_, '_>, args: &Value) -> Result<Value, ExecError> {
    require_owner(ctx)?;
    let descriptor: PlanDescriptor = arg(args, "descriptor")?;
    let descriptor = descriptor.canonicalize()?;
    let extrinsic: Extrinsic = arg(args, "extrinsic")?;
    ctx.store(INSURANCE_INLINE, &descriptor)?;
    ctx.store(INSURANCE_EXTRINSIC, &extrinsic)?;
    let patient_id = patient_id(ctx)?;
    ctx.emit("InsurancePlanSet", &json!({ "patientId": patient_id, "planRef": Value::Null }))?;
    Ok(Value::Null)
}

fn get_insurance(ctx: &mut CallContext<'_, '_>, _: &Value) -> Result<Value, ExecError> {
    require_member(ctx)?;
    let plan_ref = ctx.load(INSURANCE_REF)?;
    let extrinsic = ctx.load(INSURANCE_EXTRINSIC)?;
    let inline = ctx.load(INSURANCE_INLINE)?;
    Ok(json!({ "planRef": plan_ref, "extrinsic": extrinsic, "inlinePlan": inline }))
}
