//! Typed builders for every contract function of the suite.
//!
//! A [`Call`] is the same for transactions and read-only queries; the
//! builders do not depend on which contract version sits behind an address.

use serde_json::{json, Value};

use super::{Extrinsic, PlanDescriptor};
use crate::digest::Digest;
use crate::runtime::{Address, Payload, TypeKey};

#[derive(Debug, Clone, PartialEq)]
pub struct Call {
    pub target: Address,
    pub function: &'static str,
    pub args: Value,
}

impl Call {
    fn new(target: Address, function: &'static str, args: Value) -> Self {
        Call { target, function, args }
    }

    pub fn into_payload(self) -> Payload {
        Payload::CallContract { target: self.target, function: self.function.to_owned(), args: self.args }
    }
}

// registry

pub fn lookup_or_create(registry: Address, patient_id: &str, owner: Option<Address>) -> Call {
    let mut args = json!({ "patientId": patient_id });
    if let Some(owner) = owner {
        args["owner"] = json!(owner);
    }
    Call::new(registry, "lookupOrCreate", args)
}

pub fn registry_get(registry: Address, patient_id: &str) -> Call {
    Call::new(registry, "get", json!({ "patientId": patient_id }))
}

// factory

pub fn create_account(factory: Address, user_type: &str, params: Value) -> Call {
    Call::new(factory, "create", json!({ "userType": user_type, "params": params }))
}

pub fn create_provider(factory: Address, owner: Address, name: &str) -> Call {
    create_account(factory, super::USER_PROVIDER, json!({ "owner": owner, "name": name }))
}

pub fn set_active_version(factory: Address, user_type: &str, key: &TypeKey) -> Call {
    Call::new(
        factory,
        "setActiveVersion",
        json!({ "userType": user_type, "typeId": key.type_id, "version": key.version }),
    )
}

pub fn active_version(factory: Address, user_type: &str) -> Call {
    Call::new(factory, "activeVersion", json!({ "userType": user_type }))
}

pub fn resolve_provider(factory: Address, address: Address) -> Call {
    Call::new(factory, "resolveProvider", json!({ "address": address }))
}

pub fn provider_account(factory: Address, owner: Address) -> Call {
    Call::new(factory, "providerAccount", json!({ "owner": owner }))
}

pub fn is_patient_account(factory: Address, address: Address) -> Call {
    Call::new(factory, "isPatientAccount", json!({ "address": address }))
}

pub fn bind_factory(factory: Address, registry: Address, plan_store: Address) -> Call {
    Call::new(factory, "bind", json!({ "registry": registry, "planStore": plan_store }))
}

// patient account

pub fn account_info(account: Address) -> Call {
    Call::new(account, "info", json!({}))
}

pub fn grant_access(account: Address, provider: Address) -> Call {
    Call::new(account, "grantAccess", json!({ "provider": provider }))
}

pub fn revoke_access(account: Address, provider: Address) -> Call {
    Call::new(account, "revokeAccess", json!({ "provider": provider }))
}

pub fn list_providers(account: Address) -> Call {
    Call::new(account, "listProviders", json!({}))
}

pub fn append_record(account: Address, record_hash: Digest, pointer: &str, resource_type: &str) -> Call {
    Call::new(
        account,
        "appendRecord",
        json!({ "recordHash": record_hash, "pointer": pointer, "resourceType": resource_type }),
    )
}

pub fn list_records(account: Address) -> Call {
    Call::new(account, "listRecords", json!({}))
}

/// Only answered by account versions that keep a per-type index.
pub fn list_records_by_type(account: Address, resource_type: &str) -> Call {
    Call::new(account, "listRecordsByType", json!({ "resourceType": resource_type }))
}

pub fn request_prescription(account: Address, medication_code: &str) -> Call {
    Call::new(account, "requestPrescription", json!({ "medicationCode": medication_code }))
}

pub fn fulfill_prescription(account: Address, request_id: u64, record_hash: Digest, pointer: &str) -> Call {
    Call::new(
        account,
        "fulfillPrescription",
        json!({ "requestId": request_id, "recordHash": record_hash, "pointer": pointer }),
    )
}

pub fn list_prescriptions(account: Address) -> Call {
    Call::new(account, "listPrescriptions", json!({}))
}

pub fn set_insurance_plan(account: Address, plan_ref: Digest, extrinsic: &Extrinsic) -> Call {
    Call::new(account, "setInsurancePlan", json!({ "planRef": plan_ref, "extrinsic": extrinsic }))
}

/// Baseline without sharing: the descriptor is copied into the account.
pub fn set_insurance_plan_inline(account: Address, descriptor: &PlanDescriptor, extrinsic: &Extrinsic) -> Call {
    Call::new(account, "setInsurancePlanInline", json!({ "descriptor": descriptor, "extrinsic": extrinsic }))
}

pub fn get_insurance(account: Address) -> Call {
    Call::new(account, "getInsurance", json!({}))
}

// plan store

pub fn intern_plan(plan_store: Address, descriptor: &PlanDescriptor) -> Call {
    Call::new(plan_store, "intern", json!({ "descriptor": descriptor }))
}

pub fn get_plan(plan_store: Address, plan_ref: Digest) -> Call {
    Call::new(plan_store, "getPlan", json!({ "planRef": plan_ref }))
}

pub fn bind_plan_store(plan_store: Address, factory: Address) -> Call {
    Call::new(plan_store, "bind", json!({ "factory": factory }))
}

// provider account

pub fn provider_profile(provider: Address) -> Call {
    Call::new(provider, "profile", json!({}))
}
