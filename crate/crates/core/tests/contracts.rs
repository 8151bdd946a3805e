mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::{outcome_code, query_code, returned_address, Dash};
use dash_core::contracts::{
    self, calls, codes, Extrinsic, PlanDescriptor, PlanInfo, PrescriptionRequest, PrescriptionStatus, RecordEntry,
    USER_PATIENT,
};
use dash_core::digest::Digest;
use dash_core::ledger::ReceiptStatus;
use dash_core::runtime::{Address, TypeKey};
use proptest::prelude::*;
use serde_json::{json, Value};

fn records(d: &mut Dash, reader: Address, account: Address) -> Vec<RecordEntry> {
    serde_json::from_value(d.query(reader, calls::list_records(account)).unwrap()).unwrap()
}

fn h(n: u64) -> Digest {
    Digest::of(&n.to_be_bytes())
}

fn extrinsic(n: u64) -> Extrinsic {
    Extrinsic { member_number: format!("M{n}"), group_code: "G1".into() }
}

fn plan(d: &mut Dash, descriptor: &PlanDescriptor) -> Digest {
    let r = d.send(d.sys.admin, calls::intern_plan(d.sys.plan_store, descriptor));
    serde_json::from_value(r.return_value.unwrap()).unwrap()
}

fn plan_info(d: &mut Dash, plan_ref: Digest) -> Option<PlanInfo> {
    let v = d.query(d.sys.admin, calls::get_plan(d.sys.plan_store, plan_ref)).unwrap();
    serde_json::from_value(v).unwrap()
}

#[test]
fn genesis_installs_system_contracts_in_block_zero() {
    let d = Dash::new();
    assert_eq!(d.chain.height(), Some(0));
    assert_eq!(contracts::SystemAddresses::locate(&d.chain, "admin"), Some(d.sys));
    assert!(d.chain.validate().valid);
}

#[test]
fn lookup_or_create_is_idempotent() {
    let mut d = Dash::new();
    let (doc, _) = d.provider("dr-a");
    let first = d.send(doc, calls::lookup_or_create(d.sys.registry, "p-001", None));
    let a = returned_address(&first);
    let created: Vec<_> = first.events.iter().filter(|e| e.topic == "PatientAccountCreated").collect();
    assert_eq!(created.len(), 1);
    assert_eq!(created[0].payload, json!({ "patientId": "p-001", "address": a }));

    let again = d.send(doc, calls::lookup_or_create(d.sys.registry, "p-001", None));
    assert_eq!(returned_address(&again), a);
    assert!(again.events.is_empty());
    assert!(again.created.is_empty());
}

#[test]
fn interleaved_lookups_create_one_account_per_id() {
    let mut d = Dash::new();
    let (doc, _) = d.provider("dr-a");
    let mut first_seen: BTreeMap<String, Address> = BTreeMap::new();
    let mut creations = 0;
    // 1000 calls over 100 ids, in a scrambled but deterministic order
    let ids: Vec<String> = (0..1000u64).map(|i| format!("p-{:03}", (i * 37 + i / 100) % 100)).collect();
    for batch in ids.chunks(100) {
        for id in batch {
            d.submit(doc, calls::lookup_or_create(d.sys.registry, id, None));
        }
        for (id, r) in batch.iter().zip(d.mine()) {
            let a = returned_address(&r);
            creations += r.created.iter().filter(|c| is_patient_account(&d, c)).count();
            assert_eq!(*first_seen.entry(id.clone()).or_insert(a), a);
        }
    }
    assert_eq!(first_seen.len(), 100);
    assert_eq!(creations, 100);
}

fn is_patient_account(d: &Dash, a: &Address) -> bool {
    d.chain.state().get(a).and_then(|acc| acc.contract_type.as_ref()).is_some_and(|k| k.type_id == contracts::PATIENT_ACCOUNT)
}

#[test]
fn lookup_rejects_empty_ids_and_strangers() {
    let mut d = Dash::new();
    let (doc, _) = d.provider("dr-a");
    let r = d.send(doc, calls::lookup_or_create(d.sys.registry, "", None));
    assert_eq!(outcome_code(&r), codes::EMPTY_PATIENT_ID);
    let stranger = d.eoa("stranger");
    let r = d.send(stranger, calls::lookup_or_create(d.sys.registry, "p-1", None));
    assert_eq!(outcome_code(&r), codes::UNAUTHORIZED);
    // providers cannot claim ownership
    let r = d.send(doc, calls::lookup_or_create(d.sys.registry, "p-1", Some(doc)));
    assert_eq!(outcome_code(&r), codes::UNAUTHORIZED);
}

#[test]
fn registry_get_is_a_cheap_pure_lookup() {
    let mut d = Dash::new();
    let (doc, _) = d.provider("dr-a");
    assert_eq!(d.query(doc, calls::registry_get(d.sys.registry, "p-001")).unwrap(), Value::Null);

    let get_miss = d.send(doc, calls::registry_get(d.sys.registry, "p-001"));
    let create = d.send(doc, calls::lookup_or_create(d.sys.registry, "p-001", None));
    assert!(get_miss.gas_used < create.gas_used);
    assert!(get_miss.events.is_empty() && get_miss.created.is_empty());
    let a = returned_address(&create);
    assert_eq!(d.query(doc, calls::registry_get(d.sys.registry, "p-001")).unwrap(), json!(a));
}

#[test]
fn auto_created_account_is_empty_and_open_to_its_creator() {
    let mut d = Dash::new();
    let (doc, _) = d.provider("dr-a");
    let (other, _) = d.provider("dr-b");
    let a = returned_address(&d.send(doc, calls::lookup_or_create(d.sys.registry, "p-9", None)));
    assert!(records(&mut d, doc, a).is_empty());
    assert_eq!(query_code(&d.query(other, calls::list_records(a))), codes::UNAUTHORIZED);

    // onboarding later binds the owner without creating a second account
    let owner = d.eoa("p-9-owner");
    let r = d.send(d.sys.admin, calls::lookup_or_create(d.sys.registry, "p-9", Some(owner)));
    assert_eq!(returned_address(&r), a);
    let info = d.query(owner, calls::account_info(a)).unwrap();
    assert_eq!(info["owner"], json!(owner));
}

#[test]
fn grants_gate_writes() {
    let mut d = Dash::new();
    let (doc, doc_account) = d.provider("dr-a");
    let (owner, account) = d.patient("p-001");

    let r = d.send(doc, calls::append_record(account, h(1), "memory:aa", "Observation"));
    assert_eq!(outcome_code(&r), codes::UNAUTHORIZED);

    // grant by provider account address, then again by EOA: one ACL entry
    assert_eq!(outcome_code(&d.send(owner, calls::grant_access(account, doc_account))), "ok");
    let again = d.send(owner, calls::grant_access(account, doc));
    assert_eq!(outcome_code(&again), "ok");
    assert!(again.events.is_empty());
    let providers = d.query(owner, calls::list_providers(account)).unwrap();
    assert_eq!(providers, json!([doc]));

    let r = d.send(doc, calls::append_record(account, h(1), "memory:aa", "Observation"));
    assert_eq!(r.return_value, Some(json!(0)));
    let r = d.send(doc, calls::append_record(account, h(2), "memory:bb", "Observation"));
    assert_eq!(r.return_value, Some(json!(1)));

    assert_eq!(outcome_code(&d.send(owner, calls::revoke_access(account, doc))), "ok");
    let r = d.send(doc, calls::append_record(account, h(3), "memory:cc", "Observation"));
    assert_eq!(outcome_code(&r), codes::UNAUTHORIZED);
    // history written before the revoke stays
    let entries = records(&mut d, owner, account);
    assert_eq!(entries.len(), 2);
    assert!(entries.iter().all(|e| e.added_by == doc));
}

#[test]
fn only_the_owner_manages_access() {
    let mut d = Dash::new();
    let (doc, _) = d.provider("dr-a");
    let (owner, account) = d.patient("p-001");
    let r = d.send(doc, calls::grant_access(account, doc));
    assert_eq!(outcome_code(&r), codes::UNAUTHORIZED);
    let stranger = d.eoa("stranger");
    let r = d.send(owner, calls::grant_access(account, stranger));
    assert_eq!(outcome_code(&r), codes::NOT_A_PROVIDER);
    // revoking someone never granted is silent
    let r = d.send(owner, calls::revoke_access(account, doc));
    assert_eq!(outcome_code(&r), "ok");
    assert!(r.events.is_empty());
}

#[test]
fn fifty_mixed_appends_keep_block_order() {
    let mut d = Dash::new();
    let (doc_a, _) = d.provider("dr-a");
    let (doc_b, _) = d.provider("dr-b");
    let (owner, account) = d.patient("p-001");
    d.send(owner, calls::grant_access(account, doc_a));
    d.send(owner, calls::grant_access(account, doc_b));
    let writers = [owner, doc_a, doc_b];
    for i in 0..50u64 {
        d.submit(writers[(i % 3) as usize], calls::append_record(account, h(i), &format!("memory:{i}"), "Observation"));
        if i % 7 == 6 {
            d.mine();
        }
    }
    d.mine();
    let entries = records(&mut d, owner, account);
    assert_eq!(entries.len(), 50);
    // replay: committed receipts in block order name the same indices
    let mut expected = Vec::new();
    for height in 0..=d.chain.height().unwrap() {
        for r in d.chain.block_receipts(height) {
            for e in r.events.iter().filter(|e| e.topic == "RecordAppended") {
                expected.push(e.payload["entryIndex"].as_u64().unwrap());
            }
        }
    }
    assert_eq!(expected, (0..50).collect::<Vec<_>>());
    for (i, e) in entries.iter().enumerate() {
        assert_eq!(e.record_hash, h(i as u64));
        assert_eq!(e.added_by, writers[i % 3]);
    }
}

#[test]
fn reads_follow_the_acl() {
    let mut d = Dash::new();
    let (doc, _) = d.provider("dr-a");
    let (owner, account) = d.patient("p-001");
    assert!(records(&mut d, owner, account).is_empty());
    assert_eq!(query_code(&d.query(doc, calls::list_records(account))), codes::UNAUTHORIZED);
    for i in 0..3 {
        d.send(owner, calls::append_record(account, h(i), "memory:x", "Observation"));
    }
    let hashes: Vec<Digest> = records(&mut d, owner, account).into_iter().map(|e| e.record_hash).collect();
    assert_eq!(hashes, vec![h(0), h(1), h(2)]);
}

#[test]
fn prescription_lifecycle() {
    let mut d = Dash::new();
    let (doc, _) = d.provider("dr-a");
    let (watcher, _) = d.provider("dr-watcher");
    let (owner, account) = d.patient("p-001");
    d.send(owner, calls::grant_access(account, doc));

    let r = d.send(doc, calls::request_prescription(account, "RX-1"));
    assert_eq!(outcome_code(&r), codes::UNAUTHORIZED);

    let r = d.send(owner, calls::request_prescription(account, "RX-1"));
    assert_eq!(r.return_value, Some(json!(0)));
    let topics: Vec<&str> = r.events.iter().map(|e| e.topic.as_str()).collect();
    assert_eq!(topics, vec!["PrescriptionRequested"]);
    assert_eq!(r.events[0].payload, json!({ "patientId": "p-001", "requestId": 0, "medicationCode": "RX-1" }));

    let r = d.send(watcher, calls::fulfill_prescription(account, 0, h(7), "memory:rx"));
    assert_eq!(outcome_code(&r), codes::UNAUTHORIZED);
    let r = d.send(doc, calls::fulfill_prescription(account, 5, h(7), "memory:rx"));
    assert_eq!(outcome_code(&r), codes::UNKNOWN_REQUEST);

    let r = d.send(doc, calls::fulfill_prescription(account, 0, h(7), "memory:rx"));
    assert_eq!(outcome_code(&r), "ok");
    assert!(r.events.iter().any(|e| e.topic == "PrescriptionFulfilled"));
    let entries = records(&mut d, owner, account);
    assert_eq!(entries.len(), 1);
    assert_eq!(entries[0].resource_type, "MedicationRequest");

    let before = d.chain.state().state_digest();
    let r = d.send(doc, calls::fulfill_prescription(account, 0, h(8), "memory:rx2"));
    assert_eq!(outcome_code(&r), codes::ALREADY_FULFILLED);
    // only the sender's nonce, balance and the miner's credit moved
    let acc = d.chain.state().get(&account).unwrap().clone();
    assert_eq!(records(&mut d, owner, account).len(), 1);
    assert_ne!(before, d.chain.state().state_digest());
    let rx: Vec<PrescriptionRequest> =
        serde_json::from_value(d.query(owner, calls::list_prescriptions(account)).unwrap()).unwrap();
    assert_eq!(rx.len(), 1);
    assert_eq!(rx[0].status, PrescriptionStatus::Fulfilled);
    assert_eq!(rx[0].fulfilled_by, Some(doc));
    assert_eq!(acc.storage.len(), d.chain.state().get(&account).unwrap().storage.len());
}

#[test]
fn factory_creates_by_active_version() {
    let mut d = Dash::new();
    let (_, p1) = d.provider("dr-a");
    let (_, p2) = d.provider("dr-b");
    assert_ne!(p1, p2);
    let profile = d.query(d.sys.admin, calls::provider_profile(p1)).unwrap();
    assert_eq!(profile["name"], json!("dr-a"));

    let billing_owner = d.eoa("billing");
    let params = json!({ "owner": billing_owner, "name": "Billing Dept" });
    let r = d.send(d.sys.admin, calls::create_account(d.sys.factory, "Billing", params.clone()));
    assert_eq!(outcome_code(&r), codes::UNKNOWN_USER_TYPE);

    let key = TypeKey::new(contracts::BILLING_ACCOUNT, 1);
    let r = d.send(d.sys.admin, calls::set_active_version(d.sys.factory, "Billing", &key));
    assert_eq!(r.events[0].topic, "FactoryVersionChanged");
    let r = d.send(d.sys.admin, calls::create_account(d.sys.factory, "Billing", params));
    returned_address(&r);
}

#[test]
fn factory_admin_rules() {
    let mut d = Dash::new();
    let (doc, _) = d.provider("dr-a");
    let v2 = TypeKey::new(contracts::PATIENT_ACCOUNT, 2);
    let r = d.send(doc, calls::set_active_version(d.sys.factory, USER_PATIENT, &v2));
    assert_eq!(outcome_code(&r), codes::UNAUTHORIZED);
    let v9 = TypeKey::new(contracts::PATIENT_ACCOUNT, 9);
    let r = d.send(d.sys.admin, calls::set_active_version(d.sys.factory, USER_PATIENT, &v9));
    assert_eq!(outcome_code(&r), codes::UNKNOWN_CONTRACT_TYPE);
    // patient accounts only come through the registry
    let r = d.send(d.sys.admin, calls::create_account(d.sys.factory, USER_PATIENT, json!({ "patientId": "x" })));
    assert_eq!(outcome_code(&r), codes::UNAUTHORIZED);
    let r = d.send(doc, calls::create_provider(d.sys.factory, doc, "again"));
    assert_eq!(outcome_code(&r), codes::UNAUTHORIZED);
    let r = d.send(d.sys.admin, calls::create_provider(d.sys.factory, doc, "again"));
    assert_eq!(outcome_code(&r), codes::DUPLICATE_PROVIDER);
}

#[test]
fn version_switch_leaves_existing_accounts_working() {
    let mut d = Dash::new();
    let (doc, _) = d.provider("dr-a");
    let (owner1, old) = d.patient("p-old");
    d.send(owner1, calls::grant_access(old, doc));
    d.send(doc, calls::append_record(old, h(1), "memory:1", "Observation"));

    let v2 = TypeKey::new(contracts::PATIENT_ACCOUNT, 2);
    d.send(d.sys.admin, calls::set_active_version(d.sys.factory, USER_PATIENT, &v2));
    let active = d.query(doc, calls::active_version(d.sys.factory, USER_PATIENT)).unwrap();
    assert_eq!(active, json!({ "typeId": contracts::PATIENT_ACCOUNT, "version": 2 }));

    let (owner2, new) = d.patient("p-new");
    let type_of = |d: &Dash, a: &Address| d.chain.state().get(a).unwrap().contract_type.clone().unwrap();
    assert_eq!(type_of(&d, &old).version, 1);
    assert_eq!(type_of(&d, &new).version, 2);

    d.send(owner2, calls::grant_access(new, doc));
    for account in [old, new] {
        let r = d.send(doc, calls::append_record(account, h(2), "memory:2", "Coverage"));
        assert_eq!(outcome_code(&r), "ok");
    }
    assert_eq!(records(&mut d, doc, old).len(), 2);
    assert_eq!(records(&mut d, doc, new).len(), 1);

    let by_type = d.query(doc, calls::list_records_by_type(new, "Coverage")).unwrap();
    assert_eq!(by_type.as_array().unwrap().len(), 1);
    assert_eq!(query_code(&d.query(doc, calls::list_records_by_type(old, "Coverage"))), "UnknownFunction");
}

#[test]
fn interning_stores_each_descriptor_once() {
    let mut d = Dash::new();
    let gold = PlanDescriptor::new("Acme", "PPO-1", "gold");
    for _ in 0..100 {
        d.submit(d.sys.admin, calls::intern_plan(d.sys.plan_store, &gold));
    }
    let refs: BTreeSet<String> = d.mine().into_iter().map(|r| r.return_value.unwrap().to_string()).collect();
    assert_eq!(refs.len(), 1);
    let store = d.chain.state().get(&d.sys.plan_store).unwrap();
    assert_eq!(store.storage_keys_with_prefix(contracts::PLAN_PREFIX).count(), 1);

    let silver = PlanDescriptor::new("Acme", "PPO-1", "silver");
    assert_ne!(plan(&mut d, &gold), plan(&mut d, &silver));
    let r = d.send(d.sys.admin, calls::intern_plan(d.sys.plan_store, &PlanDescriptor::new("", "x", "y")));
    assert_eq!(outcome_code(&r), codes::INVALID_DESCRIPTOR);
}

#[test]
fn plan_reference_counts_follow_assignments() {
    let mut d = Dash::new();
    let p = plan(&mut d, &PlanDescriptor::new("Acme", "PPO-1", "gold"));
    let q = plan(&mut d, &PlanDescriptor::new("Acme", "HMO-2", "bronze"));
    let (o1, a1) = d.patient("p-1");
    let (o2, a2) = d.patient("p-2");

    let r = d.send(o1, calls::set_insurance_plan(a1, Digest::of(b"nope"), &extrinsic(1)));
    assert_eq!(outcome_code(&r), codes::UNKNOWN_PLAN);

    d.send(o1, calls::set_insurance_plan(a1, p, &extrinsic(1)));
    d.send(o2, calls::set_insurance_plan(a2, p, &extrinsic(2)));
    assert_eq!(plan_info(&mut d, p).unwrap().ref_count, 2);

    d.send(o1, calls::set_insurance_plan(a1, q, &extrinsic(1)));
    assert_eq!(plan_info(&mut d, p).unwrap().ref_count, 1);
    assert_eq!(plan_info(&mut d, q).unwrap().ref_count, 1);
    // re-setting the same plan keeps the count
    d.send(o1, calls::set_insurance_plan(a1, q, &extrinsic(3)));
    assert_eq!(plan_info(&mut d, q).unwrap().ref_count, 1);

    // only patient accounts move counts
    let r = d.send(o1, calls::Call { target: d.sys.plan_store, function: "retain", args: json!({ "planRef": p }) });
    assert_eq!(outcome_code(&r), codes::UNAUTHORIZED);
    let r = d.send(o2, calls::set_insurance_plan(a1, p, &extrinsic(2)));
    assert_eq!(outcome_code(&r), codes::UNAUTHORIZED);
}

#[test]
fn records_only_ever_grow() {
    let mut d = Dash::new();
    let (doc, _) = d.provider("dr-a");
    let (owner, account) = d.patient("p-1");
    d.send(owner, calls::grant_access(account, doc));
    let mut history: Vec<Vec<RecordEntry>> = Vec::new();
    for i in 0..12u64 {
        let writer = if i % 2 == 0 { doc } else { owner };
        d.send(writer, calls::append_record(account, h(i), "memory:z", "Observation"));
        if i == 5 {
            d.send(owner, calls::revoke_access(account, doc));
        }
        history.push(records(&mut d, owner, account));
    }
    for pair in history.windows(2) {
        assert!(pair[1].starts_with(&pair[0]));
    }
}

#[derive(Debug, Clone)]
enum Op {
    Grant(usize),
    Revoke(usize),
    Write(usize),
    Request,
    Fulfill(usize),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        (0..4usize).prop_map(Op::Grant),
        (0..4usize).prop_map(Op::Revoke),
        (0..5usize).prop_map(Op::Write),
        Just(Op::Request),
        (0..4usize).prop_map(Op::Fulfill),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    /// Write decisions match a plain set model of the ACL.
    #[test]
    fn acl_decisions_match_reference_model(ops in prop::collection::vec(op(), 1..40)) {
        let mut d = Dash::new();
        let docs: Vec<Address> = (0..4).map(|i| d.provider(&format!("dr-{i}")).0).collect();
        let (owner, account) = d.patient("p-1");
        let mut acl: BTreeSet<usize> = BTreeSet::new();
        let mut open: Vec<u64> = Vec::new();
        let mut next_request = 0u64;
        for op in ops {
            let (sender, call, expect_ok) = match op {
                Op::Grant(i) => { acl.insert(i); (owner, calls::grant_access(account, docs[i]), true) }
                Op::Revoke(i) => { acl.remove(&i); (owner, calls::revoke_access(account, docs[i]), true) }
                Op::Write(i) => {
                    let (sender, ok) = if i == 4 { (owner, true) } else { (docs[i], acl.contains(&i)) };
                    (sender, calls::append_record(account, h(1), "memory:m", "Observation"), ok)
                }
                Op::Request => {
                    open.push(next_request);
                    next_request += 1;
                    (owner, calls::request_prescription(account, "RX"), true)
                }
                Op::Fulfill(i) => {
                    let allowed = acl.contains(&i);
                    let target = open.first().copied().unwrap_or(next_request);
                    let ok = allowed && !open.is_empty();
                    if ok { open.remove(0); }
                    (docs[i], calls::fulfill_prescription(account, target, h(2), "memory:f"), ok)
                }
            };
            let r = d.send(sender, call);
            prop_assert_eq!(r.status == ReceiptStatus::Success, expect_ok, "{:?}", r.status);
        }
    }
}
