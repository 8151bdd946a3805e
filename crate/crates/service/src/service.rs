use std::sync::Arc;

use dash_core::clock::{Clock, FixedClock, SystemClock};
use dash_core::contracts::{self, calls, calls::Call, Extrinsic, PlanDescriptor, PrescriptionRequest, RecordEntry, SystemAddresses};
use dash_core::ledger::{Block, Chain, MinedBlock, Receipt, ReceiptStatus, ValidationReport};
use dash_core::pubsub::{Dispatcher, DispatcherConfig, Filter, Notification, Subscription};
use dash_core::recordstore::{
    AuditLog, BackendKind, FileBackend, MemoryBackend, RecordBackend, RecordStore, Resource, ResourceType, StoragePointer,
    Stored,
};
use dash_core::runtime::{Account, Address};
use dash_core::Digest;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::identity::{derive_key, patient_label, provider_label, Identities, Identity, Role};
use crate::{ServiceConfig, ServiceError};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct OnboardRequest {
    pub patient_id: String,
    pub demographics: Resource,
    pub plan: PlanDescriptor,
    pub extrinsic: Extrinsic,
}

/// How onboarding records the insurance plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanMode {
    /// Intern the descriptor once and reference it.
    Flyweight,
    /// Copy the descriptor into every account (baseline for comparison).
    Inline,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Onboarded {
    pub patient_id: String,
    pub account_address: Address,
    pub api_key: String,
    pub address: Address,
    pub plan_ref: Option<Digest>,
    pub record_hash: Digest,
    pub receipts: Vec<Receipt>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ProviderRequest {
    pub name: String,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ProviderCreated {
    pub name: String,
    pub address: Address,
    pub provider_account: Address,
    pub api_key: String,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Written {
    pub entry_index: u64,
    pub record_hash: Digest,
    pub pointer: StoragePointer,
    pub receipt: Receipt,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RecordView {
    pub entry_index: u64,
    #[serde(flatten)]
    pub entry: RecordEntry,
    pub resource: Resource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PermissionAction {
    Grant,
    Revoke,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct PermissionRequest {
    /// Provider name, provider EOA, or ProviderAccount address.
    pub provider: String,
    pub action: PermissionAction,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct PrescriptionBody {
    pub medication_code: String,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Requested {
    pub request_id: u64,
    pub receipt: Receipt,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct MinedSummary {
    pub height: u64,
    pub hash: Digest,
    pub tx_count: usize,
    pub attempts: u64,
}

/// The whole application behind one lock: chain, dispatcher, record store
/// and identities. Every method runs to completion, mining its own
/// transactions, so callers observe their writes immediately.
pub struct Service {
    config: ServiceConfig,
    chain: Chain,
    sys: SystemAddresses,
    dispatcher: Dispatcher,
    records: RecordStore,
    identities: Identities,
}

impl std::fmt::Debug for Service {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Service").field("chain", &self.chain).field("identities", &self.identities.len()).finish()
    }
}

fn internal(e: impl std::fmt::Display) -> ServiceError {
    ServiceError::Internal(e.to_string())
}

fn reverted(reason: impl Into<String>) -> ServiceError {
    ServiceError::Reverted { reason: reason.into() }
}

/// Return value of a successful receipt, or its revert as an error.
fn returned(r: &Receipt) -> Result<Value, ServiceError> {
    match &r.status {
        ReceiptStatus::Success => Ok(r.return_value.clone().unwrap_or(Value::Null)),
        ReceiptStatus::Reverted { reason } => Err(reverted(reason.clone())),
    }
}

fn decode<T: serde::de::DeserializeOwned>(v: Value) -> Result<T, ServiceError> {
    serde_json::from_value(v).map_err(internal)
}

impl Service {
    /// Opens persistent state (or creates it), installing the system
    /// contracts on a fresh chain and catching the dispatcher up to the tip.
    pub fn open(config: ServiceConfig) -> Result<Self, ServiceError> {
        config.validate().map_err(internal)?;
        if let Some(dir) = &config.data_dir {
            std::fs::create_dir_all(dir).map_err(|e| internal(format!("{}: {e}", dir.display())))?;
        }
        let clock: Arc<dyn Clock> = match config.fixed_clock {
            Some(t) => Arc::new(FixedClock::new(t)),
            None => Arc::new(SystemClock),
        };
        let registry = Arc::new(contracts::contract_registry());
        let mut chain = match config.chain_dir() {
            Some(dir) => Chain::open(dir, config.chain.clone(), registry, clock.clone())?,
            None => Chain::new(config.chain.clone(), registry, clock.clone()),
        };
        let sys = if chain.height().is_none() {
            contracts::bootstrap(&mut chain, &config.admin_label).map_err(internal)?
        } else {
            SystemAddresses::locate(&chain, &config.admin_label)
                .ok_or_else(|| internal(format!("chain has no system contracts for {:?}", config.admin_label)))?
        };

        let mut dispatcher = match config.pubsub_dir() {
            Some(dir) => Dispatcher::open(dir, DispatcherConfig::default())?,
            None => Dispatcher::in_memory(DispatcherConfig::default()),
        };
        let from = dispatcher.cursor().map_or(0, |c| c + 1);
        if let Some(tip) = chain.height() {
            for h in from..=tip {
                dispatcher.dispatch_block(h, chain.block_receipts(h))?;
            }
        }

        let backend: Arc<dyn RecordBackend> = match config.record_backend {
            BackendKind::Memory => Arc::new(MemoryBackend::new()),
            BackendKind::File => Arc::new(FileBackend::open(config.records_dir().expect("validated"))?),
        };
        let mut records = RecordStore::new(backend, clock);
        if let Some(path) = config.audit_path() {
            records = records.with_audit_log(Arc::new(AuditLog::open(path).map_err(internal)?));
        }

        let mut identities = match config.identities_path() {
            Some(path) => Identities::open(&path)?,
            None => Identities::in_memory(),
        };
        match identities.by_label(&config.admin_label) {
            Some(admin) if admin.api_key != config.admin_key => {
                return Err(internal("adminKey differs from the key stored for the admin identity"));
            }
            Some(_) => {}
            None => {
                identities.insert(Identity {
                    api_key: config.admin_key.clone(),
                    role: Role::Admin,
                    eoa_label: config.admin_label.clone(),
                    address: sys.admin,
                    patient_id: None,
                    provider_account: None,
                })?;
            }
        }
        Ok(Service { config, chain, sys, dispatcher, records, identities })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn chain(&self) -> &Chain {
        &self.chain
    }

    pub fn system(&self) -> &SystemAddresses {
        &self.sys
    }

    pub fn dispatcher(&self) -> &Dispatcher {
        &self.dispatcher
    }

    pub fn records(&self) -> &RecordStore {
        &self.records
    }

    pub fn identities(&self) -> &Identities {
        &self.identities
    }

    pub fn authenticate(&self, api_key: &str) -> Result<Identity, ServiceError> {
        self.identities.by_key(api_key).cloned().ok_or(ServiceError::Unauthenticated)
    }

    // ---- chain plumbing

    /// Mines everything pending and dispatches the new blocks.
    fn mine_pending(&mut self) -> Result<Vec<MinedBlock>, ServiceError> {
        if self.chain.mempool().is_empty() {
            return Ok(Vec::new());
        }
        let mined = self.chain.mine_all()?;
        for m in &mined {
            self.dispatcher.dispatch_block(m.block.height(), &m.receipts)?;
        }
        Ok(mined)
    }

    /// Submits `calls` from `from` in order, mines, and returns their receipts.
    fn send(&mut self, from: Address, batch: Vec<Call>) -> Result<Vec<Receipt>, ServiceError> {
        let mut ids = Vec::with_capacity(batch.len());
        for call in batch {
            let tx = self.chain.build_transaction(from, call.into_payload(), self.config.gas_limit)?;
            ids.push(self.chain.submit_transaction(tx)?);
        }
        self.mine_pending()?;
        ids.iter().map(|id| Ok(self.chain.receipt(id)?.clone())).collect()
    }

    fn send_one(&mut self, from: Address, call: Call) -> Result<Receipt, ServiceError> {
        Ok(self.send(from, vec![call])?.pop().expect("one call, one receipt"))
    }

    fn query(&mut self, from: Address, call: Call) -> Result<Value, ServiceError> {
        let out = self.chain.query(from, call.target, call.function, &call.args, self.config.gas_limit);
        out.result.map_err(|e| reverted(e.to_string()))
    }

    fn eoa(&mut self, label: &str) -> Result<Address, ServiceError> {
        match self.chain.state().eoa(label) {
            Some(a) => Ok(a),
            None => Ok(self.chain.create_eoa(label)?),
        }
    }

    fn registered_account(&mut self, patient_id: &str) -> Result<Option<Address>, ServiceError> {
        let v = self.query(self.sys.admin, calls::registry_get(self.sys.registry, patient_id))?;
        decode(v)
    }

    /// The caller's view of `patient_id`'s account. Providers go through
    /// `lookupOrCreate` when `create` is set, so unknown ids get an account.
    fn account_for(&mut self, caller: &Identity, patient_id: &str, create: bool) -> Result<Address, ServiceError> {
        if caller.role == Role::Patient && caller.patient_id.as_deref() != Some(patient_id) {
            return Err(ServiceError::Forbidden("patients may only act on their own account".into()));
        }
        if let Some(a) = self.registered_account(patient_id)? {
            return Ok(a);
        }
        if create && caller.role == Role::Provider {
            let r = self.send_one(caller.address, calls::lookup_or_create(self.sys.registry, patient_id, None))?;
            return decode(returned(&r)?);
        }
        Err(ServiceError::NotFound(format!("patient {patient_id:?}")))
    }

    fn require(caller: &Identity, roles: &[Role]) -> Result<(), ServiceError> {
        if roles.contains(&caller.role) {
            Ok(())
        } else {
            Err(ServiceError::Forbidden(format!("{:?} identities cannot do this", caller.role)))
        }
    }

    fn check_subject(resource: &Resource, patient_id: &str, want: Option<ResourceType>) -> Result<(), ServiceError> {
        if resource.subject_patient_id != patient_id {
            return Err(ServiceError::BadRequest(format!(
                "resource subject {:?} is not patient {patient_id:?}",
                resource.subject_patient_id
            )));
        }
        if let Some(want) = want {
            if resource.kind() != Some(want) {
                return Err(ServiceError::BadRequest(format!("expected a {want} resource, got {:?}", resource.resource_type)));
            }
        }
        Ok(())
    }

    /// Undoes a put whose transaction did not commit the entry.
    fn rollback_put(&self, stored: &Stored) {
        if let Err(e) = self.records.discard(stored) {
            tracing::warn!(pointer = %stored.pointer, error = %e, "could not remove orphaned record");
        }
    }

    // ---- admin

    pub fn onboard_patient(&mut self, caller: &Identity, req: OnboardRequest) -> Result<Onboarded, ServiceError> {
        self.onboard_patient_with(caller, req, PlanMode::Flyweight)
    }

    pub fn onboard_patient_with(
        &mut self,
        caller: &Identity,
        req: OnboardRequest,
        mode: PlanMode,
    ) -> Result<Onboarded, ServiceError> {
        Self::require(caller, &[Role::Admin])?;
        let id = req.patient_id.as_str();
        if id.is_empty() {
            return Err(ServiceError::BadRequest("patientId must be non-empty".into()));
        }
        if self.identities.by_patient(id).is_some() {
            return Err(ServiceError::DuplicatePatient(id.to_owned()));
        }
        Self::check_subject(&req.demographics, id, Some(ResourceType::Patient))?;
        let plan_ref = req.plan.plan_ref().map_err(|e| reverted(e.to_string()))?;
        req.demographics.validate()?;

        let label = patient_label(id);
        let eoa = self.eoa(&label)?;
        let stored = self.records.put(&req.demographics)?;
        let mut receipts = Vec::new();
        let mut appended = false;
        let result = (|| {
            let r = self.send_one(self.sys.admin, calls::lookup_or_create(self.sys.registry, id, Some(eoa)))?;
            receipts.push(r.clone());
            let account: Address = decode(returned(&r)?)?;
            let plan_call = match mode {
                PlanMode::Flyweight => {
                    let r = self.send_one(self.sys.admin, calls::intern_plan(self.sys.plan_store, &req.plan))?;
                    receipts.push(r.clone());
                    returned(&r)?;
                    calls::set_insurance_plan(account, plan_ref, &req.extrinsic)
                }
                PlanMode::Inline => calls::set_insurance_plan_inline(account, &req.plan, &req.extrinsic),
            };
            let pointer = stored.pointer.to_string();
            let append = calls::append_record(account, stored.record_hash, &pointer, ResourceType::Patient.as_str());
            let rs = self.send(eoa, vec![plan_call, append])?;
            appended = rs[1].status.is_success();
            receipts.extend(rs.iter().cloned());
            for r in &rs {
                returned(r)?;
            }
            Ok(account)
        })();
        let account = match result {
            Ok(a) => a,
            Err(e) => {
                if !appended {
                    self.rollback_put(&stored);
                }
                return Err(e);
            }
        };
        let api_key = derive_key(&self.config.admin_key, &label);
        self.identities.insert(Identity {
            api_key: api_key.clone(),
            role: Role::Patient,
            eoa_label: label,
            address: eoa,
            patient_id: Some(id.to_owned()),
            provider_account: None,
        })?;
        Ok(Onboarded {
            patient_id: id.to_owned(),
            account_address: account,
            api_key,
            address: eoa,
            plan_ref: (mode == PlanMode::Flyweight).then_some(plan_ref),
            record_hash: stored.record_hash,
            receipts,
        })
    }

    pub fn create_provider(&mut self, caller: &Identity, req: ProviderRequest) -> Result<ProviderCreated, ServiceError> {
        Self::require(caller, &[Role::Admin])?;
        if req.name.trim().is_empty() {
            return Err(ServiceError::BadRequest("name must be non-empty".into()));
        }
        let label = provider_label(&req.name);
        if self.identities.by_label(&label).is_some() {
            return Err(ServiceError::DuplicateProvider(req.name));
        }
        let eoa = self.eoa(&label)?;
        let r = self.send_one(self.sys.admin, calls::create_provider(self.sys.factory, eoa, &req.name))?;
        let provider_account: Address = decode(returned(&r)?)?;
        if !self.dispatcher.is_subscriber(&label) {
            self.dispatcher.register_subscriber(&label)?;
        }
        let api_key = derive_key(&self.config.admin_key, &label);
        self.identities.insert(Identity {
            api_key: api_key.clone(),
            role: Role::Provider,
            eoa_label: label,
            address: eoa,
            patient_id: None,
            provider_account: Some(provider_account),
        })?;
        Ok(ProviderCreated { name: req.name, address: eoa, provider_account, api_key })
    }

    /// Mines up to `max_txs` pending transactions into one block.
    pub fn mine(&mut self, caller: &Identity, max_txs: Option<usize>) -> Result<MinedSummary, ServiceError> {
        Self::require(caller, &[Role::Admin])?;
        let m = self.chain.mine_block(max_txs.unwrap_or(self.config.chain.max_block_txs))?;
        self.dispatcher.dispatch_block(m.block.height(), &m.receipts)?;
        Ok(MinedSummary { height: m.block.height(), hash: m.block.hash(), tx_count: m.receipts.len(), attempts: m.attempts })
    }

    // ---- records

    /// Write path: locate (or create) the account, store the resource off
    /// chain, then append its digest and pointer on chain.
    pub fn write_record(&mut self, caller: &Identity, patient_id: &str, resource: Resource) -> Result<Written, ServiceError> {
        Self::require(caller, &[Role::Provider, Role::Patient])?;
        Self::check_subject(&resource, patient_id, None)?;
        resource.validate()?;
        let account = self.account_for(caller, patient_id, true)?;
        let stored = self.records.put(&resource)?;
        let call =
            calls::append_record(account, stored.record_hash, &stored.pointer.to_string(), &resource.resource_type);
        let receipt = match self.send_one(caller.address, call) {
            Ok(r) if r.status.is_success() => r,
            Ok(r) => {
                self.rollback_put(&stored);
                return Err(returned(&r).unwrap_err());
            }
            Err(e) => {
                self.rollback_put(&stored);
                return Err(e);
            }
        };
        let entry_index = decode(returned(&receipt)?)?;
        Ok(Written { entry_index, record_hash: stored.record_hash, pointer: stored.pointer, receipt })
    }

    /// Read path: locate (or create) the account, list entries under the
    /// ACL, and resolve each through a digest-checking proxy.
    pub fn read_records(&mut self, caller: &Identity, patient_id: &str) -> Result<Vec<RecordView>, ServiceError> {
        Self::require(caller, &[Role::Provider, Role::Patient])?;
        let account = self.account_for(caller, patient_id, true)?;
        let entries: Vec<RecordEntry> = decode(self.query(caller.address, calls::list_records(account))?)?;
        let mut out = Vec::with_capacity(entries.len());
        for (i, entry) in entries.into_iter().enumerate() {
            let pointer: StoragePointer = entry.pointer.parse()?;
            let mut proxy = self.records.make_proxy(pointer, entry.record_hash);
            let resource = proxy.resolve(&caller.eoa_label)?.clone();
            out.push(RecordView { entry_index: i as u64, entry, resource });
        }
        Ok(out)
    }

    pub fn set_permission(
        &mut self,
        caller: &Identity,
        patient_id: &str,
        req: PermissionRequest,
    ) -> Result<Receipt, ServiceError> {
        let account = self.account_for(caller, patient_id, false)?;
        let provider = if req.provider.starts_with("0x") {
            req.provider.parse().map_err(|e| ServiceError::BadRequest(format!("provider: {e}")))?
        } else {
            self.identities
                .by_label(&provider_label(&req.provider))
                .map(|p| p.address)
                .ok_or_else(|| ServiceError::NotFound(format!("provider {:?}", req.provider)))?
        };
        let call = match req.action {
            PermissionAction::Grant => calls::grant_access(account, provider),
            PermissionAction::Revoke => calls::revoke_access(account, provider),
        };
        let r = self.send_one(caller.address, call)?;
        returned(&r)?;
        Ok(r)
    }

    pub fn list_providers(&mut self, caller: &Identity, patient_id: &str) -> Result<Vec<Address>, ServiceError> {
        let account = self.account_for(caller, patient_id, false)?;
        decode(self.query(caller.address, calls::list_providers(account))?)
    }

    // ---- prescriptions

    pub fn request_prescription(
        &mut self,
        caller: &Identity,
        patient_id: &str,
        body: PrescriptionBody,
    ) -> Result<Requested, ServiceError> {
        let account = self.account_for(caller, patient_id, false)?;
        let r = self.send_one(caller.address, calls::request_prescription(account, &body.medication_code))?;
        let request_id = decode(returned(&r)?)?;
        Ok(Requested { request_id, receipt: r })
    }

    pub fn list_prescriptions(&mut self, caller: &Identity, patient_id: &str) -> Result<Vec<PrescriptionRequest>, ServiceError> {
        let account = self.account_for(caller, patient_id, false)?;
        decode(self.query(caller.address, calls::list_prescriptions(account))?)
    }

    /// Stores the dispensed MedicationRequest and fulfills the request in one
    /// transaction.
    pub fn fulfill_prescription(
        &mut self,
        caller: &Identity,
        patient_id: &str,
        request_id: u64,
        resource: Resource,
    ) -> Result<Written, ServiceError> {
        Self::require(caller, &[Role::Provider, Role::Patient])?;
        Self::check_subject(&resource, patient_id, Some(ResourceType::MedicationRequest))?;
        resource.validate()?;
        let account = self.account_for(caller, patient_id, false)?;
        let stored = self.records.put(&resource)?;
        let call = calls::fulfill_prescription(account, request_id, stored.record_hash, &stored.pointer.to_string());
        let receipt = match self.send_one(caller.address, call) {
            Ok(r) if r.status.is_success() => r,
            Ok(r) => {
                self.rollback_put(&stored);
                return Err(returned(&r).unwrap_err());
            }
            Err(e) => {
                self.rollback_put(&stored);
                return Err(e);
            }
        };
        let entry_index = decode(returned(&receipt)?)?;
        Ok(Written { entry_index, record_hash: stored.record_hash, pointer: stored.pointer, receipt })
    }

    // ---- notifications

    fn next_height(&self) -> u64 {
        self.chain.height().map_or(0, |h| h + 1)
    }

    pub fn subscribe(&mut self, caller: &Identity, filter: Filter) -> Result<Subscription, ServiceError> {
        Self::require(caller, &[Role::Provider])?;
        let next = self.next_height();
        let id = self.dispatcher.subscribe(&caller.eoa_label, filter, next)?;
        Ok(self.dispatcher.subscription(&id).expect("just created").clone())
    }

    pub fn unsubscribe(&mut self, caller: &Identity, subscription_id: &str) -> Result<Subscription, ServiceError> {
        Self::require(caller, &[Role::Provider])?;
        match self.dispatcher.subscription(subscription_id) {
            Some(s) if s.subscriber_id == caller.eoa_label => {}
            _ => return Err(ServiceError::NotFound(format!("subscription {subscription_id:?}"))),
        }
        let next = self.next_height();
        self.dispatcher.unsubscribe(subscription_id, next)?;
        Ok(self.dispatcher.subscription(subscription_id).expect("still listed").clone())
    }

    pub fn subscriptions(&self, caller: &Identity) -> Result<Vec<Subscription>, ServiceError> {
        Self::require(caller, &[Role::Provider])?;
        Ok(self.dispatcher.subscriptions_of(&caller.eoa_label).cloned().collect())
    }

    pub fn notifications(&self, caller: &Identity, after_seq: i64) -> Result<Vec<Notification>, ServiceError> {
        Self::require(caller, &[Role::Provider])?;
        Ok(self.dispatcher.poll(&caller.eoa_label, after_seq)?.to_vec())
    }

    // ---- chain inspection

    pub fn block(&self, height: u64) -> Result<Block, ServiceError> {
        self.chain.block(height).cloned().ok_or_else(|| ServiceError::NotFound(format!("block {height}")))
    }

    pub fn validate(&self) -> ValidationReport {
        self.chain.validate()
    }

    pub fn receipt(&self, tx_id: &Digest) -> Result<Receipt, ServiceError> {
        self.chain.receipt(tx_id).cloned().map_err(|_| ServiceError::NotFound(format!("receipt {tx_id}")))
    }

    pub fn account(&self, address: &Address) -> Result<Account, ServiceError> {
        self.chain.state().get(address).cloned().ok_or_else(|| ServiceError::NotFound(format!("account {address}")))
    }
}
