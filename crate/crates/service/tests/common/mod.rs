#![allow(dead_code)]

use dash_core::contracts::{Extrinsic, PlanDescriptor};
use dash_core::ledger::ChainConfig;
use dash_core::recordstore::{Resource, ResourceType};
use dash_service::{Identity, OnboardRequest, ProviderRequest, Service, ServiceConfig};

pub const T0: u64 = 1_700_000_000;

pub fn config() -> ServiceConfig {
    ServiceConfig {
        chain: ChainConfig { difficulty: 0, ..ChainConfig::default() },
        fixed_clock: Some(T0),
        ..ServiceConfig::default()
    }
}

pub struct World {
    pub svc: Service,
    pub admin: Identity,
}

impl World {
    pub fn new() -> Self {
        Self::with_config(config())
    }

    pub fn with_config(config: ServiceConfig) -> Self {
        let key = config.admin_key.clone();
        let svc = Service::open(config).unwrap();
        let admin = svc.authenticate(&key).unwrap();
        World { svc, admin }
    }

    pub fn provider(&mut self, name: &str) -> Identity {
        let created = self.svc.create_provider(&self.admin, ProviderRequest { name: name.into() }).unwrap();
        self.svc.authenticate(&created.api_key).unwrap()
    }

    pub fn patient(&mut self, id: &str) -> Identity {
        let done = self.svc.onboard_patient(&self.admin, onboard_request(id, 0)).unwrap();
        self.svc.authenticate(&done.api_key).unwrap()
    }

    pub fn grant(&mut self, patient: &Identity, provider: &str) {
        let pid = patient.patient_id.clone().unwrap();
        let req = dash_service::PermissionRequest { provider: provider.into(), action: dash_service::PermissionAction::Grant };
        self.svc.set_permission(patient, &pid, req).unwrap();
    }
}

pub fn demographics(id: &str) -> Resource {
    Resource::new(ResourceType::Patient, id, id, T0).with("name", format!("Name of {id}")).with("birthDate", "1975-05-05")
}

pub fn plan(i: usize) -> PlanDescriptor {
    PlanDescriptor::new("Acme Health", format!("PPO-{i}"), "gold")
}

pub fn onboard_request(id: &str, plan_ix: usize) -> OnboardRequest {
    OnboardRequest {
        patient_id: id.into(),
        demographics: demographics(id),
        plan: plan(plan_ix),
        extrinsic: Extrinsic { member_number: format!("M-{id}"), group_code: "G-1".into() },
    }
}

pub fn observation(patient: &str, id: &str, value: i64) -> Resource {
    Resource::new(ResourceType::Observation, id, patient, T0).with("code", "8867-4").with("value", value)
}

pub fn medication(patient: &str, id: &str, code: &str) -> Resource {
    Resource::new(ResourceType::MedicationRequest, id, patient, T0).with("medicationCode", code).with("status", "completed")
}
