//! HTTP service over the health-record ledger: identities, the onboarding,
//! write, read and prescription workflows, notification feeds, scenario
//! replay, and the two benchmark harnesses.

pub mod bench;
mod config;
mod error;
pub mod http;
pub mod identity;
pub mod scenario;
mod service;

pub use config::{ConfigError, ServiceConfig, ENV_DATA_DIR, ENV_PORT};
pub use error::ServiceError;
pub use identity::{Identity, Role};
pub use service::{
    MinedSummary, OnboardRequest, Onboarded, PermissionAction, PermissionRequest, PlanMode, PrescriptionBody,
    ProviderCreated, ProviderRequest, RecordView, Requested, Service, Written,
};
