use serde::{Deserialize, Serialize};

use crate::canonical;
use crate::digest::Digest;
use crate::runtime::{Address, ExecError};

use super::codes;

/// Shared intrinsic part of an insurance plan.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct PlanDescriptor {
    pub payer_name: String,
    pub plan_code: String,
    pub coverage_tier: String,
}

impl PlanDescriptor {
    pub fn new(payer_name: impl Into<String>, plan_code: impl Into<String>, coverage_tier: impl Into<String>) -> Self {
        PlanDescriptor { payer_name: payer_name.into(), plan_code: plan_code.into(), coverage_tier: coverage_tier.into() }
    }

    /// Trimmed copy; case is preserved. Fails if any field ends up empty.
    pub fn canonicalize(&self) -> Result<PlanDescriptor, ExecError> {
        let out = PlanDescriptor {
            payer_name: self.payer_name.trim().to_owned(),
            plan_code: self.plan_code.trim().to_owned(),
            coverage_tier: self.coverage_tier.trim().to_owned(),
        };
        for (name, v) in [("payerName", &out.payer_name), ("planCode", &out.plan_code), ("coverageTier", &out.coverage_tier)] {
            if v.is_empty() {
                return Err(ExecError::revert(codes::INVALID_DESCRIPTOR, format!("{name} is empty")));
            }
        }
        Ok(out)
    }

    /// Content address of the canonicalized descriptor.
    pub fn plan_ref(&self) -> Result<Digest, ExecError> {
        let c = self.canonicalize()?;
        canonical::hash(&c).map_err(|e| ExecError::BadArguments(e.to_string()))
    }
}

/// Per-patient part of an insurance assignment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Extrinsic {
    pub member_number: String,
    pub group_code: String,
}

/// Stored plan as returned by `getPlan`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PlanInfo {
    pub plan_ref: Digest,
    pub descriptor: PlanDescriptor,
    pub ref_count: u64,
}

/// On-chain record entry: a digest and a pointer, never the record itself.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RecordEntry {
    pub record_hash: Digest,
    pub pointer: String,
    pub resource_type: String,
    pub added_by: Address,
    pub block_height: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PrescriptionStatus {
    Open,
    Fulfilled,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PrescriptionRequest {
    pub request_id: u64,
    pub medication_code: String,
    pub status: PrescriptionStatus,
    pub requested_at_height: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fulfilled_by: Option<Address>,
}
