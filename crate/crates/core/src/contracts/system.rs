//! Genesis installation of the singleton system contracts.

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{calls, ACCOUNT_FACTORY, PATIENT_ACCOUNT, PATIENT_REGISTRY, PLAN_STORE, PROVIDER_ACCOUNT};
use crate::ledger::{Chain, LedgerError, ReceiptStatus};
use crate::runtime::{Address, Payload, TypeKey};

/// Gas limit of each genesis transaction.
pub const GENESIS_GAS: u64 = 10_000_000;

/// Addresses of the system contracts. They follow from the admin address
/// alone, because genesis is always the admin's first five transactions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SystemAddresses {
    pub admin: Address,
    pub plan_store: Address,
    pub factory: Address,
    pub registry: Address,
}

impl SystemAddresses {
    pub fn derive(admin: Address) -> Self {
        SystemAddresses {
            admin,
            plan_store: Address::for_contract(&admin, 0),
            factory: Address::for_contract(&admin, 1),
            registry: Address::for_contract(&admin, 2),
        }
    }

    /// Addresses for `admin_label` when the chain already holds them.
    pub fn locate(chain: &Chain, admin_label: &str) -> Option<Self> {
        let admin = chain.state().eoa(admin_label)?;
        let sys = Self::derive(admin);
        let installed = [
            (sys.plan_store, PLAN_STORE),
            (sys.factory, ACCOUNT_FACTORY),
            (sys.registry, PATIENT_REGISTRY),
        ]
        .iter()
        .all(|(a, type_id)| {
            chain
                .state()
                .get(a)
                .and_then(|acc| acc.contract_type.as_ref())
                .is_some_and(|k| k.type_id == *type_id)
        });
        installed.then_some(sys)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BootstrapError {
    #[error("genesis needs an empty chain with an empty mempool")]
    NotFresh,
    #[error("genesis step {step} reverted: {reason}")]
    Reverted { step: usize, reason: String },
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

/// Creates the admin EOA, installs the system contracts and mines them as
/// block 0.
pub fn bootstrap(chain: &mut Chain, admin_label: &str) -> Result<SystemAddresses, BootstrapError> {
    if chain.height().is_some() || !chain.mempool().is_empty() {
        return Err(BootstrapError::NotFresh);
    }
    let admin = chain.create_eoa(admin_label)?;
    let sys = SystemAddresses::derive(admin);
    let versions = json!({
        super::USER_PATIENT: TypeKey::new(PATIENT_ACCOUNT, 1),
        super::USER_PROVIDER: TypeKey::new(PROVIDER_ACCOUNT, 1),
    });
    let create = |type_id: &str, ctor_args| Payload::CreateContract { type_id: type_id.into(), version: 1, ctor_args };
    let steps = [
        create(PLAN_STORE, json!({})),
        create(ACCOUNT_FACTORY, json!({ "activeVersions": versions })),
        create(PATIENT_REGISTRY, json!({ "factory": sys.factory, "onboarder": admin })),
        calls::bind_factory(sys.factory, sys.registry, sys.plan_store).into_payload(),
        calls::bind_plan_store(sys.plan_store, sys.factory).into_payload(),
    ];
    for payload in steps {
        let tx = chain.build_transaction(admin, payload, GENESIS_GAS)?;
        chain.submit_transaction(tx)?;
    }
    let mined = chain.mine_block(usize::MAX)?;
    for (step, receipt) in mined.receipts.iter().enumerate() {
        if let ReceiptStatus::Reverted { reason } = &receipt.status {
            return Err(BootstrapError::Reverted { step, reason: reason.clone() });
        }
    }
    Ok(sys)
}
