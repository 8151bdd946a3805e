//! Benchmark harnesses. Counters are exact and reproducible; wall times are
//! informational only.

use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use dash_core::clock::FixedClock;
use dash_core::contracts::{self, calls, Extrinsic, PlanDescriptor};
use dash_core::ledger::{Chain, ChainConfig, Receipt};
use dash_core::pubsub::{Dispatcher, DispatcherConfig, Filter, PollingBaseline};
use dash_core::recordstore::{Resource, ResourceType};
use dash_core::runtime::Address;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::Serialize;

use crate::{OnboardRequest, PlanMode, Service, ServiceConfig, ServiceError};

const BENCH_CLOCK: u64 = 1_700_000_000;
const BENCH_GAS: u64 = 5_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlyweightParams {
    pub patients: usize,
    pub plans: usize,
    pub flyweight: bool,
    pub difficulty: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct FlyweightReport {
    pub mode: &'static str,
    pub patients: usize,
    pub plans: usize,
    /// Plan descriptors present in contract storage (interned or copied).
    pub plans_stored: usize,
    /// Canonical bytes of those descriptors.
    pub plan_bytes: u64,
    /// Gas of the plan-related transactions across all onboardings.
    pub plan_gas: u64,
    pub wall_ms: u128,
}

impl FlyweightReport {
    pub const CSV_HEADER: &'static str = "mode,patients,plans,plans_stored,plan_bytes,plan_gas,wall_ms";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.mode, self.patients, self.plans, self.plans_stored, self.plan_bytes, self.plan_gas, self.wall_ms
        )
    }
}

impl fmt::Display for FlyweightReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "mode            {}", self.mode)?;
        writeln!(f, "patients        {}", self.patients)?;
        writeln!(f, "distinct plans  {}", self.plans)?;
        writeln!(f, "plans stored    {}", self.plans_stored)?;
        writeln!(f, "plan bytes      {}", self.plan_bytes)?;
        writeln!(f, "plan gas        {}", self.plan_gas)?;
        write!(f, "wall ms         {}", self.wall_ms)
    }
}

pub fn plan_descriptor(i: usize) -> PlanDescriptor {
    let tiers = ["bronze", "silver", "gold", "platinum"];
    PlanDescriptor::new(format!("Payer {}", i / tiers.len()), format!("PLAN-{i:04}"), tiers[i % tiers.len()])
}

/// Onboards `patients` patients spread round-robin over `plans` plans.
pub fn flyweight(p: FlyweightParams) -> Result<FlyweightReport, ServiceError> {
    if p.plans == 0 {
        return Err(ServiceError::BadRequest("plans must be at least 1".into()));
    }
    let config = ServiceConfig {
        chain: ChainConfig { difficulty: p.difficulty, ..ChainConfig::default() },
        fixed_clock: Some(BENCH_CLOCK),
        ..ServiceConfig::default()
    };
    let mut svc = Service::open(config)?;
    let admin = svc.authenticate(&svc.config().admin_key.clone())?;
    let mode = if p.flyweight { PlanMode::Flyweight } else { PlanMode::Inline };
    let started = Instant::now();
    let mut plan_gas = 0;
    for i in 0..p.patients {
        let id = format!("bench-{i:06}");
        let demographics = Resource::new(ResourceType::Patient, &id, &id, BENCH_CLOCK)
            .with("name", format!("Patient {i}"))
            .with("birthDate", "1980-01-01");
        let req = OnboardRequest {
            patient_id: id,
            demographics,
            plan: plan_descriptor(i % p.plans),
            extrinsic: Extrinsic { member_number: format!("M{i:07}"), group_code: format!("G{}", i % 7) },
        };
        let done = svc.onboard_patient_with(&admin, req, mode)?;
        // receipts are [lookupOrCreate, plan txs.., appendRecord]
        let n = done.receipts.len();
        plan_gas += done.receipts[1..n - 1].iter().map(|r| r.gas_used).sum::<u64>();
    }
    let wall_ms = started.elapsed().as_millis();

    let (plans_stored, plan_bytes) = plan_storage(svc.chain(), svc.system().plan_store);
    Ok(FlyweightReport {
        mode: if p.flyweight { "flyweight" } else { "no-flyweight" },
        patients: p.patients,
        plans: p.plans,
        plans_stored,
        plan_bytes,
        plan_gas,
        wall_ms,
    })
}

/// Descriptor count and bytes: interned entries in the plan store plus
/// inline copies held by patient accounts.
pub fn plan_storage(chain: &Chain, plan_store: Address) -> (usize, u64) {
    let mut count = 0;
    let mut bytes = 0u64;
    for account in chain.state().accounts() {
        let prefix = if account.address == plan_store { contracts::PLAN_PREFIX } else { contracts::INSURANCE_INLINE };
        count += account.storage_keys_with_prefix(prefix).count();
        bytes += account.storage_bytes(prefix) as u64;
    }
    (count, bytes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PubSubParams {
    pub providers: usize,
    pub blocks: usize,
    pub events: usize,
    pub polling: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PubSubReport {
    pub providers: usize,
    pub blocks: usize,
    pub events: usize,
    /// Notifications appended by the dispatcher.
    pub pubsub_work: u64,
    /// Brute-force count of (subscription, event) matches.
    pub expected_matches: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub polling_scans: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratio: Option<f64>,
    pub pubsub_us: u128,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub polling_us: Option<u128>,
}

impl PubSubReport {
    pub const CSV_HEADER: &'static str =
        "providers,blocks,events,pubsub_work,expected_matches,polling_scans,ratio,pubsub_us,polling_us";

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<String>| v.unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.providers,
            self.blocks,
            self.events,
            self.pubsub_work,
            self.expected_matches,
            opt(self.polling_scans.map(|v| v.to_string())),
            opt(self.ratio.map(|v| format!("{v:.2}"))),
            self.pubsub_us,
            opt(self.polling_us.map(|v| v.to_string())),
        )
    }
}

impl fmt::Display for PubSubReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "providers          {}", self.providers)?;
        writeln!(f, "blocks             {}", self.blocks)?;
        writeln!(f, "events             {}", self.events)?;
        writeln!(f, "pub/sub work       {}", self.pubsub_work)?;
        write!(f, "expected matches   {}", self.expected_matches)?;
        if let (Some(scans), Some(ratio)) = (self.polling_scans, self.ratio) {
            write!(f, "\npolling scans      {scans}\nratio              {ratio:.2}x")?;
        }
        Ok(())
    }
}

/// Provider `i` watches patient `i`; `events` prescription requests are
/// spread at random over `blocks` blocks and over the watched patients.
pub fn pubsub(p: PubSubParams) -> Result<PubSubReport, ServiceError> {
    if p.providers == 0 {
        return Err(ServiceError::BadRequest("providers must be at least 1".into()));
    }
    let config = ChainConfig { difficulty: 0, allow_empty_blocks: true, ..ChainConfig::default() };
    let mut chain = Chain::new(config, Arc::new(contracts::contract_registry()), Arc::new(FixedClock::new(BENCH_CLOCK)));
    let sys = contracts::bootstrap(&mut chain, "admin").map_err(|e| ServiceError::Internal(e.to_string()))?;

    let mut patients = Vec::with_capacity(p.providers);
    let mut pending = Vec::new();
    for i in 0..p.providers {
        let doc = chain.create_eoa(&format!("provider:bench-{i}"))?;
        let owner = chain.create_eoa(&format!("patient:bench-{i}"))?;
        pending.push(calls::create_provider(sys.factory, doc, &format!("bench-{i}")));
        pending.push(calls::lookup_or_create(sys.registry, &format!("bench-{i}"), Some(owner)));
        patients.push(owner);
    }
    let mut ids = Vec::new();
    for call in pending {
        let tx = chain.build_transaction(sys.admin, call.into_payload(), BENCH_GAS)?;
        ids.push(chain.submit_transaction(tx)?);
    }
    chain.mine_all()?;
    let accounts: Vec<Address> = ids
        .iter()
        .skip(1)
        .step_by(2)
        .map(|id| {
            let r = chain.receipt(id)?;
            r.return_value
                .as_ref()
                .and_then(|v| serde_json::from_value(v.clone()).ok())
                .ok_or_else(|| ServiceError::Internal(format!("patient setup reverted: {:?}", r.status)))
        })
        .collect::<Result<_, ServiceError>>()?;

    let mut dispatcher = Dispatcher::in_memory(DispatcherConfig::default());
    let tip = chain.height().expect("setup mined");
    for h in 0..=tip {
        dispatcher.dispatch_block(h, chain.block_receipts(h))?;
    }
    let mut baseline = PollingBaseline::new();
    let mut filters = Vec::with_capacity(p.providers);
    for (i, account) in accounts.iter().enumerate() {
        let name = format!("provider:bench-{i}");
        dispatcher.register_subscriber(&name)?;
        dispatcher.subscribe(&name, Filter::account(*account), tip + 1)?;
        baseline.watch(&name, *account);
        filters.push(Filter::account(*account));
    }

    let mut rng = StdRng::seed_from_u64(p.seed);
    let mut per_block = vec![Vec::new(); p.blocks];
    if p.blocks > 0 {
        for _ in 0..p.events {
            per_block[rng.random_range(0..p.blocks)].push(rng.random_range(0..p.providers));
        }
    }

    let work_before = dispatcher.work();
    let mut expected = 0u64;
    let mut emitted = 0usize;
    let (mut pubsub_us, mut polling_us) = (0u128, 0u128);
    for (b, patient_ixs) in per_block.iter().enumerate() {
        for &i in patient_ixs {
            let call = calls::request_prescription(accounts[i], &format!("RX-{b}-{i}"));
            let tx = chain.build_transaction(patients[i], call.into_payload(), BENCH_GAS)?;
            chain.submit_transaction(tx)?;
        }
        let mined = chain.mine_block(usize::MAX)?;
        let receipts: &[Receipt] = &mined.receipts;
        for event in receipts.iter().flat_map(|r| &r.events) {
            emitted += 1;
            expected += filters.iter().filter(|f| f.matches(event)).count() as u64;
        }
        let t = Instant::now();
        dispatcher.dispatch_block(mined.block.height(), receipts)?;
        pubsub_us += t.elapsed().as_micros();
        if p.polling {
            let t = Instant::now();
            baseline.poll_block(receipts);
            polling_us += t.elapsed().as_micros();
        }
    }
    let pubsub_work = dispatcher.work() - work_before;
    let polling_scans = p.polling.then(|| baseline.scans());
    Ok(PubSubReport {
        providers: p.providers,
        blocks: p.blocks,
        events: emitted,
        pubsub_work,
        expected_matches: expected,
        polling_scans,
        ratio: polling_scans.map(|s| s as f64 / pubsub_work.max(1) as f64),
        pubsub_us,
        polling_us: p.polling.then_some(polling_us),
    })
}
