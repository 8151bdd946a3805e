//! Gas schedule and metering.
//!
//! Metering rules, fixed so gas figures are reproducible:
//!
//! * `txBase` once per transaction;
//! * one step per contract invocation (constructor or function, nested calls included);
//! * one step per storage access (read, write, delete, or scanned entry);
//! * `perStoredByte` for the canonical length of every value written;
//! * `perEvent` per emitted event, regardless of payload size;
//! * plain transfers cost two steps (debit and credit).

use serde::{Deserialize, Serialize};

use super::ExecError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase", deny_unknown_fields)]
pub struct GasSchedule {
    pub per_step: u64,
    pub per_stored_byte: u64,
    pub per_event: u64,
    pub tx_base: u64,
}

impl Default for GasSchedule {
    fn default() -> Self {
        GasSchedule { per_step: 10, per_stored_byte: 1, per_event: 20, tx_base: 100 }
    }
}

impl GasSchedule {
    /// Fee for a unit of work, `None` on overflow.
    pub fn fee(&self, steps: u64, stored_bytes: u64, events: u64) -> Option<u64> {
        steps
            .checked_mul(self.per_step)?
            .checked_add(stored_bytes.checked_mul(self.per_stored_byte)?)?
            .checked_add(events.checked_mul(self.per_event)?)
    }
}

/// Per-transaction gas accumulator.
///
/// Once the limit is hit the meter stays exhausted; every later charge fails,
/// so contract code cannot swallow an out-of-gas condition.
#[derive(Debug, Clone)]
pub struct GasMeter {
    schedule: GasSchedule,
    limit: u64,
    used: u64,
    exhausted: bool,
}

impl GasMeter {
    pub fn new(schedule: GasSchedule, limit: u64) -> Self {
        GasMeter { schedule, limit, used: 0, exhausted: false }
    }

    pub fn schedule(&self) -> &GasSchedule {
        &self.schedule
    }

    pub fn used(&self) -> u64 {
        self.used
    }

    pub fn limit(&self) -> u64 {
        self.limit
    }

    pub fn is_exhausted(&self) -> bool {
        self.exhausted
    }

    pub fn charge_base(&mut self) -> Result<u64, ExecError> {
        let base = self.schedule.tx_base;
        self.add(Some(base))
    }

    pub fn charge(&mut self, steps: u64, stored_bytes: u64, events: u64) -> Result<u64, ExecError> {
        let fee = self.schedule.fee(steps, stored_bytes, events);
        self.add(fee)
    }

    fn add(&mut self, fee: Option<u64>) -> Result<u64, ExecError> {
        if self.exhausted {
            return Err(ExecError::OutOfGas);
        }
        match fee.and_then(|f| self.used.checked_add(f).map(|total| (f, total))) {
            Some((fee, total)) if total <= self.limit => {
                self.used = total;
                Ok(fee)
            }
            _ => {
                self.used = self.limit;
                self.exhausted = true;
                Err(ExecError::OutOfGas)
            }
        }
    }
}
