//! Account-model world state and native contract execution.
//!
//! Contracts are native state machines registered under a `(typeId, version)`
//! key. A transaction runs in a stack of call frames over a journal, so any
//! frame can be rolled back without touching its parent. Gas is metered per
//! invocation, storage access, stored byte and event (see [`gas`]).

mod address;
mod exec;
pub mod gas;
mod registry;
mod state;

pub use address::{Address, ParseAddressError};
pub use exec::{
    arg, execute_query, execute_transaction, opt_arg, reason_code, BlockEnv, CallContext, Event,
    ExecError, Executor, Outcome, Payload, TxInput,
};
pub use gas::{GasMeter, GasSchedule};
pub use registry::{AlreadyRegistered, ConstructorFn, ContractCode, ContractFn, ContractTypeRegistry};
pub use state::{Account, AccountKind, StateError, TypeKey, WorldState};

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::{json, Value};

    const ENV: BlockEnv = BlockEnv { height: 1, timestamp: 1_700_000_000 };

    fn hundred_byte_value() -> Value {
        // 98 chars plus two quotes
        Value::String("x".repeat(98))
    }

    // Constructor: one read and one write of a 100-byte value.
    fn demo_ctor(ctx: &mut CallContext<'_, '_>, _args: &Value) -> Result<(), ExecError> {
        let _ = ctx.load("blob")?;
        ctx.store("blob", &hundred_byte_value())
    }

    fn failing_ctor(_ctx: &mut CallContext<'_, '_>, _args: &Value) -> Result<(), ExecError> {
        Err(ExecError::revert("Nope", "constructor refuses"))
    }

    fn write_then_revert(ctx: &mut CallContext<'_, '_>, _args: &Value) -> Result<Value, ExecError> {
        ctx.store("counter", &1u64)?;
        ctx.emit("Wrote", &json!({}))?;
        Err(ExecError::revert("Refused", "after writing"))
    }

    fn emit_two(ctx: &mut CallContext<'_, '_>, _args: &Value) -> Result<Value, ExecError> {
        let a = ctx.emit("First", &json!({"n": 1}))?;
        let b = ctx.emit("Second", &json!({"n": 2}))?;
        Ok(json!([a.sequence, b.sequence]))
    }

    fn emit_big(ctx: &mut CallContext<'_, '_>, _args: &Value) -> Result<Value, ExecError> {
        ctx.emit("Big", &Value::String("p".repeat(48)))?;
        Ok(Value::Null)
    }

    fn set(ctx: &mut CallContext<'_, '_>, args: &Value) -> Result<Value, ExecError> {
        let v: u64 = arg(args, "value")?;
        ctx.store("counter", &v)?;
        Ok(Value::Null)
    }

    /// Writes locally, then calls `inner` on `target` and swallows its failure.
    fn outer_then_inner(ctx: &mut CallContext<'_, '_>, args: &Value) -> Result<Value, ExecError> {
        let target: Address = arg(args, "target")?;
        ctx.store("outer", &true)?;
        ctx.emit("OuterWrote", &json!({}))?;
        let inner = ctx.call(target, "write_then_revert", &json!({}));
        Ok(json!({"innerFailed": inner.is_err()}))
    }

    fn registry() -> ContractTypeRegistry {
        let mut reg = ContractTypeRegistry::new();
        let code = ContractCode::new(demo_ctor)
            .with("write_then_revert", write_then_revert)
            .with("emit_two", emit_two)
            .with("emit_big", emit_big)
            .with("set", set)
            .with("outer_then_inner", outer_then_inner);
        reg.register(TypeKey::new("demo", 1), code).unwrap();
        reg.register(TypeKey::new("broken", 1), ContractCode::new(failing_ctor)).unwrap();
        reg
    }

    fn unit_schedule() -> GasSchedule {
        GasSchedule { per_step: 1, per_stored_byte: 1, per_event: 1, tx_base: 21 }
    }

    struct Fixture {
        state: WorldState,
        reg: ContractTypeRegistry,
        schedule: GasSchedule,
        alice: Address,
        nonce: u64,
    }

    impl Fixture {
        fn new() -> Self {
            let mut state = WorldState::new();
            let alice = state.create_eoa("alice", 1_000_000).unwrap();
            Fixture { state, reg: registry(), schedule: unit_schedule(), alice, nonce: 0 }
        }

        fn run(&mut self, payload: Payload, gas_limit: u64) -> Outcome {
            let nonce = self.nonce;
            self.nonce += 1;
            execute_transaction(
                &mut self.state,
                &self.reg,
                self.schedule,
                TxInput { sender: self.alice, sender_nonce: nonce, payload: &payload, gas_limit, env: ENV, event_base: 0 },
            )
        }

        fn create(&mut self, type_id: &str) -> Outcome {
            self.run(
                Payload::CreateContract { type_id: type_id.into(), version: 1, ctor_args: json!({}) },
                100_000,
            )
        }

        fn deploy(&mut self) -> Address {
            let out = self.create("demo");
            out.result.unwrap().as_str().unwrap().parse().unwrap()
        }

        fn call(&mut self, target: Address, function: &str, args: Value) -> Outcome {
            self.run(Payload::CallContract { target, function: function.into(), args }, 100_000)
        }
    }

    #[test]
    fn consecutive_creations_get_distinct_addresses() {
        let mut f = Fixture::new();
        let a = f.deploy();
        let b = f.deploy();
        assert_ne!(a, b);
        assert_eq!(a, Address::for_contract(&f.alice, 0));
        assert_eq!(b, Address::for_contract(&f.alice, 1));
    }

    #[test]
    fn unregistered_type_is_rejected() {
        let mut f = Fixture::new();
        let out = f.create("nope");
        assert_eq!(out.result, Err(ExecError::UnknownContractType(TypeKey::new("nope", 1))));
        assert!(out.gas_used > 0);
    }

    #[test]
    fn constructor_gas_follows_schedule() {
        // invocation + read + write = 3 steps, 100 stored bytes
        let mut f = Fixture::new();
        let out = f.create("demo");
        assert!(out.result.is_ok());
        assert_eq!(out.gas_used, 21 + 3 + 100);
    }

    #[test]
    fn constructor_revert_leaves_no_account() {
        let mut f = Fixture::new();
        let before = f.state.len();
        let out = f.create("broken");
        assert!(matches!(out.result, Err(ExecError::ConstructorRevert(_))));
        assert_eq!(f.state.len(), before);
        assert!(out.created.is_empty());
    }

    #[test]
    fn calling_an_eoa_is_not_a_contract() {
        let mut f = Fixture::new();
        let alice = f.alice;
        let out = f.call(alice, "set", json!({"value": 1}));
        assert_eq!(out.result, Err(ExecError::NotAContract(alice)));
    }

    #[test]
    fn unknown_function_is_rejected() {
        let mut f = Fixture::new();
        let c = f.deploy();
        let out = f.call(c, "missing", json!({}));
        assert_eq!(out.result, Err(ExecError::UnknownFunction("missing".into())));
    }

    #[test]
    fn revert_rolls_back_storage_and_events_but_charges_gas() {
        let mut f = Fixture::new();
        let c = f.deploy();
        let storage_before = f.state.get(&c).unwrap().storage.clone();
        let balance_before = f.state.balance(&f.alice);
        let out = f.call(c, "write_then_revert", json!({}));
        assert_eq!(out.result.as_ref().unwrap_err().code(), "Refused");
        assert!(out.gas_used > 0);
        assert!(out.events.is_empty());
        assert_eq!(f.state.get(&c).unwrap().storage, storage_before);
        assert_eq!(f.state.balance(&f.alice), balance_before - out.gas_used);
    }

    #[test]
    fn events_are_numbered_in_emission_order() {
        let mut f = Fixture::new();
        let c = f.deploy();
        let out = f.call(c, "emit_two", json!({}));
        assert_eq!(out.result.unwrap(), json!([0, 1]));
        let seqs: Vec<u64> = out.events.iter().map(|e| e.sequence).collect();
        assert_eq!(seqs, vec![0, 1]);
        assert_eq!(out.events[0].topic, "First");
    }

    #[test]
    fn event_payload_size_is_not_charged() {
        let mut f = Fixture::new();
        let c = f.deploy();
        let out = f.call(c, "emit_big", json!({}));
        // base + invocation + one event
        assert_eq!(out.gas_used, 21 + 1 + 1);
    }

    #[test]
    fn inner_frame_revert_keeps_outer_state() {
        let mut f = Fixture::new();
        let outer = f.deploy();
        let inner = f.deploy();
        let out = f.call(outer, "outer_then_inner", json!({"target": inner}));
        assert_eq!(out.result.unwrap(), json!({"innerFailed": true}));
        assert_eq!(f.state.get(&outer).unwrap().storage.get("outer"), Some(&json!(true)));
        assert!(f.state.get(&inner).unwrap().storage.get("counter").is_none());
        let topics: Vec<&str> = out.events.iter().map(|e| e.topic.as_str()).collect();
        assert_eq!(topics, vec!["OuterWrote"]);
    }

    #[test]
    fn gas_limit_at_base_runs_out_on_first_step() {
        let mut f = Fixture::new();
        let c = f.deploy();
        let out = f.run(Payload::CallContract { target: c, function: "set".into(), args: json!({"value": 5}) }, 21);
        assert_eq!(out.result, Err(ExecError::OutOfGas));
        assert_eq!(out.gas_used, 21);
        assert!(f.state.get(&c).unwrap().storage.get("counter").is_none());
    }

    #[test]
    fn out_of_gas_cannot_be_swallowed_by_outer_frame() {
        let mut f = Fixture::new();
        let outer = f.deploy();
        let inner = f.deploy();
        // enough for the outer writes, not for the inner call's work
        let limit = 21 + 1 + (1 + 4) + 1 + 1;
        let payload = Payload::CallContract {
            target: outer,
            function: "outer_then_inner".into(),
            args: json!({"target": inner}),
        };
        let out = f.run(payload, limit);
        assert_eq!(out.result, Err(ExecError::OutOfGas));
        assert_eq!(out.gas_used, limit);
        assert!(f.state.get(&outer).unwrap().storage.get("outer").is_none());
    }

    #[test]
    fn transfer_moves_balance_and_reserves_gas() {
        let mut f = Fixture::new();
        let bob = f.state.create_eoa("bob", 0).unwrap();
        let out = f.run(Payload::Transfer { target: bob, amount: 500 }, 100);
        assert!(out.result.is_ok());
        assert_eq!(out.gas_used, 21 + 2);
        assert_eq!(f.state.balance(&bob), 500);
        assert_eq!(f.state.balance(&f.alice), 1_000_000 - 500 - 23);

        let out = f.run(Payload::Transfer { target: bob, amount: 10_000_000 }, 100);
        assert_eq!(out.result.unwrap_err().code(), "InsufficientFunds");
        assert_eq!(f.state.balance(&bob), 500);
    }

    #[test]
    fn query_never_mutates_state() {
        let mut f = Fixture::new();
        let c = f.deploy();
        let digest = f.state.state_digest();
        let out = execute_query(&mut f.state, &f.reg, f.schedule, ENV, f.alice, c, "set", &json!({"value": 9}), 10_000);
        assert!(out.result.is_ok());
        assert!(out.gas_used > 0);
        assert_eq!(f.state.state_digest(), digest);
    }

    #[test]
    fn identical_inputs_give_identical_outcomes() {
        let mut a = Fixture::new();
        let mut b = Fixture::new();
        let ca = a.deploy();
        let cb = b.deploy();
        assert_eq!(ca, cb);
        assert_eq!(a.call(ca, "emit_two", json!({})), b.call(cb, "emit_two", json!({})));
        assert_eq!(a.state.state_digest(), b.state.state_digest());
    }

    #[test]
    fn sender_nonce_is_consumed_even_on_revert() {
        let mut f = Fixture::new();
        let c = f.deploy();
        f.call(c, "write_then_revert", json!({}));
        assert_eq!(f.state.nonce(&f.alice), 2);
    }
}
