//! Provider and billing user accounts. Both are thin profiles created by the
//! factory; access decisions live in the patient accounts.

use serde_json::{json, Value};

use super::unauthorized;
use crate::runtime::{arg, Address, CallContext, ContractCode, ExecError};

pub(super) fn code() -> ContractCode {
    ContractCode::new(construct).with("profile", profile)
}

pub(super) fn billing_code() -> ContractCode {
    ContractCode::new(construct).with("profile", profile)
}

/// `{owner, name, factory}`; only the factory may construct.
fn construct(ctx: &mut CallContext<'_, '_>, args: &Value) -> Result<(), ExecError> {
    let factory: Address = arg(args, "factory")?;
    if ctx.caller() != factory {
        return Err(unauthorized("user accounts are created by the factory"));
    }
    let owner: Address = arg(args, "owner")?;
    let name: String = arg(args, "name")?;
    ctx.store("owner", &owner)?;
    ctx.store("name", &name)
}

fn profile(ctx: &mut CallContext<'_, '_>, _: &Value) -> Result<Value, ExecError> {
    let owner: Address = ctx.expect_as("owner")?;
    let name: String = ctx.expect_as("name")?;
    Ok(json!({ "owner": owner, "name": name }))
}
