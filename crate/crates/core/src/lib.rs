pub mod canonical;
pub mod clock;
pub mod contracts;
pub mod digest;
pub mod ledger;
pub mod pubsub;
pub mod recordstore;
pub mod runtime;

pub use digest::Digest;
