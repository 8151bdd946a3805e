use dash_core::contracts::codes;
use dash_core::ledger::LedgerError;
use dash_core::pubsub::PubSubError;
use dash_core::recordstore::RecordError;
use dash_core::runtime::reason_code;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("Unauthenticated: missing or unknown API key")]
    Unauthenticated,
    #[error("Forbidden: {0}")]
    Forbidden(String),
    #[error("NotFound: {0}")]
    NotFound(String),
    #[error("DuplicatePatient: {0}")]
    DuplicatePatient(String),
    #[error("DuplicateProvider: {0}")]
    DuplicateProvider(String),
    #[error("BadRequest: {0}")]
    BadRequest(String),
    /// A transaction was mined but reverted; `reason` is the on-chain string.
    #[error("{reason}")]
    Reverted { reason: String },
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    PubSub(#[from] PubSubError),
    #[error("internal: {0}")]
    Internal(String),
}

impl ServiceError {
    /// Short machine-readable code, the first word of the message.
    pub fn code(&self) -> String {
        match self {
            ServiceError::Unauthenticated => "Unauthenticated".into(),
            ServiceError::Forbidden(_) => "Forbidden".into(),
            ServiceError::NotFound(_) => "NotFound".into(),
            ServiceError::DuplicatePatient(_) => "DuplicatePatient".into(),
            ServiceError::DuplicateProvider(_) => "DuplicateProvider".into(),
            ServiceError::BadRequest(_) => "BadRequest".into(),
            ServiceError::Reverted { reason } => reason_code(reason).into(),
            ServiceError::Record(e) => first_word(&e.to_string()),
            ServiceError::Ledger(e) => first_word(&e.to_string()),
            ServiceError::PubSub(e) => first_word(&e.to_string()),
            ServiceError::Internal(_) => "Internal".into(),
        }
    }

    pub fn status(&self) -> u16 {
        match self {
            ServiceError::Unauthenticated => 401,
            ServiceError::Forbidden(_) => 403,
            ServiceError::NotFound(_) => 404,
            ServiceError::DuplicatePatient(_) | ServiceError::DuplicateProvider(_) => 409,
            ServiceError::BadRequest(_) => 422,
            ServiceError::Reverted { reason } => revert_status(reason_code(reason)),
            ServiceError::Record(e) => match e {
                RecordError::SchemaViolation(_) | RecordError::BadPointer(_) | RecordError::Decode(_) => 422,
                RecordError::NotFound(_) => 404,
                RecordError::IntegrityMismatch { .. } => 502,
                RecordError::BackendUnavailable(_) => 503,
            },
            ServiceError::Ledger(e) => match e {
                LedgerError::NotFound => 404,
                LedgerError::EmptyMempool => 409,
                LedgerError::MalformedTransaction(_) | LedgerError::NonceMismatch { .. } => 422,
                _ => 500,
            },
            ServiceError::PubSub(e) => match e {
                PubSubError::InvalidFilter(_) => 422,
                PubSubError::UnknownSubscriber(_) | PubSubError::UnknownSubscription(_) => 404,
                _ => 500,
            },
            ServiceError::Internal(_) => 500,
        }
    }

    /// The on-chain revert string, when there is one.
    pub fn revert_reason(&self) -> Option<&str> {
        match self {
            ServiceError::Reverted { reason } => Some(reason),
            _ => None,
        }
    }
}

fn first_word(s: &str) -> String {
    s.split(|c: char| c == ':' || c.is_whitespace()).next().unwrap_or(s).to_owned()
}

fn revert_status(code: &str) -> u16 {
    match code {
        codes::UNAUTHORIZED => 403,
        codes::UNKNOWN_REQUEST | codes::UNKNOWN_PLAN => 404,
        codes::ALREADY_FULFILLED | codes::ALREADY_OWNED | codes::ALREADY_BOUND | codes::DUPLICATE_PROVIDER => 409,
        codes::EMPTY_PATIENT_ID
        | codes::NOT_A_PROVIDER
        | codes::UNKNOWN_USER_TYPE
        | codes::UNKNOWN_CONTRACT_TYPE
        | codes::INVALID_DESCRIPTOR
        | "BadArguments" => 422,
        _ => 500,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reverts_map_by_leading_code() {
        let e = ServiceError::Reverted { reason: format!("{}: caller is not on the ACL", codes::UNAUTHORIZED) };
        assert_eq!(e.status(), 403);
        assert_eq!(e.code(), codes::UNAUTHORIZED);
        let e = ServiceError::Reverted { reason: format!("{}: request 3", codes::ALREADY_FULFILLED) };
        assert_eq!(e.status(), 409);
        let e = ServiceError::Reverted { reason: "OutOfGas: limit 10".into() };
        assert_eq!(e.status(), 500);
    }

    #[test]
    fn schema_violations_are_unprocessable() {
        let e = ServiceError::from(RecordError::SchemaViolation(vec![]));
        assert_eq!(e.status(), 422);
        assert_eq!(e.code(), "SchemaViolation");
    }
}
