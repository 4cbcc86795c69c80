use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("mode order {order} exceeds the configured cap of {cap}")]
    OrderTooLarge { order: u32, cap: u32 },

    #[error("|ell| = {ell} exceeds the configured cap of {cap}")]
    EllOutOfRange { ell: i64, cap: u32 },

    #[error("polarization state is not one of the four BB84 states at depth {depth}")]
    NotBb84State { depth: u32 },

    #[error("no deterministic split found for addresses {subset:?}")]
    Unsortable { subset: Vec<i64> },

    #[error("address set is empty")]
    EmptyAddressSet,

    #[error("duplicate address ell = {ell} (users {first} and {second})")]
    DuplicateAddress {
        ell: i64,
        first: String,
        second: String,
    },

    #[error("unknown user `{0}`")]
    UnknownUser(String),

    #[error("in-port busy: held by `{holder}`, requested by `{requester}`")]
    InportBusy { holder: String, requester: String },

    #[error("transcript length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("insufficient sample for QBER estimation ({sifted} sifted bits)")]
    InsufficientSample { sifted: usize },

    #[error("invalid {field}: {reason}")]
    Invalid { field: String, reason: String },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
