use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors shared across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// An instance is full; a fresh one with a larger capacity must be
    /// started.
    #[error("capacity exceeded: {0}")]
    CapacityExceeded(String),

    /// The cascade build failed to converge even after re-salting.
    #[error("cascade build diverged after {restarts} restarts")]
    BuildDiverged { restarts: u32 },

    #[error("format overflow: {0}")]
    FormatOverflow(String),

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("corrupt payload: {0}")]
    CorruptPayload(String),

    #[error("unknown revocation id {0}")]
    UnknownId(String),

    #[error("no publication for account {0}")]
    NoPublication(String),

    #[error("malformed status entry: {0}")]
    MalformedEntry(String),

    /// Batched revocation check could not reach or decode the issuer's
    /// published data. Never interpreted as "valid".
    #[error("check unavailable for {account}: {reason}")]
    CheckUnavailable { account: String, reason: String },

    #[error("degenerate regression design: {0}")]
    DegenerateDesign(String),

    #[error("implausible count series: {0}")]
    ImplausibleSeries(String),

    #[error("registry directory is locked by another process")]
    RegistryLocked,

    #[error("registry data corrupted: {0}")]
    CorruptRegistry(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization failed: {0}")]
    Json(#[from] serde_json::Error),
}
