//! Document lifecycle: uploads, the step-wise workflow with retries,
//! notary review, share links and public verification.

pub mod auth;
pub mod config;
pub mod events;
pub mod share;
pub mod state;
pub mod vault;
pub mod verify;
pub mod worker;

use thiserror::Error;

pub use auth::Principal;
pub use config::{Config, PinConfig};
pub use share::{ShareLink, ShareMode, ShareView};
pub use state::{DocumentState, Step};
pub use vault::{Advance, DocumentView, FieldMeta, NotaryQueueItem, NotaryReview, Vault, VaultDeps, ZoneMeta};
pub use verify::{FactReport, VerificationReport};
pub use worker::WorkerPool;

/// Attempts per step before the document is failed.
pub const MAX_ATTEMPTS: u32 = 5;
/// First retry delay; doubles per attempt.
pub const RETRY_BASE: std::time::Duration = std::time::Duration::from_millis(200);

#[derive(Debug, Error)]
pub enum OrchestrateError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("invalid zone: {0}")]
    InvalidZone(String),
    #[error("unauthorized: {0}")]
    Unauthorized(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("expired: {0}")]
    Expired(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("state violation: {0}")]
    StateViolation(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("metadata: {0}")]
    Db(#[from] rusqlite::Error),
    #[error(transparent)]
    Store(#[from] crate::store::StoreError),
    #[error(transparent)]
    Anchor(#[from] crate::anchor::AnchorError),
    #[error(transparent)]
    Fact(#[from] crate::facts::FactError),
    #[error(transparent)]
    Obfuscate(#[from] crate::obfuscate::ObfuscateError),
    #[error("internal: {0}")]
    Internal(String),
}

/// Delay before retry number `attempt` (1-based).
pub fn backoff(attempt: u32) -> std::time::Duration {
    RETRY_BASE * 2u32.saturating_pow(attempt.saturating_sub(1))
}
