//! Content-addressed blobs, remote pinning, the encrypted keystore and the
//! relational metadata store.

pub mod cas;
pub mod keystore;
pub mod metadata;
pub mod pin;

use thiserror::Error;

pub use cas::{Cas, ContentId};
pub use keystore::{AccessToken, AuditRow, Keystore, Scope};
pub use metadata::Metadata;
pub use pin::{HttpTransport, PinClient, PinReceipt, PinResponse, PinTransport, StubTransport, TransportError};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("stored object {0} does not match its content id")]
    Corruption(String),
    #[error("invalid content id {0:?}")]
    InvalidId(String),
    #[error("store i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("retryable: {0}")]
    Retryable(String),
    #[error("remote returned {remote}, expected {local}")]
    RemoteIntegrity { local: String, remote: String },
    #[error("remote rejected request: {0}")]
    Remote(String),
    #[error("unauthorized: {0}")]
    Unauthorized(String),
    #[error("revoked: {0}")]
    Revoked(String),
    #[error("keystore crypto: {0}")]
    Crypto(String),
    #[error("metadata: {0}")]
    Db(#[from] rusqlite::Error),
    #[error("malformed stored data: {0}")]
    Malformed(String),
}
