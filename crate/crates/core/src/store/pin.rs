//! Client for an HTTP pinning service.
//!
//! Contract: `POST {base_url}/pins` with `Authorization: Bearer <token>`
//! and a multipart body whose `file` part carries the blob (filename is
//! the content id). The service answers JSON with the hash it computed in
//! `content_id` (`cid` and `hash` are accepted as aliases), bare hex or
//! `sha256-` prefixed.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::cas::{Cas, ContentId};
use super::StoreError;
use crate::clock::Sleeper;

pub const PIN_ATTEMPTS: u32 = 3;
pub const PIN_BACKOFF_BASE: Duration = Duration::from_millis(200);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PinResponse {
    #[serde(alias = "cid", alias = "hash")]
    pub content_id: String,
    #[serde(default)]
    pub pin_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PinReceipt {
    pub content_id: ContentId,
    pub pin_id: Option<String>,
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportError {
    /// Connection trouble, timeouts, 5xx and 429.
    Transient(String),
    Permanent { status: u16, message: String },
}

pub trait PinTransport: Send + Sync {
    fn upload(&self, token: &str, id: &ContentId, bytes: &[u8]) -> Result<PinResponse, TransportError>;
}

pub struct HttpTransport {
    base_url: String,
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new(base_url: &str, timeout: Duration) -> Result<Self, StoreError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| StoreError::Remote(e.to_string()))?;
        Ok(Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            client,
        })
    }
}

impl PinTransport for HttpTransport {
    fn upload(&self, token: &str, id: &ContentId, bytes: &[u8]) -> Result<PinResponse, TransportError> {
        let part = reqwest::blocking::multipart::Part::bytes(bytes.to_vec())
            .file_name(id.to_string())
            .mime_str("application/octet-stream")
            .map_err(|e| TransportError::Transient(e.to_string()))?;
        let form = reqwest::blocking::multipart::Form::new().part("file", part);
        let resp = self
            .client
            .post(format!("{}/pins", self.base_url))
            .bearer_auth(token)
            .multipart(form)
            .send()
            .map_err(|e| TransportError::Transient(e.to_string()))?;
        let status = resp.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(TransportError::Transient(format!("status {status}")));
        }
        if !status.is_success() {
            return Err(TransportError::Permanent {
                status: status.as_u16(),
                message: resp.text().unwrap_or_default(),
            });
        }
        resp.json::<PinResponse>().map_err(|e| TransportError::Permanent {
            status: status.as_u16(),
            message: format!("bad response body: {e}"),
        })
    }
}

/// Offline transport for tests and air-gapped runs.
pub struct StubTransport {
    mode: StubMode,
    fail_first: usize,
    calls: AtomicUsize,
}

#[derive(Debug, Clone)]
pub enum StubMode {
    /// Echo the sha256 of the uploaded bytes.
    Echo,
    /// Always answer with this hash.
    Fixed(String),
}

impl StubTransport {
    pub fn echo() -> Self {
        Self::new(StubMode::Echo, 0)
    }

    pub fn new(mode: StubMode, fail_first: usize) -> Self {
        Self {
            mode,
            fail_first,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl PinTransport for StubTransport {
    fn upload(&self, _token: &str, _id: &ContentId, bytes: &[u8]) -> Result<PinResponse, TransportError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        if n < self.fail_first {
            return Err(TransportError::Transient(format!("injected failure {}", n + 1)));
        }
        let content_id = match &self.mode {
            StubMode::Echo => crate::sha256_hex(bytes),
            StubMode::Fixed(h) => h.clone(),
        };
        Ok(PinResponse {
            content_id,
            pin_id: Some(format!("stub-{n}")),
        })
    }
}

pub struct PinClient {
    transport: Arc<dyn PinTransport>,
    token: String,
    sleeper: Arc<dyn Sleeper>,
    attempts: u32,
}

impl PinClient {
    pub fn new(transport: Arc<dyn PinTransport>, token: &str, sleeper: Arc<dyn Sleeper>) -> Self {
        Self {
            transport,
            token: token.to_string(),
            sleeper,
            attempts: PIN_ATTEMPTS,
        }
    }

    /// Uploads the local blob and checks the remote hash. Transient
    /// failures are retried with exponential backoff starting at 200 ms.
    pub fn pin(&self, cas: &Cas, id: &ContentId) -> Result<PinReceipt, StoreError> {
        let bytes = cas.get(id)?;
        let mut last = String::new();
        for attempt in 1..=self.attempts {
            match self.transport.upload(&self.token, id, &bytes) {
                Ok(resp) => {
                    let remote = resp.content_id.trim().to_ascii_lowercase();
                    let remote_hex = remote.strip_prefix("sha256-").unwrap_or(&remote);
                    if remote_hex != id.hex() {
                        return Err(StoreError::RemoteIntegrity {
                            local: id.to_string(),
                            remote: resp.content_id,
                        });
                    }
                    return Ok(PinReceipt {
                        content_id: id.clone(),
                        pin_id: resp.pin_id,
                        attempts: attempt,
                    });
                }
                Err(TransportError::Permanent { status, message }) if status == 401 || status == 403 => {
                    return Err(StoreError::Unauthorized(format!("pinning service: {message}")))
                }
                Err(TransportError::Permanent { status, message }) => {
                    return Err(StoreError::Remote(format!("status {status}: {message}")))
                }
                Err(TransportError::Transient(m)) => {
                    last = m;
                    if attempt < self.attempts {
                        self.sleeper.sleep(PIN_BACKOFF_BASE * 2u32.pow(attempt - 1));
                    }
                }
            }
        }
        Err(StoreError::Retryable(format!("pinning failed after {} attempts: {last}", self.attempts)))
    }
}
