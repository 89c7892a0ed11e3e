//! Minimal signed facts derived from extracted fields.
//!
//! A fact carries only a subject, a predicate, timestamps and the source
//! document id. Its hash is taken over a canonical JSON encoding of those
//! fields, signed with Ed25519 and anchored; field values never enter it.

pub mod cnp;
pub mod revocation;
pub mod rules;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use chrono::{DateTime, SecondsFormat, Utc};
use ed25519_dalek::{Signature, Signer, SigningKey, Verifier, VerifyingKey};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::canonical_json;
pub use revocation::{RevocationEntry, RevocationRegistry};
pub use rules::{derive_facts, is_adult, parse_date, Derivation, FactDraft, RuleSet};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FactError {
    #[error("malformed input: {0}")]
    Malformed(String),
    #[error("notary approval required for document {0}")]
    ApprovalRequired(String),
    #[error("retryable: {0}")]
    Retryable(String),
    #[error("fact {0} already revoked")]
    AlreadyRevoked(String),
    #[error("fact {0} not found")]
    NotFound(String),
    #[error("revocation registry i/o: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fact {
    pub id: String,
    pub subject: String,
    pub predicate: String,
    pub issued_at: DateTime<Utc>,
    pub expires_at: Option<DateTime<Utc>>,
    /// Hex SHA-256 of the canonical encoding.
    pub fact_hash: String,
    /// Base64 Ed25519 signature over the raw hash bytes.
    pub signature: String,
    pub source_document: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FactStatus {
    Valid,
    Expired,
    Revoked,
    BadSignature,
}

/// Evidence that a notary approved the document a draft came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Approval {
    pub document_id: String,
    pub notary_id: String,
}

/// Receives fact hashes for anchoring.
pub trait HashAnchor: Send + Sync {
    fn anchor_hash(&self, hash: [u8; 32]) -> Result<(), String>;
}

fn ts(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// Canonical encoding of the hashed fact fields.
pub fn canonical_fact(
    subject: &str,
    predicate: &str,
    issued_at: &DateTime<Utc>,
    expires_at: Option<&DateTime<Utc>>,
    source_document: &str,
) -> String {
    canonical_json(&serde_json::json!({
        "subject": subject,
        "predicate": predicate,
        "issued_at": ts(issued_at),
        "expires_at": expires_at.map(ts),
        "source_document": source_document,
    }))
}

pub fn fact_hash(
    subject: &str,
    predicate: &str,
    issued_at: &DateTime<Utc>,
    expires_at: Option<&DateTime<Utc>>,
    source_document: &str,
) -> [u8; 32] {
    crate::sha256(canonical_fact(subject, predicate, issued_at, expires_at, source_document).as_bytes())
}

impl Fact {
    pub fn recompute_hash(&self) -> [u8; 32] {
        fact_hash(
            &self.subject,
            &self.predicate,
            &self.issued_at,
            self.expires_at.as_ref(),
            &self.source_document,
        )
    }
}

/// Signs `draft` and anchors its hash. Timestamps are truncated to
/// milliseconds so the hash survives a JSON round trip.
pub fn issue(
    draft: &FactDraft,
    approval: Option<&Approval>,
    key: &SigningKey,
    anchor: &dyn HashAnchor,
    now: DateTime<Utc>,
) -> Result<Fact, FactError> {
    match approval {
        Some(a) if a.document_id == draft.source_document => {}
        _ => return Err(FactError::ApprovalRequired(draft.source_document.clone())),
    }
    let issued_at = truncate_millis(now);
    let expires_at = draft.expires_at.map(truncate_millis);
    let hash = fact_hash(
        &draft.subject,
        &draft.predicate,
        &issued_at,
        expires_at.as_ref(),
        &draft.source_document,
    );
    let sig = key.sign(&hash);
    anchor.anchor_hash(hash).map_err(FactError::Retryable)?;
    Ok(Fact {
        id: uuid::Uuid::new_v4().to_string(),
        subject: draft.subject.clone(),
        predicate: draft.predicate.clone(),
        issued_at,
        expires_at,
        fact_hash: hex::encode(hash),
        signature: B64.encode(sig.to_bytes()),
        source_document: draft.source_document.clone(),
    })
}

fn truncate_millis(t: DateTime<Utc>) -> DateTime<Utc> {
    DateTime::from_timestamp_millis(t.timestamp_millis()).expect("in range")
}

/// Precedence: bad signature, then revoked, then expired.
pub fn verify_fact(
    fact: &Fact,
    issuer: &VerifyingKey,
    revocations: &RevocationRegistry,
    now: DateTime<Utc>,
) -> FactStatus {
    let hash = fact.recompute_hash();
    let sig_ok = hex::encode(hash) == fact.fact_hash
        && B64
            .decode(&fact.signature)
            .ok()
            .and_then(|b| Signature::from_slice(&b).ok())
            .is_some_and(|s| issuer.verify(&hash, &s).is_ok());
    if !sig_ok {
        FactStatus::BadSignature
    } else if revocations.is_revoked(&fact.fact_hash) {
        FactStatus::Revoked
    } else if fact.expires_at.is_some_and(|e| now > e) {
        FactStatus::Expired
    } else {
        FactStatus::Valid
    }
}
