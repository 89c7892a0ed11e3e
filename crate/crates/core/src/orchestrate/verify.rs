//! Public verification of a stored document.

use chrono::{DateTime, Utc};
use rusqlite::OptionalExtension;
use serde::Serialize;

use super::vault::Vault;
use super::OrchestrateError;
use crate::anchor::{verify_inclusion, verify_notarization, ChainVerdict, InclusionProof};
use crate::facts::FactStatus;
use crate::store::ContentId;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FactReport {
    pub fact_hash: String,
    pub subject: String,
    pub predicate: String,
    pub issued_at: DateTime<Utc>,
    pub expires_at: Option<DateTime<Utc>>,
    pub signature: String,
    pub anchored: bool,
    pub status: FactStatus,
}

/// Findings only; a failed check is a `false`, never an error.
#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub reference: String,
    pub document_id: Option<String>,
    pub content_id: Option<String>,
    /// The stored blob still hashes to its content id.
    pub hash_match: bool,
    pub anchored: bool,
    pub block_index: Option<u64>,
    pub inclusion_proof: Option<InclusionProof>,
    pub inclusion_proof_valid: bool,
    pub chain_valid: bool,
    pub notary_signature_valid: bool,
    pub notary_signature_anchored: bool,
    pub facts: Vec<FactReport>,
    pub issuer_public_key: String,
}

impl VerificationReport {
    /// Every check passed and no fact is anything but valid.
    pub fn all_green(&self) -> bool {
        self.hash_match
            && self.anchored
            && self.inclusion_proof_valid
            && self.chain_valid
            && self.notary_signature_valid
            && self.notary_signature_anchored
            && self.facts.iter().all(|f| f.status == FactStatus::Valid && f.anchored)
    }
}

impl Vault {
    /// `reference` is a content id (`sha256-…`) or a share UUID.
    pub fn verify_public(&self, reference: &str) -> Result<VerificationReport, OrchestrateError> {
        let mut report = VerificationReport {
            reference: reference.to_string(),
            document_id: None,
            content_id: None,
            hash_match: false,
            anchored: false,
            block_index: None,
            inclusion_proof: None,
            inclusion_proof_valid: false,
            chain_valid: matches!(self.ledger.verify(), ChainVerdict::Ok { .. }),
            notary_signature_valid: false,
            notary_signature_anchored: false,
            facts: Vec::new(),
            issuer_public_key: self.issuer_public_key(),
        };
        let doc: Option<String> = if let Ok(id) = reference.parse::<ContentId>() {
            self.db
                .conn()
                .query_row("SELECT id FROM documents WHERE content_id = ?1", [id.as_str()], |r| r.get(0))
                .optional()?
        } else {
            match self.share(reference) {
                Ok(link) => Some(link.document_id),
                Err(OrchestrateError::NotFound(_)) => None,
                Err(e) => return Err(e),
            }
        };
        let Some(doc) = doc else {
            return Ok(report);
        };
        let view = self.document_view(&doc)?;
        report.document_id = Some(doc.clone());
        if let Some(cid) = view.content_id.as_deref() {
            let cid: ContentId = cid.parse()?;
            // `get` re-hashes the blob; any mismatch or missing blob is a miss.
            report.hash_match = self.cas.get(&cid).is_ok();
            let hex = cid.hex();
            report.anchored = self.ledger.is_anchored(hex);
            report.block_index = view.anchor_block;
            if let Some(proof) = self.ledger.prove(hex) {
                report.inclusion_proof_valid = verify_inclusion(&proof, hex, &self.ledger.headers());
                report.inclusion_proof = Some(proof);
            }
            report.content_id = Some(cid.to_string());
        }
        if let Some(record) = self.notarization_record(&doc)? {
            if let Some(vk) = self.notary_public_key(&record.notary_id)? {
                report.notary_signature_valid = verify_notarization(&record, &vk);
            }
            report.notary_signature_anchored =
                record.signature_hash.as_deref().is_some_and(|h| self.ledger.is_anchored(h));
        }
        report.facts = self.facts_where("document_id", &doc)?.iter().map(|f| self.fact_report(f)).collect();
        Ok(report)
    }
}
