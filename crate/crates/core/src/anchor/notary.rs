//! Notary review: detached signature over the document hash and a
//! value-free metadata summary, with the signature hash anchored.

use std::collections::BTreeMap;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use ed25519_dalek::{Signature, Signer, SigningKey, Verifier, VerifyingKey};
use serde::{Deserialize, Serialize};

use super::entry::{EntryDraft, EntryKind};
use super::ledger::Ledger;
use super::AnchorError;
use crate::extract::ExtractionResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NotarizationStatus {
    Awaiting,
    Started,
    Approved,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NotaryDecision {
    /// Field name to corrected text. Unknown names add a field the
    /// extractor missed.
    Approve { corrections: BTreeMap<String, String> },
    Reject { reason: String },
}

/// The persisted outcome of a review. Corrected values are not kept here,
/// only the names of the fields that were corrected.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NotarizationRecord {
    pub document_id: String,
    /// Hex SHA-256 of the original document bytes.
    pub document_hash: String,
    pub notary_id: String,
    pub corrected_fields: Vec<String>,
    /// Canonical JSON that was signed along with the hash.
    pub metadata: String,
    /// Base64 Ed25519 signature over `document_hash ‖ metadata`.
    pub signature: Option<String>,
    pub signature_hash: Option<String>,
    pub anchor_entry: Option<String>,
    pub status: NotarizationStatus,
    pub reason: Option<String>,
}

/// Final field values after applying corrections to the extractor output.
pub fn corrected_values(extraction: &ExtractionResult, corrections: &BTreeMap<String, String>) -> BTreeMap<String, String> {
    let mut out: BTreeMap<String, String> = extraction.fields().map(|f| (f.name.clone(), f.text.clone())).collect();
    for (k, v) in corrections {
        out.insert(k.clone(), v.clone());
    }
    out
}

/// Metadata bound into the signature. Holds a digest of the final field
/// values rather than the values themselves.
pub fn notarization_metadata(
    document_id: &str,
    extraction: &ExtractionResult,
    final_fields: &BTreeMap<String, String>,
    corrected: &[String],
    notary_id: &str,
) -> String {
    let fields_json = crate::canonical_json(&serde_json::to_value(final_fields).expect("map serializes"));
    crate::canonical_json(&serde_json::json!({
        "document_id": document_id,
        "document_type": extraction.document_type,
        "field_names": final_fields.keys().collect::<Vec<_>>(),
        "fields_digest": crate::sha256_hex(fields_json.as_bytes()),
        "corrected_fields": corrected,
        "notary_id": notary_id,
    }))
}

fn signed_message(document_hash: &str, metadata: &str) -> Vec<u8> {
    let mut m = hex::decode(document_hash).unwrap_or_default();
    m.extend_from_slice(metadata.as_bytes());
    m
}

/// Applies a notary decision. Approval signs and anchors
/// SHA-256(signature); rejection anchors nothing. Returns the record and,
/// on approval, the corrected field values for downstream use.
#[allow(clippy::too_many_arguments)]
pub fn notarize(
    current: NotarizationStatus,
    document_id: &str,
    document_hash: &str,
    extraction: &ExtractionResult,
    notary_id: &str,
    key: &SigningKey,
    decision: NotaryDecision,
    ledger: &Ledger,
) -> Result<(NotarizationRecord, Option<BTreeMap<String, String>>), AnchorError> {
    if !matches!(current, NotarizationStatus::Awaiting | NotarizationStatus::Started) {
        return Err(AnchorError::StateViolation(format!(
            "document {document_id} is {current:?}, expected awaiting or started"
        )));
    }
    if !super::entry::valid_hash_hex(document_hash) {
        return Err(AnchorError::InvalidEntry(format!("bad document hash {document_hash:?}")));
    }
    match decision {
        NotaryDecision::Reject { reason } => {
            let final_fields = corrected_values(extraction, &BTreeMap::new());
            Ok((
                NotarizationRecord {
                    document_id: document_id.to_string(),
                    document_hash: document_hash.to_string(),
                    notary_id: notary_id.to_string(),
                    corrected_fields: Vec::new(),
                    metadata: notarization_metadata(document_id, extraction, &final_fields, &[], notary_id),
                    signature: None,
                    signature_hash: None,
                    anchor_entry: None,
                    status: NotarizationStatus::Rejected,
                    reason: Some(reason),
                },
                None,
            ))
        }
        NotaryDecision::Approve { corrections } => {
            let final_fields = corrected_values(extraction, &corrections);
            let corrected: Vec<String> = corrections.keys().cloned().collect();
            let metadata = notarization_metadata(document_id, extraction, &final_fields, &corrected, notary_id);
            let sig = key.sign(&signed_message(document_hash, &metadata)).to_bytes();
            let sig_hash = crate::sha256_hex(&sig);
            let receipt = ledger.submit(EntryDraft::public(EntryKind::NotarySignature, &sig_hash, notary_id))?;
            Ok((
                NotarizationRecord {
                    document_id: document_id.to_string(),
                    document_hash: document_hash.to_string(),
                    notary_id: notary_id.to_string(),
                    corrected_fields: corrected,
                    metadata,
                    signature: Some(B64.encode(sig)),
                    signature_hash: Some(sig_hash),
                    anchor_entry: Some(receipt.entry_id),
                    status: NotarizationStatus::Approved,
                    reason: None,
                },
                Some(final_fields),
            ))
        }
    }
}

/// True iff the record is approved and its signature verifies under `vk`.
pub fn verify_notarization(record: &NotarizationRecord, vk: &VerifyingKey) -> bool {
    if record.status != NotarizationStatus::Approved {
        return false;
    }
    let Some(sig) = record
        .signature
        .as_ref()
        .and_then(|s| B64.decode(s).ok())
        .and_then(|b| Signature::from_slice(&b).ok())
    else {
        return false;
    };
    if record.signature_hash.as_deref() != Some(crate::sha256_hex(&sig.to_bytes()).as_str()) {
        return false;
    }
    vk.verify(&signed_message(&record.document_hash, &record.metadata), &sig).is_ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::ManualClock;
    use crate::extract::{ExtractedField, ExtractedPage};
    use crate::obfuscate::wire::Coordinates;
    use std::sync::Arc;

    fn extraction() -> ExtractionResult {
        let f = |name: &str, text: &str| ExtractedField {
            name: name.into(),
            text: text.into(),
            sensitive: true,
            confidence_score: 0.95,
            coordinates: Coordinates { start_x: 0, start_y: 0, end_x: 10, end_y: 10 },
        };
        ExtractionResult {
            document_type: "id_card".into(),
            pages: vec![ExtractedPage {
                id: "0".into(),
                fields: vec![f("cnp", "1960101400011"), f("surname", "POPESCU")],
            }],
        }
    }

    fn setup() -> (Ledger, SigningKey) {
        (
            Ledger::in_memory(Arc::new(ManualClock::at_millis(0))),
            SigningKey::from_bytes(&[3u8; 32]),
        )
    }

    #[test]
    fn approve_signs_and_anchors_signature_hash() {
        let (ledger, key) = setup();
        let dh = "ab".repeat(32);
        let (rec, fields) = notarize(
            NotarizationStatus::Started,
            "doc",
            &dh,
            &extraction(),
            "n1",
            &key,
            NotaryDecision::Approve { corrections: BTreeMap::from([("cnp".to_string(), "5010101400015".to_string())]) },
            &ledger,
        )
        .unwrap();
        assert!(verify_notarization(&rec, &key.verifying_key()));
        assert_eq!(fields.unwrap()["cnp"], "5010101400015");
        ledger.seal().unwrap();
        let sig = B64.decode(rec.signature.as_ref().unwrap()).unwrap();
        assert!(ledger.is_anchored(&crate::sha256_hex(&sig)));
        assert!(!rec.metadata.contains("5010101400015"));
        assert!(!rec.metadata.contains("1960101400011"));
        assert_eq!(rec.corrected_fields, vec!["cnp"]);
    }

    #[test]
    fn reject_emits_no_entry() {
        let (ledger, key) = setup();
        let (rec, fields) = notarize(
            NotarizationStatus::Awaiting,
            "doc",
            &"ab".repeat(32),
            &extraction(),
            "n1",
            &key,
            NotaryDecision::Reject { reason: "blurry".into() },
            &ledger,
        )
        .unwrap();
        assert_eq!(rec.status, NotarizationStatus::Rejected);
        assert!(fields.is_none());
        assert_eq!(ledger.pending_len(), 0);
        assert!(!verify_notarization(&rec, &key.verifying_key()));
    }

    #[test]
    fn wrong_state_is_violation() {
        let (ledger, key) = setup();
        let r = notarize(
            NotarizationStatus::Approved,
            "doc",
            &"ab".repeat(32),
            &extraction(),
            "n1",
            &key,
            NotaryDecision::Reject { reason: "x".into() },
            &ledger,
        );
        assert!(matches!(r, Err(AnchorError::StateViolation(_))));
    }

    #[test]
    fn any_bit_flip_breaks_signature() {
        let (ledger, key) = setup();
        let (rec, _) = notarize(
            NotarizationStatus::Started,
            "doc",
            &"ab".repeat(32),
            &extraction(),
            "n1",
            &key,
            NotaryDecision::Approve { corrections: BTreeMap::new() },
            &ledger,
        )
        .unwrap();
        let vk = key.verifying_key();
        let hash = hex::decode(&rec.document_hash).unwrap();
        for i in 0..hash.len() * 8 {
            let mut h = hash.clone();
            h[i / 8] ^= 1 << (i % 8);
            let t = NotarizationRecord { document_hash: hex::encode(h), ..rec.clone() };
            assert!(!verify_notarization(&t, &vk));
        }
        let meta = rec.metadata.as_bytes();
        for i in 0..meta.len() * 8 {
            let mut m = meta.to_vec();
            m[i / 8] ^= 1 << (i % 8);
            let t = NotarizationRecord { metadata: String::from_utf8_lossy(&m).into_owned(), ..rec.clone() };
            assert!(!verify_notarization(&t, &vk));
        }
    }
}
