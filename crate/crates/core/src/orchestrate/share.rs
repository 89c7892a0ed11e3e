//! Share links: UUID grants that reveal chosen zones of a completed document.

use std::collections::BTreeSet;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use chrono::{DateTime, Utc};
use rusqlite::{params, OptionalExtension};
use serde::{Deserialize, Serialize};

use super::auth::Principal;
use super::state::DocumentState;
use super::vault::Vault;
use super::verify::FactReport;
use super::OrchestrateError;
use crate::anchor::{BlockHeader, InclusionProof};
use crate::obfuscate::{deobfuscate, ZoneKeyRecord};
use crate::raster::RasterImage;
use crate::store::ContentId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ShareMode {
    /// Resolvable up to and including `until`.
    Until { until: DateTime<Utc> },
    MaxAccesses { max_accesses: u32 },
    Indefinite,
}

impl ShareMode {
    fn column(&self) -> &'static str {
        match self {
            ShareMode::Until { .. } => "until",
            ShareMode::MaxAccesses { .. } => "max_accesses",
            ShareMode::Indefinite => "indefinite",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShareLink {
    pub uuid: String,
    pub document_id: String,
    pub zones: BTreeSet<u32>,
    #[serde(flatten)]
    pub mode: ShareMode,
    pub accesses_used: u32,
    pub created_at: DateTime<Utc>,
    pub active: bool,
    pub url: String,
    /// Text to encode in a QR code; the URL itself.
    pub qr_payload: String,
}

/// Public bundle returned by a successful resolve. Everything needed to
/// check the document independently: the stored blob, its content id and
/// an inclusion proof against the listed headers.
#[derive(Debug, Clone, Serialize)]
pub struct ShareView {
    pub uuid: String,
    pub document_id: String,
    pub document_type: Option<String>,
    pub content_id: String,
    /// Base64 PNG exactly as held in the content store.
    pub obfuscated_png: String,
    /// Base64 PNG with the shared zones restored.
    pub revealed_png: String,
    pub revealed_zones: Vec<u32>,
    pub field_names: Vec<String>,
    pub facts: Vec<FactReport>,
    pub anchor_proof: Option<InclusionProof>,
    pub headers: Vec<BlockHeader>,
    pub accesses_used: u32,
}

fn row_to_link(base_url: &str, r: &rusqlite::Row<'_>) -> rusqlite::Result<ShareLink> {
    let uuid: String = r.get(0)?;
    let zones: String = r.get(2)?;
    let mode: String = r.get(3)?;
    let mode = match mode.as_str() {
        "until" => ShareMode::Until {
            until: DateTime::from_timestamp_millis(r.get(4)?).unwrap_or_default(),
        },
        "max_accesses" => ShareMode::MaxAccesses {
            max_accesses: r.get(5)?,
        },
        _ => ShareMode::Indefinite,
    };
    let url = format!("{}/share/{uuid}", base_url.trim_end_matches('/'));
    Ok(ShareLink {
        document_id: r.get(1)?,
        zones: serde_json::from_str(&zones).unwrap_or_default(),
        mode,
        accesses_used: r.get(6)?,
        created_at: DateTime::from_timestamp_millis(r.get(7)?).unwrap_or_default(),
        active: r.get(8)?,
        qr_payload: url.clone(),
        url,
        uuid,
    })
}

const LINK_COLUMNS: &str =
    "uuid, document_id, zones, mode, until_ms, max_accesses, accesses_used, created_at, active";

impl Vault {
    pub fn create_share(
        &self,
        owner: &Principal,
        doc: &str,
        zones: &BTreeSet<u32>,
        mode: ShareMode,
    ) -> Result<ShareLink, OrchestrateError> {
        if self.owner_of(doc)? != owner.user_id {
            return Err(OrchestrateError::Unauthorized(format!("not the owner of {doc}")));
        }
        let state = self.state_of(doc)?;
        if state != DocumentState::Completed {
            return Err(OrchestrateError::StateViolation(format!("document is {state}, not COMPLETED")));
        }
        if zones.is_empty() {
            return Err(OrchestrateError::InvalidZone("no zones selected".into()));
        }
        let master = self.master_key(doc, &owner.keystore_token())?;
        if let Some(bad) = zones.iter().find(|z| master.record(**z).is_none()) {
            return Err(OrchestrateError::InvalidZone(format!("zone {bad} is unknown or pruned")));
        }
        match mode {
            ShareMode::MaxAccesses { max_accesses: 0 } => {
                return Err(OrchestrateError::InvalidInput("max_accesses must be at least 1".into()))
            }
            ShareMode::Until { until } if until <= self.clock.now() => {
                return Err(OrchestrateError::InvalidInput("expiry is in the past".into()))
            }
            _ => {}
        }
        let uuid = uuid::Uuid::new_v4().to_string();
        let (until_ms, max) = match mode {
            ShareMode::Until { until } => (Some(until.timestamp_millis()), None),
            ShareMode::MaxAccesses { max_accesses } => (None, Some(max_accesses)),
            ShareMode::Indefinite => (None, None),
        };
        self.db.conn().execute(
            "INSERT INTO shares (uuid, document_id, owner_id, zones, mode, until_ms, max_accesses, created_at)
             VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8)",
            params![
                uuid,
                doc,
                owner.user_id,
                serde_json::to_string(zones).expect("zone set serializes"),
                mode.column(),
                until_ms,
                max,
                self.clock.now().timestamp_millis()
            ],
        )?;
        self.event(Some(doc), "share_created", format!("{uuid} zones {zones:?} mode {}", mode.column()))?;
        self.share(&uuid)
    }

    /// Looks a link up without touching its counter.
    pub fn share(&self, uuid: &str) -> Result<ShareLink, OrchestrateError> {
        let base = self.cfg.base_url.clone();
        self.db
            .conn()
            .query_row(&format!("SELECT {LINK_COLUMNS} FROM shares WHERE uuid = ?1"), [uuid], |r| {
                row_to_link(&base, r)
            })
            .optional()?
            .ok_or_else(|| OrchestrateError::NotFound(format!("share {uuid}")))
    }

    pub fn shares_for(&self, owner: &Principal, doc: &str) -> Result<Vec<ShareLink>, OrchestrateError> {
        if self.owner_of(doc)? != owner.user_id {
            return Err(OrchestrateError::Unauthorized(format!("not the owner of {doc}")));
        }
        let base = self.cfg.base_url.clone();
        let c = self.db.conn();
        let mut st = c.prepare(&format!(
            "SELECT {LINK_COLUMNS} FROM shares WHERE document_id = ?1 ORDER BY created_at, uuid"
        ))?;
        let links = st.query_map([doc], |r| row_to_link(&base, r))?.collect::<Result<_, _>>()?;
        Ok(links)
    }

    /// Counts one access if the link is live, then renders the view.
    /// The check and the increment are a single conditional UPDATE, so
    /// concurrent resolves never exceed the access cap.
    pub fn resolve_share(&self, uuid: &str) -> Result<ShareView, OrchestrateError> {
        let now = self.clock.now().timestamp_millis();
        let changed = self.db.conn().execute(
            "UPDATE shares SET accesses_used = accesses_used + 1
             WHERE uuid = ?1 AND active = 1
               AND (mode != 'max_accesses' OR accesses_used < max_accesses)
               AND (mode != 'until' OR ?2 <= until_ms)",
            params![uuid, now],
        )?;
        let link = self.share(uuid)?;
        if changed == 0 {
            return Err(OrchestrateError::Expired(format!("share {uuid}")));
        }
        self.render_share(&link)
    }

    fn render_share(&self, link: &ShareLink) -> Result<ShareView, OrchestrateError> {
        let doc = &link.document_id;
        let view = self.document_view(doc)?;
        let content: ContentId = view
            .content_id
            .as_deref()
            .ok_or_else(|| OrchestrateError::Internal("completed document without content".into()))?
            .parse()?;
        let blob = self.cas.get(&content)?;
        let image = RasterImage::decode_png(&blob).map_err(|e| OrchestrateError::Internal(e.to_string()))?;
        let master = self.system_master_key(doc)?;
        // Zones pruned after the link was minted stay hidden.
        let records: Vec<ZoneKeyRecord> = link.zones.iter().filter_map(|z| master.record(*z).cloned()).collect();
        let revealed = deobfuscate(&image, &records)?;
        let facts = self.facts_where("document_id", doc)?.iter().map(|f| self.fact_report(f)).collect();
        Ok(ShareView {
            uuid: link.uuid.clone(),
            document_id: doc.clone(),
            document_type: view.document_type,
            content_id: content.to_string(),
            obfuscated_png: B64.encode(&blob),
            revealed_png: B64.encode(revealed.encode_png()),
            revealed_zones: records.iter().map(|r| r.zone_id).collect(),
            field_names: view.fields.into_iter().map(|f| f.name).collect(),
            facts,
            anchor_proof: self.ledger.prove(content.hex()),
            headers: self.ledger.headers(),
            accesses_used: link.accesses_used,
        })
    }

    /// Deactivates a link. Revoking twice is fine.
    pub fn revoke_share(&self, owner: &Principal, uuid: &str) -> Result<(), OrchestrateError> {
        let link = self.share(uuid)?;
        if self.owner_of(&link.document_id)? != owner.user_id {
            return Err(OrchestrateError::Unauthorized("not the owner of this share".into()));
        }
        self.db.conn().execute("UPDATE shares SET active = 0 WHERE uuid = ?1", [uuid])?;
        self.event(Some(&link.document_id), "share_revoked", uuid.to_string())
    }
}
