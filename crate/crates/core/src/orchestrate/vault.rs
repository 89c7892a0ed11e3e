//! The document service: owns every store and drives the workflow.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::{mpsc, Arc, Mutex};
use std::time::Duration;

use chrono::{DateTime, Utc};
use ed25519_dalek::SigningKey;
use rand::rngs::OsRng;
use rand::RngCore;
use rusqlite::{params, OptionalExtension};
use serde::{Deserialize, Serialize};

use super::auth::{self, Principal};
use super::config::Config;
use super::events::{Event, EventLog};
use super::state::{DocumentState, Step};
use super::{backoff, OrchestrateError, MAX_ATTEMPTS};
use crate::anchor::{
    notarize, EntryDraft, EntryKind, Ledger, MemberKey, NotarizationRecord, NotarizationStatus, NotaryDecision,
    SealerHandle,
};
use crate::clock::{Clock, Sleeper, SystemClock, ThreadSleeper};
use crate::extract::{corpus, extract_document, ExtractionResult, GlyphOcr, OcrEngine, TemplateRegistry};
use crate::facts::{self, Approval, Fact, FactDraft, RevocationRegistry, RuleSet};
use crate::obfuscate::wire::Coordinates;
use crate::obfuscate::{
    derive_root, obfuscate, FaceDetector, LayerSpec, MasterKey, SkinToneDetector, ZoneSpec, SALT_LEN,
};
use crate::raster::{RasterImage, Rect};
use crate::store::{AccessToken, Cas, ContentId, HttpTransport, Keystore, Metadata, PinClient, PinTransport, Scope, StoreError};

const ISSUER_KEY_PATH: &str = "system/fact-issuer";
const OPERATOR_KEY_PATH: &str = "system/ledger-member";

fn master_key_path(doc: &str) -> String {
    format!("documents/{doc}/master-key")
}

fn extraction_path(doc: &str) -> String {
    format!("documents/{doc}/extraction")
}

fn notary_key_path(notary: &str) -> String {
    format!("notaries/{notary}/signing-key")
}

/// Replaceable collaborators.
pub struct VaultDeps {
    pub clock: Arc<dyn Clock>,
    pub sleeper: Arc<dyn Sleeper>,
    pub ocr: Arc<dyn OcrEngine>,
    pub faces: Arc<dyn FaceDetector>,
    /// Overrides the HTTP transport built from the pin config.
    pub pin_transport: Option<Arc<dyn PinTransport>>,
    /// Defaults to the three built-in card templates.
    pub registry: Option<TemplateRegistry>,
}

impl Default for VaultDeps {
    fn default() -> Self {
        Self {
            clock: Arc::new(SystemClock),
            sleeper: Arc::new(ThreadSleeper),
            ocr: Arc::new(GlyphOcr::default()),
            faces: Arc::new(SkinToneDetector::default()),
            pin_transport: None,
            registry: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldMeta {
    pub page_id: String,
    pub name: String,
    pub sensitive: bool,
    pub confidence_score: f64,
    pub flagged: bool,
    pub coordinates: Coordinates,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZoneMeta {
    pub zone_id: u32,
    pub label: String,
    pub coordinates: Coordinates,
}

/// Everything the metadata store knows about a document.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DocumentView {
    pub id: String,
    pub owner_id: String,
    pub description: String,
    pub state: DocumentState,
    pub document_type: Option<String>,
    pub document_hash: String,
    pub content_id: Option<String>,
    pub anchor_block: Option<u64>,
    pub failure: Option<String>,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
    pub fields: Vec<FieldMeta>,
    pub zones: Vec<ZoneMeta>,
    /// Executions per step, successes included.
    pub attempts: BTreeMap<String, u32>,
}

/// What the notary sees while reviewing. Field text is read from the
/// keystore for the response only.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NotaryQueueItem {
    pub document_id: String,
    pub state: DocumentState,
    pub document_type: Option<String>,
    pub description: String,
    pub fields: Vec<NotaryField>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NotaryField {
    pub name: String,
    pub text: String,
    pub confidence_score: f64,
    pub flagged: bool,
    pub coordinates: Coordinates,
}

/// A notary decision as received from the API.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "snake_case", deny_unknown_fields)]
pub enum NotaryReview {
    Approve {
        #[serde(default)]
        corrections: BTreeMap<String, String>,
        /// Corrected field rectangles, by field name.
        #[serde(default)]
        coordinates: BTreeMap<String, Coordinates>,
    },
    Reject {
        reason: String,
    },
}

/// Result of one `advance` call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Advance {
    Progressed(DocumentState),
    /// Waiting on a notary.
    Blocked(DocumentState),
    Retry { state: DocumentState, after: Duration },
    Terminal(DocumentState),
}

enum StepError {
    Transient(String),
    Permanent(String),
}

impl From<OrchestrateError> for StepError {
    fn from(e: OrchestrateError) -> Self {
        match e {
            OrchestrateError::Io(_)
            | OrchestrateError::Db(_)
            | OrchestrateError::Store(StoreError::Retryable(_) | StoreError::Io(_))
            | OrchestrateError::Fact(facts::FactError::Retryable(_))
            | OrchestrateError::Anchor(crate::anchor::AnchorError::Io(_)) => StepError::Transient(e.to_string()),
            other => StepError::Permanent(other.to_string()),
        }
    }
}

impl From<StoreError> for StepError {
    fn from(e: StoreError) -> Self {
        OrchestrateError::from(e).into()
    }
}

impl From<rusqlite::Error> for StepError {
    fn from(e: rusqlite::Error) -> Self {
        StepError::Transient(e.to_string())
    }
}

impl From<std::io::Error> for StepError {
    fn from(e: std::io::Error) -> Self {
        StepError::Transient(e.to_string())
    }
}

fn millis(t: i64) -> DateTime<Utc> {
    DateTime::from_timestamp_millis(t).unwrap_or_default()
}

fn random_bytes<const N: usize>() -> [u8; N] {
    let mut b = [0u8; N];
    OsRng.fill_bytes(&mut b);
    b
}

fn system_token() -> AccessToken {
    AccessToken::new("system", &[Scope::Admin])
}

fn remove_if_present(p: &PathBuf) -> std::io::Result<()> {
    match std::fs::remove_file(p) {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(e),
        _ => Ok(()),
    }
}

pub struct Vault {
    pub(crate) cfg: Config,
    pub(crate) clock: Arc<dyn Clock>,
    sleeper: Arc<dyn Sleeper>,
    pub(crate) db: Metadata,
    pub(crate) cas: Cas,
    pin: Option<PinClient>,
    pub(crate) keystore: Keystore,
    pub(crate) ledger: Arc<Ledger>,
    sealer: Mutex<Option<SealerHandle>>,
    pub(crate) revocations: RevocationRegistry,
    registry: TemplateRegistry,
    ocr: Arc<dyn OcrEngine>,
    faces: Arc<dyn FaceDetector>,
    events: EventLog,
    pub(crate) issuer: SigningKey,
    operator: MemberKey,
    faults: Mutex<HashMap<Step, u32>>,
    /// Documents with a live executor; the flag asks it to run again.
    running: Mutex<HashMap<String, bool>>,
    pub(crate) queue: Mutex<Option<mpsc::Sender<String>>>,
}

impl std::fmt::Debug for Vault {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Vault").field("data_dir", &self.cfg.data_dir).finish_non_exhaustive()
    }
}

impl Drop for Vault {
    fn drop(&mut self) {
        if let Some(s) = self.sealer.lock().expect("sealer lock").take() {
            s.stop();
        }
    }
}

impl Vault {
    pub fn open(cfg: Config, deps: VaultDeps) -> Result<Self, OrchestrateError> {
        cfg.validate()?;
        let passphrase = cfg
            .master_passphrase
            .clone()
            .ok_or_else(|| OrchestrateError::Config("master passphrase missing; set DOCVAULT_MASTER_PASSPHRASE".into()))?;
        std::fs::create_dir_all(&cfg.data_dir)?;
        std::fs::create_dir_all(cfg.staging_dir())?;
        let salt = Keystore::load_or_create_salt(&cfg.keystore_dir())?;
        let master = crate::store::keystore::derive_master_key(&passphrase, &salt, cfg.pbkdf2_iterations);
        let keystore = Keystore::open(&cfg.keystore_dir(), &master, deps.clock.clone())?;
        let db = Metadata::open(&cfg.metadata_path())?;
        let cas = Cas::open(&cfg.cas_dir())?;
        let ledger = Arc::new(Ledger::open(&cfg.ledger_path(), deps.clock.clone())?.with_batch_cap(cfg.batch_cap));
        let sealer = ledger.spawn_sealer(cfg.seal_interval());
        let revocations = RevocationRegistry::open(&cfg.revocations_path())?;
        let pin = match (&deps.pin_transport, &cfg.pin) {
            (Some(t), p) => Some(PinClient::new(
                t.clone(),
                p.as_ref().map_or("", |p| p.token.as_str()),
                deps.sleeper.clone(),
            )),
            (None, Some(p)) => Some(PinClient::new(
                Arc::new(HttpTransport::new(&p.url, Duration::from_secs(p.timeout_secs))?),
                &p.token,
                deps.sleeper.clone(),
            )),
            (None, None) => None,
        };
        let registry = match deps.registry {
            Some(r) => r,
            None => corpus::registry(deps.faces.as_ref()).map_err(|e| OrchestrateError::Internal(e.to_string()))?,
        };
        let sys = system_token();
        let issuer = SigningKey::from_bytes(&Self::load_or_create_secret(&keystore, ISSUER_KEY_PATH, &sys)?);
        let operator = MemberKey::from_bytes("operator", Self::load_or_create_secret(&keystore, OPERATOR_KEY_PATH, &sys)?);
        let events = EventLog::open(&cfg.logs_dir())?;
        let vault = Self {
            cfg,
            clock: deps.clock,
            sleeper: deps.sleeper,
            db,
            cas,
            pin,
            keystore,
            ledger,
            sealer: Mutex::new(Some(sealer)),
            revocations,
            registry,
            ocr: deps.ocr,
            faces: deps.faces,
            events,
            issuer,
            operator,
            faults: Mutex::new(HashMap::new()),
            running: Mutex::new(HashMap::new()),
            queue: Mutex::new(None),
        };
        for hash in vault.all_fact_hashes()? {
            vault.revocations.note_issued(&hash);
        }
        Ok(vault)
    }

    fn load_or_create_secret(ks: &Keystore, path: &str, token: &AccessToken) -> Result<[u8; 32], OrchestrateError> {
        if ks.contains(path) {
            let v = ks.get(path, token)?;
            return v
                .as_slice()
                .try_into()
                .map_err(|_| OrchestrateError::Internal(format!("{path} is not 32 bytes")));
        }
        let fresh = random_bytes::<32>();
        ks.put(path, &fresh, &[Scope::Admin], token)?;
        Ok(fresh)
    }

    pub fn config(&self) -> &Config {
        &self.cfg
    }

    pub fn ledger(&self) -> &Arc<Ledger> {
        &self.ledger
    }

    pub fn keystore(&self) -> &Keystore {
        &self.keystore
    }

    pub fn cas(&self) -> &Cas {
        &self.cas
    }

    pub fn metadata(&self) -> &Metadata {
        &self.db
    }

    pub fn revocations(&self) -> &RevocationRegistry {
        &self.revocations
    }

    pub fn event_log_path(&self) -> PathBuf {
        self.events.path().to_path_buf()
    }

    pub fn issuer_public_key(&self) -> String {
        hex::encode(self.issuer.verifying_key().to_bytes())
    }

    pub fn now(&self) -> DateTime<Utc> {
        self.clock.now()
    }

    /// Makes the next `count` executions of `step` fail transiently.
    pub fn inject_faults(&self, step: Step, count: u32) {
        self.faults.lock().expect("fault lock").insert(step, count);
    }

    fn staged(&self, doc: &str, kind: &str) -> PathBuf {
        self.cfg.staging_dir().join(format!("{doc}.{kind}.png"))
    }

    pub(crate) fn event(&self, doc: Option<&str>, kind: &str, detail: String) -> Result<(), OrchestrateError> {
        self.events.record(
            &self.db,
            Event {
                document_id: doc.map(str::to_string),
                at: self.clock.now(),
                kind: kind.to_string(),
                detail,
            },
        )
    }

    // ---- users -------------------------------------------------------

    pub fn register_user(&self, username: &str, password: &str, scopes: &[Scope]) -> Result<Principal, OrchestrateError> {
        let p = auth::create_user(&self.db, username, password, scopes, self.cfg.password_iterations, self.clock.now())?;
        self.event(None, "user_created", format!("user {} scopes {:?}", p.user_id, p.scopes))?;
        Ok(p)
    }

    pub fn login(&self, username: &str, password: &str) -> Result<(String, Principal), OrchestrateError> {
        auth::login(&self.db, username, password, self.cfg.session_ttl_secs, self.clock.now())
    }

    pub fn authenticate(&self, token: &str) -> Result<Principal, OrchestrateError> {
        auth::authenticate(&self.db, token, self.clock.now())
    }

    /// Registers `user_id` as a notary and generates its signing key.
    pub fn register_notary(&self, admin: &Principal, user_id: &str) -> Result<String, OrchestrateError> {
        if !admin.is_admin() {
            return Err(OrchestrateError::Unauthorized("admin scope required".into()));
        }
        let user = auth::find_user(&self.db, user_id)?.ok_or_else(|| OrchestrateError::NotFound(format!("user {user_id}")))?;
        if !user.scopes.contains(&Scope::Notary) {
            return Err(OrchestrateError::InvalidInput("user lacks the notary scope".into()));
        }
        if let Some(id) = self.notary_id_for(user_id)? {
            return Ok(id);
        }
        let id = format!("notary-{}", uuid::Uuid::new_v4());
        let secret = random_bytes::<32>();
        let vk = SigningKey::from_bytes(&secret).verifying_key();
        self.keystore.put(&notary_key_path(&id), &secret, &[Scope::Admin], &system_token())?;
        self.db.conn().execute(
            "INSERT INTO notaries (id, user_id, public_key) VALUES (?1, ?2, ?3)",
            params![id, user_id, hex::encode(vk.to_bytes())],
        )?;
        self.event(None, "notary_registered", format!("notary {id} for user {user_id}"))?;
        Ok(id)
    }

    pub fn notary_id_for(&self, user_id: &str) -> Result<Option<String>, OrchestrateError> {
        Ok(self
            .db
            .conn()
            .query_row("SELECT id FROM notaries WHERE user_id = ?1", [user_id], |r| r.get(0))
            .optional()?)
    }

    pub fn notary_public_key(&self, notary_id: &str) -> Result<Option<ed25519_dalek::VerifyingKey>, OrchestrateError> {
        let hex_key: Option<String> = self
            .db
            .conn()
            .query_row("SELECT public_key FROM notaries WHERE id = ?1", [notary_id], |r| r.get(0))
            .optional()?;
        Ok(hex_key
            .and_then(|h| hex::decode(h).ok())
            .and_then(|b| <[u8; 32]>::try_from(b).ok())
            .and_then(|b| ed25519_dalek::VerifyingKey::from_bytes(&b).ok()))
    }

    // ---- documents ---------------------------------------------------

    /// Validates and stages an upload, then moves it to RECOGNITION_STARTED.
    /// A repeated idempotency key returns the earlier document.
    pub fn create_document(
        &self,
        owner: &Principal,
        png: &[u8],
        description: &str,
        idempotency_key: Option<&str>,
    ) -> Result<(String, DocumentState), OrchestrateError> {
        owner.require(Scope::Owner)?;
        if let Some(key) = idempotency_key {
            if let Some(found) = self.by_idempotency(&owner.user_id, key)? {
                return Ok(found);
            }
        }
        RasterImage::decode_png(png).map_err(|e| OrchestrateError::InvalidImage(e.to_string()))?;
        let id = uuid::Uuid::new_v4().to_string();
        let staged = self.staged(&id, "original");
        std::fs::write(&staged, png)?;
        let now = self.clock.now().timestamp_millis();
        let inserted = self.db.conn().execute(
            "INSERT INTO documents (id, owner_id, description, idempotency_key, state, document_hash, created_at, updated_at)
             VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?7)",
            params![
                id,
                owner.user_id,
                description,
                idempotency_key,
                DocumentState::Created.as_str(),
                crate::sha256_hex(png),
                now
            ],
        );
        if let Err(e) = inserted {
            let _ = std::fs::remove_file(&staged);
            if let (Some(key), rusqlite::Error::SqliteFailure(f, _)) = (idempotency_key, &e) {
                if f.code == rusqlite::ErrorCode::ConstraintViolation {
                    if let Some(found) = self.by_idempotency(&owner.user_id, key)? {
                        return Ok(found);
                    }
                }
            }
            return Err(e.into());
        }
        self.db.conn().execute(
            "INSERT INTO jobs (document_id, step, attempts) VALUES (?1, ?2, 0)",
            params![id, Step::Extract.as_str()],
        )?;
        self.event(Some(&id), "created", format!("owner {}", owner.user_id))?;
        self.transition(&id, DocumentState::Created, DocumentState::RecognitionStarted)?;
        self.kick(&id);
        Ok((id, DocumentState::RecognitionStarted))
    }

    fn by_idempotency(&self, owner: &str, key: &str) -> Result<Option<(String, DocumentState)>, OrchestrateError> {
        let row: Option<(String, String)> = self
            .db
            .conn()
            .query_row(
                "SELECT id, state FROM documents WHERE owner_id = ?1 AND idempotency_key = ?2",
                params![owner, key],
                |r| Ok((r.get(0)?, r.get(1)?)),
            )
            .optional()?;
        Ok(row.map(|(id, s)| (id, DocumentState::parse(&s).unwrap_or(DocumentState::Failed))))
    }

    pub fn state_of(&self, doc: &str) -> Result<DocumentState, OrchestrateError> {
        let s: Option<String> = self
            .db
            .conn()
            .query_row("SELECT state FROM documents WHERE id = ?1", [doc], |r| r.get(0))
            .optional()?;
        let s = s.ok_or_else(|| OrchestrateError::NotFound(format!("document {doc}")))?;
        DocumentState::parse(&s).ok_or_else(|| OrchestrateError::Internal(format!("unknown state {s}")))
    }

    pub(crate) fn owner_of(&self, doc: &str) -> Result<String, OrchestrateError> {
        self.db
            .conn()
            .query_row("SELECT owner_id FROM documents WHERE id = ?1", [doc], |r| r.get(0))
            .optional()?
            .ok_or_else(|| OrchestrateError::NotFound(format!("document {doc}")))
    }

    fn transition(&self, doc: &str, from: DocumentState, to: DocumentState) -> Result<(), OrchestrateError> {
        if !from.can_transition(to) {
            return Err(OrchestrateError::StateViolation(format!("{from} -> {to} is not an edge")));
        }
        let n = self.db.conn().execute(
            "UPDATE documents SET state = ?1, updated_at = ?2 WHERE id = ?3 AND state = ?4",
            params![to.as_str(), self.clock.now().timestamp_millis(), doc, from.as_str()],
        )?;
        if n != 1 {
            return Err(OrchestrateError::StateViolation(format!("document {doc} is no longer {from}")));
        }
        self.event(Some(doc), "state", format!("{from} -> {to}"))?;
        Ok(())
    }

    /// Moves a non-terminal document to FAILED and cleans up.
    fn fail(&self, doc: &str, cause: &str) -> Result<(), OrchestrateError> {
        let from = self.state_of(doc)?;
        self.transition(doc, from, DocumentState::Failed)?;
        self.db
            .conn()
            .execute("UPDATE documents SET failure = ?1 WHERE id = ?2", params![cause, doc])?;
        self.event(Some(doc), "failed", cause.to_string())?;
        self.cleanup_terminal(doc)
    }

    /// Drops job drafts and every staged intermediate.
    fn cleanup_terminal(&self, doc: &str) -> Result<(), OrchestrateError> {
        self.db
            .conn()
            .execute("UPDATE jobs SET drafts = NULL, next_retry_ms = NULL WHERE document_id = ?1", [doc])?;
        for kind in ["original", "normalized", "obfuscated"] {
            remove_if_present(&self.staged(doc, kind))?;
        }
        match self.keystore.purge(&extraction_path(doc), &system_token()) {
            Ok(()) | Err(StoreError::NotFound(_)) => Ok(()),
            Err(e) => Err(e.into()),
        }
    }

    pub fn get_document(&self, who: &Principal, doc: &str) -> Result<DocumentView, OrchestrateError> {
        let view = self.document_view(doc)?;
        if view.owner_id != who.user_id && !who.has(Scope::Notary) {
            return Err(OrchestrateError::Unauthorized(format!("not the owner of {doc}")));
        }
        Ok(view)
    }

    pub fn list_documents(&self, who: &Principal) -> Result<Vec<DocumentView>, OrchestrateError> {
        let ids: Vec<String> = {
            let c = self.db.conn();
            let mut st = c.prepare("SELECT id FROM documents WHERE owner_id = ?1 ORDER BY created_at, id")?;
            let rows = st.query_map([&who.user_id], |r| r.get(0))?.collect::<Result<Vec<String>, _>>()?;
            rows
        };
        ids.iter().map(|id| self.document_view(id)).collect()
    }

    pub fn document_view(&self, doc: &str) -> Result<DocumentView, OrchestrateError> {
        let c = self.db.conn();
        let mut view = c
            .query_row(
                "SELECT owner_id, description, state, document_type, document_hash, content_id, anchor_block, failure,
                        created_at, updated_at FROM documents WHERE id = ?1",
                [doc],
                |r| {
                    Ok(DocumentView {
                        id: doc.to_string(),
                        owner_id: r.get(0)?,
                        description: r.get(1)?,
                        state: DocumentState::parse(&r.get::<_, String>(2)?).unwrap_or(DocumentState::Failed),
                        document_type: r.get(3)?,
                        document_hash: r.get(4)?,
                        content_id: r.get(5)?,
                        anchor_block: r.get::<_, Option<i64>>(6)?.map(|b| b as u64),
                        failure: r.get(7)?,
                        created_at: millis(r.get(8)?),
                        updated_at: millis(r.get(9)?),
                        fields: Vec::new(),
                        zones: Vec::new(),
                        attempts: BTreeMap::new(),
                    })
                },
            )
            .optional()?
            .ok_or_else(|| OrchestrateError::NotFound(format!("document {doc}")))?;
        let mut st = c.prepare(
            "SELECT page_id, name, sensitive, confidence, flagged, start_x, start_y, end_x, end_y
             FROM fields WHERE document_id = ?1 ORDER BY page_id, rowid",
        )?;
        view.fields = st
            .query_map([doc], |r| {
                Ok(FieldMeta {
                    page_id: r.get(0)?,
                    name: r.get(1)?,
                    sensitive: r.get(2)?,
                    confidence_score: r.get(3)?,
                    flagged: r.get(4)?,
                    coordinates: Coordinates {
                        start_x: r.get(5)?,
                        start_y: r.get(6)?,
                        end_x: r.get(7)?,
                        end_y: r.get(8)?,
                    },
                })
            })?
            .collect::<Result<_, _>>()?;
        let mut st = c.prepare(
            "SELECT zone_id, label, start_x, start_y, end_x, end_y FROM zones WHERE document_id = ?1 ORDER BY zone_id",
        )?;
        view.zones = st
            .query_map([doc], |r| {
                Ok(ZoneMeta {
                    zone_id: r.get(0)?,
                    label: r.get(1)?,
                    coordinates: Coordinates {
                        start_x: r.get(2)?,
                        start_y: r.get(3)?,
                        end_x: r.get(4)?,
                        end_y: r.get(5)?,
                    },
                })
            })?
            .collect::<Result<_, _>>()?;
        let mut st = c.prepare("SELECT step, attempts FROM step_attempts WHERE document_id = ?1")?;
        view.attempts = st
            .query_map([doc], |r| Ok((r.get::<_, String>(0)?, r.get::<_, u32>(1)?)))?
            .collect::<Result<_, _>>()?;
        Ok(view)
    }

    // ---- workflow ----------------------------------------------------

    /// Hands `doc` to the worker pool if one is running.
    pub fn kick(&self, doc: &str) {
        if let Some(tx) = self.queue.lock().expect("queue lock").as_ref() {
            let _ = tx.send(doc.to_string());
        }
    }

    fn notarization_approved(&self, doc: &str) -> Result<bool, OrchestrateError> {
        let status: Option<String> = self
            .db
            .conn()
            .query_row("SELECT status FROM notarizations WHERE document_id = ?1", [doc], |r| r.get(0))
            .optional()?;
        Ok(status.as_deref() == Some("approved"))
    }

    /// Executes at most one workflow step.
    pub fn advance(&self, doc: &str) -> Result<Advance, OrchestrateError> {
        let state = self.state_of(doc)?;
        if state.is_terminal() {
            return Ok(Advance::Terminal(state));
        }
        let Some(step) = state.step() else {
            return Ok(Advance::Blocked(state));
        };
        if step == Step::Obfuscate && !self.notarization_approved(doc)? {
            return Ok(Advance::Blocked(state));
        }
        let attempts = self.count_attempt(doc, step)?;
        let injected = {
            let mut f = self.faults.lock().expect("fault lock");
            match f.get_mut(&step) {
                Some(n) if *n > 0 => {
                    *n -= 1;
                    true
                }
                _ => false,
            }
        };
        let result = if injected {
            Err(StepError::Transient(format!("injected {} failure", step.as_str())))
        } else {
            match step {
                Step::Extract => self.step_extract(doc),
                Step::QueueNotary => Ok(()),
                Step::Obfuscate => self.step_obfuscate(doc),
                Step::Upload => self.step_upload(doc),
                Step::Anchor => self.step_anchor(doc),
            }
        };
        match result {
            Ok(()) => {
                let next = state.next().expect("non-terminal state has a successor");
                self.transition(doc, state, next)?;
                self.db.conn().execute(
                    "UPDATE jobs SET step = ?1, attempts = 0, last_error = NULL, next_retry_ms = NULL WHERE document_id = ?2",
                    params![next.step().map_or(next.as_str(), Step::as_str), doc],
                )?;
                if next.is_terminal() {
                    self.cleanup_terminal(doc)?;
                }
                Ok(Advance::Progressed(next))
            }
            Err(StepError::Transient(msg)) => {
                self.record_error(doc, step, &msg)?;
                if attempts >= MAX_ATTEMPTS {
                    self.fail(doc, &format!("{} failed after {attempts} attempts: {msg}", step.as_str()))?;
                    return Ok(Advance::Terminal(DocumentState::Failed));
                }
                let after = backoff(attempts);
                self.db.conn().execute(
                    "UPDATE jobs SET next_retry_ms = ?1 WHERE document_id = ?2",
                    params![self.clock.now().timestamp_millis() + after.as_millis() as i64, doc],
                )?;
                self.event(Some(doc), "retry", format!("{} attempt {attempts}: {msg}", step.as_str()))?;
                Ok(Advance::Retry { state, after })
            }
            Err(StepError::Permanent(msg)) => {
                self.record_error(doc, step, &msg)?;
                self.fail(doc, &format!("{}: {msg}", step.as_str()))?;
                Ok(Advance::Terminal(DocumentState::Failed))
            }
        }
    }

    fn count_attempt(&self, doc: &str, step: Step) -> Result<u32, OrchestrateError> {
        let c = self.db.conn();
        c.execute(
            "INSERT INTO step_attempts (document_id, step, attempts) VALUES (?1, ?2, 1)
             ON CONFLICT (document_id, step) DO UPDATE SET attempts = attempts + 1",
            params![doc, step.as_str()],
        )?;
        c.execute("UPDATE jobs SET attempts = attempts + 1 WHERE document_id = ?1", [doc])?;
        Ok(c.query_row(
            "SELECT attempts FROM step_attempts WHERE document_id = ?1 AND step = ?2",
            params![doc, step.as_str()],
            |r| r.get(0),
        )?)
    }

    fn record_error(&self, doc: &str, step: Step, msg: &str) -> Result<(), OrchestrateError> {
        let c = self.db.conn();
        c.execute(
            "UPDATE step_attempts SET last_error = ?1 WHERE document_id = ?2 AND step = ?3",
            params![msg, doc, step.as_str()],
        )?;
        c.execute("UPDATE jobs SET last_error = ?1 WHERE document_id = ?2", params![msg, doc])?;
        Ok(())
    }

    /// Advances until the document is terminal or waits on a notary,
    /// sleeping through retry backoff. One executor per document: a
    /// concurrent call just asks the live executor for another pass.
    pub fn run_to_rest(&self, doc: &str) -> Result<DocumentState, OrchestrateError> {
        {
            let mut r = self.running.lock().expect("running lock");
            if let Some(again) = r.get_mut(doc) {
                *again = true;
                drop(r);
                return self.state_of(doc);
            }
            r.insert(doc.to_string(), false);
        }
        loop {
            let res = self.drive(doc);
            let mut r = self.running.lock().expect("running lock");
            if res.is_ok() && r.get(doc) == Some(&true) {
                r.insert(doc.to_string(), false);
                continue;
            }
            r.remove(doc);
            return res;
        }
    }

    fn drive(&self, doc: &str) -> Result<DocumentState, OrchestrateError> {
        loop {
            match self.advance(doc)? {
                Advance::Progressed(_) => {}
                Advance::Retry { after, .. } => self.sleeper.sleep(after),
                Advance::Blocked(s) | Advance::Terminal(s) => return Ok(s),
            }
        }
    }

    /// Documents whose workflow can make progress without a notary.
    pub fn resumable(&self) -> Result<Vec<String>, OrchestrateError> {
        let c = self.db.conn();
        let mut st = c.prepare("SELECT id, state FROM documents ORDER BY created_at")?;
        let rows = st
            .query_map([], |r| Ok((r.get::<_, String>(0)?, r.get::<_, String>(1)?)))?
            .collect::<Result<Vec<_>, _>>()?;
        Ok(rows
            .into_iter()
            .filter(|(_, s)| {
                DocumentState::parse(s).is_some_and(|s| !s.is_terminal() && s != DocumentState::NotarizationAwaiting)
            })
            .map(|(id, _)| id)
            .collect())
    }

    fn load_extraction(&self, doc: &str) -> Result<ExtractionResult, OrchestrateError> {
        let raw = self.keystore.get(&extraction_path(doc), &system_token())?;
        serde_json::from_slice(&raw).map_err(|e| OrchestrateError::Internal(format!("stored extraction: {e}")))
    }

    fn step_extract(&self, doc: &str) -> Result<(), StepError> {
        let png = std::fs::read(self.staged(doc, "original"))?;
        let image = RasterImage::decode_png(&png).map_err(|e| StepError::Permanent(e.to_string()))?;
        let outcome = extract_document(std::slice::from_ref(&image), &self.registry, self.ocr.as_ref());
        if !outcome.result.is_classified() {
            return Err(StepError::Permanent("document matches no registered template".into()));
        }
        let normalized = outcome.normalized.first().ok_or_else(|| StepError::Permanent("no page".into()))?;
        std::fs::write(self.staged(doc, "normalized"), normalized.encode_png())?;
        let json = serde_json::to_vec(&outcome.result).expect("extraction serializes");
        self.keystore
            .put(&extraction_path(doc), &json, &[Scope::Notary], &system_token())?;
        {
            let mut c = self.db.conn();
            let tx = c.transaction()?;
            tx.execute("DELETE FROM fields WHERE document_id = ?1", [doc])?;
            for (pi, page) in outcome.result.pages.iter().enumerate() {
                for f in &page.fields {
                    let flagged = outcome.traces.iter().any(|t| t.page == pi && t.name == f.name && t.flagged);
                    tx.execute(
                        "INSERT INTO fields (document_id, page_id, name, sensitive, confidence, flagged,
                                             start_x, start_y, end_x, end_y)
                         VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10)",
                        params![
                            doc,
                            page.id,
                            f.name,
                            f.sensitive,
                            f.confidence_score,
                            flagged,
                            f.coordinates.start_x,
                            f.coordinates.start_y,
                            f.coordinates.end_x,
                            f.coordinates.end_y
                        ],
                    )?;
                }
            }
            tx.execute(
                "UPDATE documents SET document_type = ?1 WHERE id = ?2",
                params![outcome.result.document_type, doc],
            )?;
            tx.commit()?;
        }
        let values: BTreeMap<String, String> =
            outcome.result.fields().map(|f| (f.name.clone(), f.text.clone())).collect();
        self.store_drafts(doc, &values)?;
        self.event(
            Some(doc),
            "extracted",
            format!(
                "template {} with {} fields, {} flagged",
                outcome.result.document_type,
                values.len(),
                outcome.flagged_fields().count()
            ),
        )?;
        Ok(())
    }

    /// Derives fact drafts and keeps them on the job row. Drafts carry
    /// predicates, never values.
    fn store_drafts(&self, doc: &str, values: &BTreeMap<String, String>) -> Result<usize, OrchestrateError> {
        let owner = self.owner_of(doc)?;
        let derivation = facts::derive_facts(&owner, doc, values, &RuleSet::all(None), self.clock.now());
        let n = derivation.drafts.len();
        self.db.conn().execute(
            "UPDATE jobs SET drafts = ?1 WHERE document_id = ?2",
            params![serde_json::to_string(&derivation.drafts).expect("drafts serialize"), doc],
        )?;
        self.event(
            Some(doc),
            "facts_derived",
            format!(
                "{n} drafts: {}",
                derivation.drafts.iter().map(|d| d.predicate.as_str()).collect::<Vec<_>>().join(",")
            ),
        )?;
        Ok(n)
    }

    fn drafts(&self, doc: &str) -> Result<Vec<FactDraft>, OrchestrateError> {
        let raw: Option<String> = self
            .db
            .conn()
            .query_row("SELECT drafts FROM jobs WHERE document_id = ?1", [doc], |r| r.get(0))
            .optional()?
            .flatten();
        Ok(match raw {
            Some(s) => serde_json::from_str(&s).map_err(|e| OrchestrateError::Internal(e.to_string()))?,
            None => Vec::new(),
        })
    }

    fn notarization(&self, doc: &str) -> Result<Option<NotarizationRecord>, OrchestrateError> {
        let raw: Option<String> = self
            .db
            .conn()
            .query_row("SELECT record FROM notarizations WHERE document_id = ?1", [doc], |r| r.get(0))
            .optional()?;
        raw.map(|s| serde_json::from_str(&s).map_err(|e| OrchestrateError::Internal(e.to_string())))
            .transpose()
    }

    pub fn notarization_record(&self, doc: &str) -> Result<Option<NotarizationRecord>, OrchestrateError> {
        self.notarization(doc)
    }

    /// Signs and anchors every draft not yet issued for `doc`.
    fn issue_facts(&self, doc: &str) -> Result<usize, OrchestrateError> {
        let record = self
            .notarization(doc)?
            .ok_or_else(|| OrchestrateError::StateViolation("no notarization".into()))?;
        let approval = Approval {
            document_id: doc.to_string(),
            notary_id: record.notary_id.clone(),
        };
        let existing: Vec<String> = {
            let c = self.db.conn();
            let mut st = c.prepare("SELECT predicate FROM facts WHERE document_id = ?1")?;
            let rows = st.query_map([doc], |r| r.get(0))?.collect::<Result<Vec<String>, _>>()?;
            rows
        };
        let mut issued = 0;
        for draft in self.drafts(doc)? {
            if existing.contains(&draft.predicate) {
                continue;
            }
            let fact = facts::issue(&draft, Some(&approval), &self.issuer, self.ledger.as_ref(), self.clock.now())?;
            self.db.conn().execute(
                "INSERT INTO facts (fact_hash, document_id, subject, predicate, fact) VALUES (?1, ?2, ?3, ?4, ?5)",
                params![
                    fact.fact_hash,
                    doc,
                    fact.subject,
                    fact.predicate,
                    serde_json::to_string(&fact).expect("fact serializes")
                ],
            )?;
            self.revocations.note_issued(&fact.fact_hash);
            issued += 1;
        }
        Ok(issued)
    }

    fn step_obfuscate(&self, doc: &str) -> Result<(), StepError> {
        let issued = self.issue_facts(doc)?;
        let png = std::fs::read(self.staged(doc, "normalized"))?;
        let image = RasterImage::decode_png(&png).map_err(|e| StepError::Permanent(e.to_string()))?;
        let view = self.document_view(doc)?;
        let (w, h) = (image.width(), image.height());
        let mut labelled: Vec<(String, Rect)> = Vec::new();
        let candidates = view
            .fields
            .iter()
            .filter(|f| f.sensitive)
            .map(|f| (f.name.clone(), Rect::from(f.coordinates)))
            .chain(self.faces.detect(&image).into_iter().enumerate().map(|(i, r)| (format!("face_{i}"), r)));
        for (label, rect) in candidates {
            let rect = rect.clip(w, h);
            if rect.is_empty() || labelled.iter().any(|(_, r)| r.intersects(&rect)) {
                continue;
            }
            labelled.push((label, rect));
        }
        let algorithms = self.cfg.algorithms();
        let zones: Vec<ZoneSpec> = labelled
            .iter()
            .enumerate()
            .map(|(i, (_, rect))| {
                let layers = algorithms.iter().map(|a| LayerSpec::new(*a, random_bytes::<16>().to_vec())).collect();
                ZoneSpec::new(i as u32 + 1, *rect, layers)
            })
            .collect();
        // The root passphrase is random and dropped here; only the derived
        // zone records survive, in the keystore.
        let passphrase = zeroize::Zeroizing::new(hex::encode(random_bytes::<32>()));
        let salt = random_bytes::<SALT_LEN>();
        let root = derive_root(&passphrase, &salt, self.cfg.pbkdf2_iterations)
            .map_err(|e| StepError::Permanent(e.to_string()))?;
        let (obfuscated, master) = obfuscate(&image, &zones, &root, doc).map_err(|e| StepError::Permanent(e.to_string()))?;
        let master_json = zeroize::Zeroizing::new(serde_json::to_vec(&master).expect("master key serializes"));
        self.keystore
            .put(&master_key_path(doc), &master_json, &[Scope::Owner], &system_token())?;
        {
            let mut c = self.db.conn();
            let tx = c.transaction()?;
            tx.execute("DELETE FROM zones WHERE document_id = ?1", [doc])?;
            for (spec, (label, _)) in zones.iter().zip(&labelled) {
                let co = Coordinates::from(spec.rect);
                tx.execute(
                    "INSERT INTO zones (document_id, zone_id, label, start_x, start_y, end_x, end_y)
                     VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7)",
                    params![doc, spec.id, label, co.start_x, co.start_y, co.end_x, co.end_y],
                )?;
            }
            tx.commit()?;
        }
        std::fs::write(self.staged(doc, "obfuscated"), obfuscated.encode_png())?;
        self.event(
            Some(doc),
            "obfuscated",
            format!("{} zones, {} layers each, {issued} facts issued", zones.len(), algorithms.len()),
        )?;
        Ok(())
    }

    fn step_upload(&self, doc: &str) -> Result<(), StepError> {
        let bytes = std::fs::read(self.staged(doc, "obfuscated"))?;
        let id = self.cas.put(&bytes)?;
        if let Some(pin) = &self.pin {
            match pin.pin(&self.cas, &id) {
                Ok(r) => self.event(Some(doc), "pinned", format!("{} after {} attempts", r.content_id, r.attempts))?,
                Err(e @ StoreError::RemoteIntegrity { .. }) => return Err(StepError::Permanent(e.to_string())),
                Err(e) => return Err(e.into()),
            }
        }
        self.db.conn().execute(
            "UPDATE documents SET content_id = ?1 WHERE id = ?2",
            params![id.as_str(), doc],
        )?;
        // Originals and intermediates go away once the obfuscated copy is stored.
        for kind in ["original", "normalized", "obfuscated"] {
            remove_if_present(&self.staged(doc, kind))?;
        }
        match self.keystore.purge(&extraction_path(doc), &system_token()) {
            Ok(()) | Err(StoreError::NotFound(_)) => {}
            Err(e) => return Err(e.into()),
        }
        self.event(Some(doc), "uploaded", format!("content {id}; original deleted"))?;
        Ok(())
    }

    fn step_anchor(&self, doc: &str) -> Result<(), StepError> {
        let (content, entry, doc_hash, doc_type): (String, Option<String>, String, Option<String>) = self
            .db
            .conn()
            .query_row(
                "SELECT content_id, anchor_entry, document_hash, document_type FROM documents WHERE id = ?1",
                [doc],
                |r| Ok((r.get(0)?, r.get(1)?, r.get(2)?, r.get(3)?)),
            )?;
        let content: ContentId = content.parse().map_err(|e: StoreError| StepError::Permanent(e.to_string()))?;
        let entry = match entry {
            Some(e) => e,
            None => {
                let owner = self.owner_of(doc)?;
                let r = self
                    .ledger
                    .submit(EntryDraft::public(EntryKind::Document, content.hex(), &owner))
                    .map_err(|e| StepError::Permanent(e.to_string()))?;
                let details = crate::canonical_json(&serde_json::json!({
                    "document_id": doc,
                    "document_type": doc_type,
                    "content_id": content.as_str(),
                }));
                self.ledger
                    .submit(EntryDraft::private(
                        EntryKind::Document,
                        &doc_hash,
                        &owner,
                        details.into_bytes(),
                        vec![self.operator.public()],
                    ))
                    .map_err(|e| StepError::Permanent(e.to_string()))?;
                self.db.conn().execute(
                    "UPDATE documents SET anchor_entry = ?1 WHERE id = ?2",
                    params![r.entry_id, doc],
                )?;
                r.entry_id
            }
        };
        let loc = self
            .ledger
            .wait_for_inclusion(&entry, self.cfg.inclusion_timeout())
            .ok_or_else(|| StepError::Transient("anchor entry not sealed yet".into()))?;
        self.db.conn().execute(
            "UPDATE documents SET anchor_block = ?1 WHERE id = ?2",
            params![loc.block as i64, doc],
        )?;
        self.event(Some(doc), "anchored", format!("block {} position {}", loc.block, loc.position))?;
        Ok(())
    }

    // ---- notary ------------------------------------------------------

    fn require_notary(&self, who: &Principal) -> Result<String, OrchestrateError> {
        who.require(Scope::Notary)?;
        self.notary_id_for(&who.user_id)?
            .ok_or_else(|| OrchestrateError::Unauthorized("caller is not a registered notary".into()))
    }

    pub fn notary_queue(&self, who: &Principal) -> Result<Vec<NotaryQueueItem>, OrchestrateError> {
        self.require_notary(who)?;
        let ids: Vec<String> = {
            let c = self.db.conn();
            let mut st = c.prepare(
                "SELECT id FROM documents WHERE state IN ('NOTARIZATION_AWAITING', 'NOTARIZATION_STARTED')
                 ORDER BY created_at, id",
            )?;
            let rows = st.query_map([], |r| r.get(0))?.collect::<Result<Vec<String>, _>>()?;
            rows
        };
        let mut out = Vec::new();
        for id in ids {
            if self.notarization(&id)?.is_some() {
                continue;
            }
            let view = self.document_view(&id)?;
            let raw = self.keystore.get(&extraction_path(&id), &who.keystore_token())?;
            let extraction: ExtractionResult =
                serde_json::from_slice(&raw).map_err(|e| OrchestrateError::Internal(e.to_string()))?;
            let fields = view
                .fields
                .iter()
                .map(|f| NotaryField {
                    name: f.name.clone(),
                    text: extraction.field(&f.name).map(|e| e.text.clone()).unwrap_or_default(),
                    confidence_score: f.confidence_score,
                    flagged: f.flagged,
                    coordinates: f.coordinates,
                })
                .collect();
            out.push(NotaryQueueItem {
                document_id: id,
                state: view.state,
                document_type: view.document_type,
                description: view.description,
                fields,
            });
        }
        Ok(out)
    }

    /// NOTARIZATION_AWAITING -> NOTARIZATION_STARTED.
    pub fn notary_claim(&self, who: &Principal, doc: &str) -> Result<DocumentState, OrchestrateError> {
        let notary = self.require_notary(who)?;
        let state = self.state_of(doc)?;
        match state {
            DocumentState::NotarizationAwaiting => {
                self.transition(doc, state, DocumentState::NotarizationStarted)?;
                self.event(Some(doc), "notary_claimed", notary)?;
                Ok(DocumentState::NotarizationStarted)
            }
            DocumentState::NotarizationStarted => Ok(state),
            other => Err(OrchestrateError::StateViolation(format!("document is {other}"))),
        }
    }

    pub fn notary_decide(
        &self,
        who: &Principal,
        doc: &str,
        review: NotaryReview,
    ) -> Result<NotarizationRecord, OrchestrateError> {
        let notary = self.require_notary(who)?;
        let state = self.state_of(doc)?;
        if !matches!(state, DocumentState::NotarizationAwaiting | DocumentState::NotarizationStarted) {
            return Err(OrchestrateError::StateViolation(format!("document {doc} is {state}, not awaiting review")));
        }
        if self.notarization(doc)?.is_some() {
            return Err(OrchestrateError::Conflict(format!("document {doc} already decided")));
        }
        if state == DocumentState::NotarizationAwaiting {
            self.notary_claim(who, doc)?;
        }
        let extraction = self.load_extraction(doc)?;
        let doc_hash: String =
            self.db
                .conn()
                .query_row("SELECT document_hash FROM documents WHERE id = ?1", [doc], |r| r.get(0))?;
        let key = self.keystore.get(&notary_key_path(&notary), &system_token())?;
        let key = SigningKey::from_bytes(
            key.as_slice()
                .try_into()
                .map_err(|_| OrchestrateError::Internal("notary key length".into()))?,
        );
        let decision = match &review {
            NotaryReview::Approve {
                corrections,
                coordinates,
            } => {
                let known: Vec<String> = self.document_view(doc)?.fields.into_iter().map(|f| f.name).collect();
                for name in coordinates.keys() {
                    if !known.contains(name) {
                        return Err(OrchestrateError::InvalidInput(format!("unknown field {name:?}")));
                    }
                }
                NotaryDecision::Approve {
                    corrections: corrections.clone(),
                }
            }
            NotaryReview::Reject { reason } => NotaryDecision::Reject { reason: reason.clone() },
        };
        let (record, final_fields) = notarize(
            NotarizationStatus::Started,
            doc,
            &doc_hash,
            &extraction,
            &notary,
            &key,
            decision,
            &self.ledger,
        )?;
        let status = match record.status {
            NotarizationStatus::Approved => "approved",
            _ => "rejected",
        };
        self.db.conn().execute(
            "INSERT INTO notarizations (document_id, notary_id, status, record, decided_at) VALUES (?1, ?2, ?3, ?4, ?5)",
            params![
                doc,
                notary,
                status,
                serde_json::to_string(&record).expect("record serializes"),
                self.clock.now().timestamp_millis()
            ],
        )?;
        self.event(
            Some(doc),
            "notarized",
            format!("{status} by {notary}; corrected fields {:?}", record.corrected_fields),
        )?;
        match (&review, final_fields) {
            (NotaryReview::Approve { coordinates, .. }, Some(values)) => {
                for (name, co) in coordinates {
                    let r = Rect::from(*co);
                    if r.is_empty() {
                        return Err(OrchestrateError::InvalidInput(format!("empty rectangle for {name:?}")));
                    }
                    self.db.conn().execute(
                        "UPDATE fields SET start_x = ?1, start_y = ?2, end_x = ?3, end_y = ?4
                         WHERE document_id = ?5 AND name = ?6",
                        params![co.start_x, co.start_y, co.end_x, co.end_y, doc, name],
                    )?;
                }
                if !record.corrected_fields.is_empty() {
                    self.store_drafts(doc, &values)?;
                }
                self.kick(doc);
            }
            _ => {
                let reason = record.reason.clone().unwrap_or_default();
                self.fail(doc, &format!("rejected by notary: {reason}"))?;
            }
        }
        Ok(record)
    }

    /// Fact drafts currently waiting on the job row.
    pub fn pending_drafts(&self, doc: &str) -> Result<Vec<FactDraft>, OrchestrateError> {
        self.drafts(doc)
    }

    // ---- facts -------------------------------------------------------

    fn all_fact_hashes(&self) -> Result<Vec<String>, OrchestrateError> {
        let c = self.db.conn();
        let mut st = c.prepare("SELECT fact_hash FROM facts")?;
        let rows = st.query_map([], |r| r.get(0))?.collect::<Result<Vec<String>, _>>()?;
        Ok(rows)
    }

    pub(crate) fn facts_where(&self, column: &str, value: &str) -> Result<Vec<Fact>, OrchestrateError> {
        let sql = match column {
            "subject" => "SELECT fact FROM facts WHERE subject = ?1 ORDER BY rowid",
            "document_id" => "SELECT fact FROM facts WHERE document_id = ?1 ORDER BY rowid",
            "fact_hash" => "SELECT fact FROM facts WHERE fact_hash = ?1",
            other => return Err(OrchestrateError::Internal(format!("no fact index on {other}"))),
        };
        let c = self.db.conn();
        let mut st = c.prepare(sql)?;
        let rows = st.query_map([value], |r| r.get::<_, String>(0))?.collect::<Result<Vec<_>, _>>()?;
        rows.iter()
            .map(|s| serde_json::from_str(s).map_err(|e| OrchestrateError::Internal(e.to_string())))
            .collect()
    }

    pub fn facts_for_subject(&self, who: &Principal, subject: &str) -> Result<Vec<super::FactReport>, OrchestrateError> {
        if who.user_id != subject && !who.has(Scope::Notary) {
            return Err(OrchestrateError::Unauthorized("facts belong to another subject".into()));
        }
        Ok(self
            .facts_where("subject", subject)?
            .iter()
            .map(|f| self.fact_report(f))
            .collect())
    }

    pub fn fact_report(&self, f: &Fact) -> super::FactReport {
        super::FactReport {
            fact_hash: f.fact_hash.clone(),
            subject: f.subject.clone(),
            predicate: f.predicate.clone(),
            issued_at: f.issued_at,
            expires_at: f.expires_at,
            signature: f.signature.clone(),
            anchored: self.ledger.is_anchored(&f.fact_hash),
            status: facts::verify_fact(f, &self.issuer.verifying_key(), &self.revocations, self.clock.now()),
        }
    }

    pub fn revoke_fact(&self, who: &Principal, fact_hash: &str, reason: &str) -> Result<facts::RevocationEntry, OrchestrateError> {
        let fact = self
            .facts_where("fact_hash", fact_hash)?
            .pop()
            .ok_or_else(|| OrchestrateError::NotFound(format!("fact {fact_hash}")))?;
        if fact.subject != who.user_id && !who.is_admin() {
            return Err(OrchestrateError::Unauthorized("only the subject or an admin may revoke".into()));
        }
        let entry = self.revocations.revoke(fact_hash, reason, self.clock.now())?;
        self.event(Some(&fact.source_document), "fact_revoked", format!("{fact_hash} {}", fact.predicate))?;
        Ok(entry)
    }

    // ---- keys --------------------------------------------------------

    pub(crate) fn master_key(&self, doc: &str, token: &AccessToken) -> Result<MasterKey, OrchestrateError> {
        let raw = self.keystore.get(&master_key_path(doc), token)?;
        serde_json::from_slice(&raw).map_err(|e| OrchestrateError::Internal(format!("stored master key: {e}")))
    }

    pub(crate) fn system_master_key(&self, doc: &str) -> Result<MasterKey, OrchestrateError> {
        self.master_key(doc, &system_token())
    }

    /// Drops zones from the master key for good: the record is rewritten
    /// without them and every older version is purged.
    pub fn prune_zones(&self, owner: &Principal, doc: &str, zones: &[u32]) -> Result<Vec<u32>, OrchestrateError> {
        if self.owner_of(doc)? != owner.user_id {
            return Err(OrchestrateError::Unauthorized(format!("not the owner of {doc}")));
        }
        let master = self.master_key(doc, &owner.keystore_token())?;
        let ids = zones.iter().copied().collect();
        let pruned = crate::obfuscate::prune(&master, &ids).map_err(|e| OrchestrateError::InvalidZone(e.to_string()))?;
        let json = zeroize::Zeroizing::new(serde_json::to_vec(&pruned).expect("master key serializes"));
        let sys = system_token();
        self.keystore.purge(&master_key_path(doc), &sys)?;
        self.keystore.put(&master_key_path(doc), &json, &[Scope::Owner], &sys)?;
        self.event(Some(doc), "zones_pruned", format!("{zones:?}"))?;
        Ok(pruned.zone_ids())
    }
}
