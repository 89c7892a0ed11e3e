//! Versioned secret store encrypted at rest, with a JSON-lines audit log.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use aes_gcm::aead::{Aead, KeyInit, Payload};
use aes_gcm::{Aes256Gcm, Nonce};
use chrono::{DateTime, Utc};
use rand::rngs::OsRng;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use zeroize::Zeroizing;

use super::StoreError;
use crate::clock::Clock;

const STORE_FILE: &str = "keystore.json";
const AUDIT_FILE: &str = "audit.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    Owner,
    Notary,
    Admin,
}

impl std::str::FromStr for Scope {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "owner" => Ok(Scope::Owner),
            "notary" => Ok(Scope::Notary),
            "admin" => Ok(Scope::Admin),
            other => Err(format!("unknown scope {other:?}")),
        }
    }
}

impl std::fmt::Display for Scope {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scope::Owner => "owner",
            Scope::Notary => "notary",
            Scope::Admin => "admin",
        })
    }
}

/// Caller identity presented to the keystore.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccessToken {
    pub principal: String,
    pub scopes: BTreeSet<Scope>,
}

impl AccessToken {
    pub fn new(principal: &str, scopes: &[Scope]) -> Self {
        Self {
            principal: principal.to_string(),
            scopes: scopes.iter().copied().collect(),
        }
    }

    pub fn is_admin(&self) -> bool {
        self.scopes.contains(&Scope::Admin)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditRow {
    pub at: DateTime<Utc>,
    pub principal: String,
    pub op: String,
    pub path: String,
    pub version: Option<u32>,
    pub outcome: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StoredVersion {
    version: u32,
    created_at: DateTime<Utc>,
    retired: bool,
    nonce: String,
    ciphertext: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StoredRecord {
    policy: BTreeSet<Scope>,
    revoked: bool,
    versions: Vec<StoredVersion>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct StoreFile {
    records: BTreeMap<String, StoredRecord>,
}

pub struct Keystore {
    dir: PathBuf,
    key: Zeroizing<[u8; 32]>,
    clock: Arc<dyn Clock>,
    records: RwLock<StoreFile>,
    /// Serializes writers and audit appends.
    write_lock: Mutex<()>,
    audit: Mutex<File>,
}

impl std::fmt::Debug for Keystore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Keystore").field("dir", &self.dir).finish_non_exhaustive()
    }
}

/// Derives the at-rest key from a passphrase.
pub fn derive_master_key(passphrase: &str, salt: &[u8], iterations: u32) -> Zeroizing<[u8; 32]> {
    let mut k = Zeroizing::new([0u8; 32]);
    pbkdf2::pbkdf2_hmac::<sha2::Sha256>(passphrase.as_bytes(), salt, iterations.max(1), k.as_mut());
    k
}

fn aad(path: &str, version: u32) -> Vec<u8> {
    let mut a = path.as_bytes().to_vec();
    a.push(0);
    a.extend_from_slice(&version.to_be_bytes());
    a
}

impl Keystore {
    pub fn open(dir: &Path, master_key: &[u8; 32], clock: Arc<dyn Clock>) -> Result<Self, StoreError> {
        fs::create_dir_all(dir)?;
        let file = dir.join(STORE_FILE);
        let records = if file.exists() {
            serde_json::from_slice(&fs::read(&file)?).map_err(|e| StoreError::Malformed(e.to_string()))?
        } else {
            StoreFile::default()
        };
        let audit = OpenOptions::new().create(true).append(true).open(dir.join(AUDIT_FILE))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            key: Zeroizing::new(*master_key),
            clock,
            records: RwLock::new(records),
            write_lock: Mutex::new(()),
            audit: Mutex::new(audit),
        })
    }

    /// Salt file beside the store, created on first use.
    pub fn load_or_create_salt(dir: &Path) -> Result<[u8; 16], StoreError> {
        fs::create_dir_all(dir)?;
        let p = dir.join("keystore.salt");
        if let Ok(b) = fs::read(&p) {
            return b.try_into().map_err(|_| StoreError::Malformed("keystore.salt must be 16 bytes".into()));
        }
        let mut salt = [0u8; 16];
        OsRng.fill_bytes(&mut salt);
        fs::write(&p, salt)?;
        Ok(salt)
    }

    pub fn store_path(&self) -> PathBuf {
        self.dir.join(STORE_FILE)
    }

    pub fn audit_path(&self) -> PathBuf {
        self.dir.join(AUDIT_FILE)
    }

    fn cipher(&self) -> Aes256Gcm {
        Aes256Gcm::new_from_slice(self.key.as_ref()).expect("32-byte key")
    }

    fn audit(&self, token: &AccessToken, op: &str, path: &str, version: Option<u32>, outcome: &str) -> Result<(), StoreError> {
        let row = AuditRow {
            at: self.clock.now(),
            principal: token.principal.clone(),
            op: op.to_string(),
            path: path.to_string(),
            version,
            outcome: outcome.to_string(),
        };
        let mut line = serde_json::to_vec(&row).expect("audit row serializes");
        line.push(b'\n');
        let mut f = self.audit.lock().expect("audit lock");
        f.write_all(&line)?;
        f.sync_data()?;
        Ok(())
    }

    /// Audits the outcome of `result` and passes it through.
    fn audited<T>(
        &self,
        token: &AccessToken,
        op: &str,
        path: &str,
        result: Result<(T, Option<u32>), StoreError>,
    ) -> Result<T, StoreError> {
        let (outcome, version) = match &result {
            Ok((_, v)) => ("ok".to_string(), *v),
            Err(StoreError::Unauthorized(_)) => ("unauthorized".to_string(), None),
            Err(StoreError::Revoked(_)) => ("revoked".to_string(), None),
            Err(StoreError::NotFound(_)) => ("not-found".to_string(), None),
            Err(_) => ("error".to_string(), None),
        };
        self.audit(token, op, path, version, &outcome)?;
        result.map(|(t, _)| t)
    }

    fn persist(&self, file: &StoreFile) -> Result<(), StoreError> {
        let tmp = self.dir.join(format!(".{STORE_FILE}.tmp"));
        let mut f = File::create(&tmp)?;
        f.write_all(&serde_json::to_vec_pretty(file).expect("store serializes"))?;
        f.sync_data()?;
        drop(f);
        fs::rename(tmp, self.store_path())?;
        Ok(())
    }

    fn authorized(token: &AccessToken, policy: &BTreeSet<Scope>) -> bool {
        token.is_admin() || token.scopes.iter().any(|s| policy.contains(s))
    }

    fn encrypt(&self, path: &str, version: u32, value: &[u8]) -> Result<StoredVersion, StoreError> {
        let mut nonce = [0u8; 12];
        OsRng.fill_bytes(&mut nonce);
        let ct = self
            .cipher()
            .encrypt(Nonce::from_slice(&nonce), Payload { msg: value, aad: &aad(path, version) })
            .map_err(|_| StoreError::Crypto("encryption failed".into()))?;
        Ok(StoredVersion {
            version,
            created_at: self.clock.now(),
            retired: false,
            nonce: hex::encode(nonce),
            ciphertext: hex::encode(ct),
        })
    }

    fn decrypt(&self, path: &str, v: &StoredVersion) -> Result<Zeroizing<Vec<u8>>, StoreError> {
        let nonce = hex::decode(&v.nonce).map_err(|e| StoreError::Malformed(e.to_string()))?;
        let ct = hex::decode(&v.ciphertext).map_err(|e| StoreError::Malformed(e.to_string()))?;
        if nonce.len() != 12 {
            return Err(StoreError::Malformed("nonce length".into()));
        }
        self.cipher()
            .decrypt(Nonce::from_slice(&nonce), Payload { msg: &ct, aad: &aad(path, v.version) })
            .map(Zeroizing::new)
            .map_err(|_| StoreError::Crypto(format!("cannot decrypt {path} v{}", v.version)))
    }

    /// Writes a new version. The first put fixes the access policy; later
    /// puts need a token the policy admits.
    pub fn put(&self, path: &str, value: &[u8], policy: &[Scope], token: &AccessToken) -> Result<u32, StoreError> {
        let r = (|| {
            let _w = self.write_lock.lock().expect("keystore write lock");
            let mut file = self.records.write().expect("keystore lock");
            let version = match file.records.get(path) {
                Some(rec) if !Self::authorized(token, &rec.policy) => {
                    return Err(StoreError::Unauthorized(path.to_string()))
                }
                Some(rec) if rec.revoked => return Err(StoreError::Revoked(path.to_string())),
                Some(rec) => rec.versions.last().map_or(1, |v| v.version + 1),
                None => {
                    let policy: BTreeSet<Scope> = policy.iter().copied().collect();
                    if !Self::authorized(token, &policy) {
                        return Err(StoreError::Unauthorized(path.to_string()));
                    }
                    1
                }
            };
            let stored = self.encrypt(path, version, value)?;
            let rec = file.records.entry(path.to_string()).or_insert_with(|| StoredRecord {
                policy: policy.iter().copied().collect(),
                revoked: false,
                versions: Vec::new(),
            });
            for v in rec.versions.iter_mut() {
                v.retired = true;
            }
            rec.versions.push(stored);
            self.persist(&file)?;
            Ok((version, Some(version)))
        })();
        self.audited(token, "put", path, r)
    }

    /// Latest version.
    pub fn get(&self, path: &str, token: &AccessToken) -> Result<Zeroizing<Vec<u8>>, StoreError> {
        let r = (|| {
            let file = self.records.read().expect("keystore lock");
            let rec = file.records.get(path).ok_or_else(|| StoreError::NotFound(path.to_string()))?;
            if !Self::authorized(token, &rec.policy) {
                return Err(StoreError::Unauthorized(path.to_string()));
            }
            if rec.revoked {
                return Err(StoreError::Revoked(path.to_string()));
            }
            let v = rec.versions.last().ok_or_else(|| StoreError::NotFound(path.to_string()))?;
            Ok((self.decrypt(path, v)?, Some(v.version)))
        })();
        self.audited(token, "get", path, r)
    }

    /// A specific, possibly retired, version. Admin only.
    pub fn get_version(&self, path: &str, version: u32, token: &AccessToken) -> Result<Zeroizing<Vec<u8>>, StoreError> {
        let r = (|| {
            if !token.is_admin() {
                return Err(StoreError::Unauthorized(path.to_string()));
            }
            let file = self.records.read().expect("keystore lock");
            let rec = file.records.get(path).ok_or_else(|| StoreError::NotFound(path.to_string()))?;
            if rec.revoked {
                return Err(StoreError::Revoked(path.to_string()));
            }
            let v = rec
                .versions
                .iter()
                .find(|v| v.version == version)
                .ok_or_else(|| StoreError::NotFound(format!("{path} v{version}")))?;
            Ok((self.decrypt(path, v)?, Some(version)))
        })();
        self.audited(token, "get_version", path, r)
    }

    /// Stores `value` as version n+1 and retires n.
    pub fn rotate(&self, path: &str, value: &[u8], token: &AccessToken) -> Result<u32, StoreError> {
        let r = (|| {
            let _w = self.write_lock.lock().expect("keystore write lock");
            let mut file = self.records.write().expect("keystore lock");
            let rec = file.records.get(path).ok_or_else(|| StoreError::NotFound(path.to_string()))?;
            if !Self::authorized(token, &rec.policy) {
                return Err(StoreError::Unauthorized(path.to_string()));
            }
            if rec.revoked {
                return Err(StoreError::Revoked(path.to_string()));
            }
            let version = rec.versions.last().map_or(1, |v| v.version + 1);
            let stored = self.encrypt(path, version, value)?;
            let rec = file.records.get_mut(path).expect("checked above");
            for v in rec.versions.iter_mut() {
                v.retired = true;
            }
            rec.versions.push(stored);
            self.persist(&file)?;
            Ok((version, Some(version)))
        })();
        self.audited(token, "rotate", path, r)
    }

    /// Disables every version of `path`.
    pub fn revoke(&self, path: &str, token: &AccessToken) -> Result<(), StoreError> {
        let r = (|| {
            let _w = self.write_lock.lock().expect("keystore write lock");
            let mut file = self.records.write().expect("keystore lock");
            let rec = file.records.get_mut(path).ok_or_else(|| StoreError::NotFound(path.to_string()))?;
            if !Self::authorized(token, &rec.policy) {
                return Err(StoreError::Unauthorized(path.to_string()));
            }
            rec.revoked = true;
            self.persist(&file)?;
            Ok(((), None))
        })();
        self.audited(token, "revoke", path, r)
    }

    /// Removes `path` and all its ciphertexts. Admin only.
    pub fn purge(&self, path: &str, token: &AccessToken) -> Result<(), StoreError> {
        let r = (|| {
            if !token.is_admin() {
                return Err(StoreError::Unauthorized(path.to_string()));
            }
            let _w = self.write_lock.lock().expect("keystore write lock");
            let mut file = self.records.write().expect("keystore lock");
            if file.records.remove(path).is_none() {
                return Err(StoreError::NotFound(path.to_string()));
            }
            self.persist(&file)?;
            Ok(((), None))
        })();
        self.audited(token, "purge", path, r)
    }

    pub fn contains(&self, path: &str) -> bool {
        self.records.read().expect("keystore lock").records.contains_key(path)
    }

    pub fn audit_rows(&self) -> Result<Vec<AuditRow>, StoreError> {
        let _g = self.audit.lock().expect("audit lock");
        let text = fs::read_to_string(self.audit_path())?;
        text.lines()
            .map(|l| serde_json::from_str(l).map_err(|e| StoreError::Malformed(e.to_string())))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::ManualClock;

    fn open(dir: &Path) -> Keystore {
        Keystore::open(dir, &[42u8; 32], Arc::new(ManualClock::at_millis(0))).unwrap()
    }

    fn owner() -> AccessToken {
        AccessToken::new("alice", &[Scope::Owner])
    }

    fn admin() -> AccessToken {
        AccessToken::new("root", &[Scope::Admin])
    }

    #[test]
    fn put_get_and_scope_denial() {
        let dir = tempfile::tempdir().unwrap();
        let ks = open(dir.path());
        ks.put("doc/1/key", b"s3cr3t-canary", &[Scope::Owner], &owner()).unwrap();
        assert_eq!(ks.get("doc/1/key", &owner()).unwrap().as_slice(), b"s3cr3t-canary");
        let notary = AccessToken::new("bob", &[Scope::Notary]);
        assert!(matches!(ks.get("doc/1/key", &notary), Err(StoreError::Unauthorized(_))));
        let rows = ks.audit_rows().unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[2].outcome, "unauthorized");
        assert_eq!(rows[2].principal, "bob");
    }

    #[test]
    fn rotation_keeps_old_versions_for_admin() {
        let dir = tempfile::tempdir().unwrap();
        let ks = open(dir.path());
        ks.put("k", b"v1", &[Scope::Owner], &owner()).unwrap();
        assert_eq!(ks.rotate("k", b"v2", &owner()).unwrap(), 2);
        assert_eq!(ks.get("k", &owner()).unwrap().as_slice(), b"v2");
        assert_eq!(ks.get_version("k", 1, &admin()).unwrap().as_slice(), b"v1");
        assert!(ks.get_version("k", 1, &owner()).is_err());
    }

    #[test]
    fn revoke_disables_everything() {
        let dir = tempfile::tempdir().unwrap();
        let ks = open(dir.path());
        ks.put("k", b"v1", &[Scope::Owner], &owner()).unwrap();
        ks.revoke("k", &owner()).unwrap();
        assert!(matches!(ks.get("k", &owner()), Err(StoreError::Revoked(_))));
        assert!(matches!(ks.get_version("k", 1, &admin()), Err(StoreError::Revoked(_))));
    }

    #[test]
    fn no_plaintext_at_rest_and_reopen() {
        let dir = tempfile::tempdir().unwrap();
        {
            let ks = open(dir.path());
            ks.put("k", b"CANARY-PLAINTEXT-0001", &[Scope::Owner], &owner()).unwrap();
        }
        let raw = fs::read(dir.path().join(STORE_FILE)).unwrap();
        assert!(!raw.windows(21).any(|w| w == b"CANARY-PLAINTEXT-0001"));
        let ks = open(dir.path());
        assert_eq!(ks.get("k", &owner()).unwrap().as_slice(), b"CANARY-PLAINTEXT-0001");
        let wrong = Keystore::open(dir.path(), &[1u8; 32], Arc::new(ManualClock::at_millis(0))).unwrap();
        assert!(matches!(wrong.get("k", &owner()), Err(StoreError::Crypto(_))));
    }

    #[test]
    fn audit_count_equals_calls() {
        let dir = tempfile::tempdir().unwrap();
        let ks = open(dir.path());
        let mut calls = 0;
        for i in 0..5 {
            let _ = ks.put(&format!("p{i}"), b"x", &[Scope::Owner], &owner());
            let _ = ks.get(&format!("p{i}"), &owner());
            let _ = ks.get("missing", &owner());
            let _ = ks.rotate(&format!("p{i}"), b"y", &AccessToken::new("eve", &[]));
            calls += 4;
        }
        let _ = ks.purge("p0", &admin());
        calls += 1;
        assert_eq!(ks.audit_rows().unwrap().len(), calls);
        assert!(!ks.contains("p0"));
    }
}
