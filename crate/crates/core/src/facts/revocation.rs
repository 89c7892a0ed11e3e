//! Append-only revocation registry backed by a JSON-lines file.

use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::FactError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RevocationEntry {
    pub fact_hash: String,
    pub revoked_at: DateTime<Utc>,
    pub reason: String,
}

#[derive(Debug, Default)]
struct Inner {
    entries: Vec<RevocationEntry>,
    revoked: HashSet<String>,
    issued: HashSet<String>,
}

/// Writers serialize on one lock; each accepted revocation is appended to
/// the file before it becomes visible.
#[derive(Debug)]
pub struct RevocationRegistry {
    path: Option<PathBuf>,
    inner: Mutex<Inner>,
}

impl RevocationRegistry {
    pub fn in_memory() -> Self {
        Self {
            path: None,
            inner: Mutex::new(Inner::default()),
        }
    }

    /// Opens or creates the registry at `path`, replaying existing lines.
    pub fn open(path: &Path) -> Result<Self, FactError> {
        let io = |e: std::io::Error| FactError::Io(e.to_string());
        let mut inner = Inner::default();
        if path.exists() {
            for (n, line) in BufReader::new(File::open(path).map_err(io)?).lines().enumerate() {
                let line = line.map_err(io)?;
                if line.trim().is_empty() {
                    continue;
                }
                let e: RevocationEntry = serde_json::from_str(&line)
                    .map_err(|err| FactError::Io(format!("line {}: {err}", n + 1)))?;
                if !inner.revoked.insert(e.fact_hash.clone()) {
                    return Err(FactError::Io(format!("duplicate revocation for {}", e.fact_hash)));
                }
                inner.issued.insert(e.fact_hash.clone());
                inner.entries.push(e);
            }
        }
        Ok(Self {
            path: Some(path.to_path_buf()),
            inner: Mutex::new(inner),
        })
    }

    /// Records that `fact_hash` was issued, making it revocable.
    pub fn note_issued(&self, fact_hash: &str) {
        self.inner.lock().expect("registry lock").issued.insert(fact_hash.to_string());
    }

    pub fn revoke(&self, fact_hash: &str, reason: &str, now: DateTime<Utc>) -> Result<RevocationEntry, FactError> {
        let mut inner = self.inner.lock().expect("registry lock");
        if !inner.issued.contains(fact_hash) {
            return Err(FactError::NotFound(fact_hash.to_string()));
        }
        if inner.revoked.contains(fact_hash) {
            return Err(FactError::AlreadyRevoked(fact_hash.to_string()));
        }
        let entry = RevocationEntry {
            fact_hash: fact_hash.to_string(),
            revoked_at: now,
            reason: reason.to_string(),
        };
        if let Some(p) = &self.path {
            let mut f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(p)
                .map_err(|e| FactError::Io(e.to_string()))?;
            let mut line = serde_json::to_string(&entry).expect("entry serializes");
            line.push('\n');
            f.write_all(line.as_bytes()).map_err(|e| FactError::Io(e.to_string()))?;
            f.sync_data().map_err(|e| FactError::Io(e.to_string()))?;
        }
        inner.revoked.insert(fact_hash.to_string());
        inner.entries.push(entry.clone());
        Ok(entry)
    }

    pub fn is_revoked(&self, fact_hash: &str) -> bool {
        self.inner.lock().expect("registry lock").revoked.contains(fact_hash)
    }

    /// Entries in append order.
    pub fn entries(&self) -> Vec<RevocationEntry> {
        self.inner.lock().expect("registry lock").entries.clone()
    }
}
