//! Workflow event log: one table row and one JSON line per event.
//!
//! Details are composed by the workflow from ids, states and error kinds;
//! field values never reach this log.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use rusqlite::params;
use serde::{Deserialize, Serialize};

use super::OrchestrateError;
use crate::store::Metadata;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub document_id: Option<String>,
    pub at: DateTime<Utc>,
    pub kind: String,
    pub detail: String,
}

pub struct EventLog {
    path: PathBuf,
    file: Mutex<File>,
}

impl EventLog {
    pub fn open(dir: &Path) -> Result<Self, OrchestrateError> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join("events.jsonl");
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self {
            path,
            file: Mutex::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn record(&self, db: &Metadata, event: Event) -> Result<(), OrchestrateError> {
        db.conn().execute(
            "INSERT INTO events (document_id, at, kind, detail) VALUES (?1, ?2, ?3, ?4)",
            params![event.document_id, event.at.timestamp_millis(), event.kind, event.detail],
        )?;
        let mut line = serde_json::to_vec(&event).expect("event serializes");
        line.push(b'\n');
        self.file.lock().expect("event log lock").write_all(&line)?;
        tracing::info!(document = ?event.document_id, kind = %event.kind, detail = %event.detail, "event");
        Ok(())
    }
}

pub fn events_for(db: &Metadata, document_id: &str) -> Result<Vec<Event>, OrchestrateError> {
    let c = db.conn();
    let mut st = c.prepare("SELECT at, kind, detail FROM events WHERE document_id = ?1 ORDER BY id")?;
    let rows = st
        .query_map([document_id], |r| {
            Ok(Event {
                document_id: Some(document_id.to_string()),
                at: DateTime::from_timestamp_millis(r.get(0)?).unwrap_or_default(),
                kind: r.get(1)?,
                detail: r.get(2)?,
            })
        })?
        .collect::<Result<Vec<_>, _>>()?;
    Ok(rows)
}
