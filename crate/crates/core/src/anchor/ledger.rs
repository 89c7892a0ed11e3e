//! Single-sealer ledger: concurrent submit, serialized seal, file-backed.

use std::collections::{HashMap, VecDeque};
use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex, RwLock};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde::Serialize;

use super::chain::{decode_chain, verify_chain, AnchorBlock, BlockHeader, ChainVerdict, InclusionProof, GENESIS_PREV};
use super::entry::{seal_payload, valid_hash_hex, AnchorEntry, EntryDraft, EntryKind, Visibility};
use super::AnchorError;
use crate::clock::Clock;
use crate::facts::HashAnchor;

/// Entries per block before a seal is forced.
pub const DEFAULT_BATCH_CAP: usize = 256;
/// Timer for sealing whatever is pending.
pub const DEFAULT_SEAL_INTERVAL: Duration = Duration::from_millis(500);

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Receipt {
    pub entry_id: String,
    /// Global submission order.
    pub sequence: u64,
    /// Lower bound on the index of the block that will include the entry.
    pub pending_block: u64,
}

#[derive(Debug, Default)]
struct Pending {
    queue: VecDeque<AnchorEntry>,
}

/// Where an entry landed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Location {
    pub block: u64,
    pub position: u32,
}

#[derive(Debug, Default)]
struct Sealed {
    blocks: Vec<AnchorBlock>,
    by_entry: HashMap<String, Location>,
    by_content: HashMap<String, Vec<Location>>,
}

pub struct Ledger {
    clock: Arc<dyn Clock>,
    path: Option<PathBuf>,
    batch_cap: usize,
    sequence: AtomicU64,
    pending: Mutex<Pending>,
    pending_cv: Condvar,
    /// Held across a whole seal so blocks are produced one at a time.
    seal_lock: Mutex<()>,
    sealed: RwLock<Sealed>,
    sealed_cv: Condvar,
    sealed_signal: Mutex<u64>,
}

impl std::fmt::Debug for Ledger {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Ledger")
            .field("path", &self.path)
            .field("height", &self.height())
            .finish_non_exhaustive()
    }
}

impl Ledger {
    /// In-memory ledger with a genesis block.
    pub fn in_memory(clock: Arc<dyn Clock>) -> Self {
        let l = Self::empty(clock, None);
        l.seal_genesis().expect("in-memory genesis cannot fail");
        l
    }

    /// Opens the chain file at `path`, verifying it, or starts a new one.
    pub fn open(path: &Path, clock: Arc<dyn Clock>) -> Result<Self, AnchorError> {
        let l = Self::empty(clock, Some(path.to_path_buf()));
        let mut bytes = Vec::new();
        if path.exists() {
            File::open(path)?.read_to_end(&mut bytes)?;
        }
        let blocks = decode_chain(&bytes)?;
        if let ChainVerdict::FirstBadBlock { index } = verify_chain(&blocks) {
            return Err(AnchorError::ChainCorrupt { index });
        }
        {
            let mut s = l.sealed.write().expect("ledger lock");
            for b in blocks {
                index_block(&mut s, b);
            }
        }
        if l.height() == 0 {
            l.seal_genesis()?;
        }
        Ok(l)
    }

    fn empty(clock: Arc<dyn Clock>, path: Option<PathBuf>) -> Self {
        Self {
            clock,
            path,
            batch_cap: DEFAULT_BATCH_CAP,
            sequence: AtomicU64::new(0),
            pending: Mutex::new(Pending::default()),
            pending_cv: Condvar::new(),
            seal_lock: Mutex::new(()),
            sealed: RwLock::new(Sealed::default()),
            sealed_cv: Condvar::new(),
            sealed_signal: Mutex::new(0),
        }
    }

    pub fn with_batch_cap(mut self, cap: usize) -> Self {
        self.batch_cap = cap.max(1);
        self
    }

    fn seal_genesis(&self) -> Result<(), AnchorError> {
        let _g = self.seal_lock.lock().expect("seal lock");
        let block = AnchorBlock::build(0, GENESIS_PREV, self.clock.now_millis(), Vec::new());
        self.persist(&block)?;
        index_block(&mut self.sealed.write().expect("ledger lock"), block);
        Ok(())
    }

    pub fn height(&self) -> u64 {
        self.sealed.read().expect("ledger lock").blocks.len() as u64
    }

    pub fn pending_len(&self) -> usize {
        self.pending.lock().expect("pending lock").queue.len()
    }

    /// Queues an entry for the next block.
    pub fn submit(&self, draft: EntryDraft) -> Result<Receipt, AnchorError> {
        if !valid_hash_hex(&draft.content_hash) {
            return Err(AnchorError::InvalidEntry(format!(
                "content hash must be 64 lowercase hex chars, got {:?}",
                draft.content_hash
            )));
        }
        let (visibility, private_payload) = match &draft.private {
            Some((plain, members)) => (Visibility::Private, Some(seal_payload(plain, &draft.content_hash, members)?)),
            None => (Visibility::Public, None),
        };
        let entry = AnchorEntry {
            entry_id: uuid::Uuid::new_v4().to_string(),
            kind: draft.kind,
            content_hash: draft.content_hash,
            visibility,
            private_payload,
            submitter: draft.submitter,
            submitted_at: chrono::DateTime::from_timestamp_millis(self.clock.now_millis()).expect("clock in range"),
        };
        let mut p = self.pending.lock().expect("pending lock");
        let sequence = self.sequence.fetch_add(1, Ordering::SeqCst);
        let receipt = Receipt {
            entry_id: entry.entry_id.clone(),
            sequence,
            pending_block: self.height(),
        };
        p.queue.push_back(entry);
        if p.queue.len() >= self.batch_cap {
            self.pending_cv.notify_all();
        }
        Ok(receipt)
    }

    /// Seals up to `batch_cap` pending entries into a new block. Empty
    /// blocks are produced when nothing is pending.
    pub fn seal(&self) -> Result<AnchorBlock, AnchorError> {
        let _g = self.seal_lock.lock().expect("seal lock");
        let entries: Vec<AnchorEntry> = {
            let mut p = self.pending.lock().expect("pending lock");
            let n = p.queue.len().min(self.batch_cap);
            p.queue.drain(..n).collect()
        };
        let (index, prev) = {
            let s = self.sealed.read().expect("ledger lock");
            let last = s.blocks.last().expect("genesis exists");
            (last.index + 1, last.block_hash)
        };
        let block = AnchorBlock::build(index, prev, self.clock.now_millis(), entries);
        if let Err(e) = self.persist(&block) {
            // Put the entries back so nothing is lost.
            let mut p = self.pending.lock().expect("pending lock");
            for e in block.entries.into_iter().rev() {
                p.queue.push_front(e);
            }
            return Err(e);
        }
        index_block(&mut self.sealed.write().expect("ledger lock"), block.clone());
        *self.sealed_signal.lock().expect("signal lock") += 1;
        self.sealed_cv.notify_all();
        Ok(block)
    }

    /// Seals only if something is pending.
    pub fn seal_if_pending(&self) -> Result<Option<AnchorBlock>, AnchorError> {
        if self.pending_len() == 0 {
            return Ok(None);
        }
        self.seal().map(Some)
    }

    fn persist(&self, block: &AnchorBlock) -> Result<(), AnchorError> {
        if let Some(p) = &self.path {
            let mut f = OpenOptions::new().create(true).append(true).open(p)?;
            f.write_all(&block.encode())?;
            f.sync_data()?;
        }
        Ok(())
    }

    pub fn location(&self, entry_id: &str) -> Option<Location> {
        self.sealed.read().expect("ledger lock").by_entry.get(entry_id).copied()
    }

    /// Blocks until `entry_id` is sealed or `timeout` passes.
    pub fn wait_for_inclusion(&self, entry_id: &str, timeout: Duration) -> Option<Location> {
        let deadline = Instant::now() + timeout;
        let mut sig = self.sealed_signal.lock().expect("signal lock");
        loop {
            if let Some(l) = self.location(entry_id) {
                return Some(l);
            }
            let now = Instant::now();
            if now >= deadline {
                return None;
            }
            sig = self.sealed_cv.wait_timeout(sig, deadline - now).expect("signal lock").0;
        }
    }

    pub fn blocks(&self) -> Vec<AnchorBlock> {
        self.sealed.read().expect("ledger lock").blocks.clone()
    }

    pub fn headers(&self) -> Vec<BlockHeader> {
        self.sealed.read().expect("ledger lock").blocks.iter().map(AnchorBlock::header).collect()
    }

    pub fn verify(&self) -> ChainVerdict {
        verify_chain(&self.sealed.read().expect("ledger lock").blocks)
    }

    pub fn prove(&self, content_hash: &str) -> Option<InclusionProof> {
        let s = self.sealed.read().expect("ledger lock");
        let loc = s.by_content.get(content_hash)?.first()?;
        let b = &s.blocks[loc.block as usize];
        let pos = loc.position as usize;
        Some(InclusionProof {
            block_index: b.index,
            entry_position: loc.position,
            block_hash: b.block_hash,
            header: b.header(),
            entry: String::from_utf8_lossy(&b.entry_bytes[pos]).into_owned(),
        })
    }

    pub fn is_anchored(&self, content_hash: &str) -> bool {
        self.sealed.read().expect("ledger lock").by_content.contains_key(content_hash)
    }

    /// Starts the timer/batch sealer.
    pub fn spawn_sealer(self: &Arc<Self>, interval: Duration) -> SealerHandle {
        let stop = Arc::new(AtomicBool::new(false));
        let ledger = Arc::clone(self);
        let flag = Arc::clone(&stop);
        let handle = std::thread::spawn(move || {
            while !flag.load(Ordering::SeqCst) {
                {
                    let p = ledger.pending.lock().expect("pending lock");
                    if p.queue.len() < ledger.batch_cap {
                        let _ = ledger.pending_cv.wait_timeout(p, interval).expect("pending lock");
                    }
                }
                if let Err(e) = ledger.seal_if_pending() {
                    tracing::warn!(error = %e, "seal failed; will retry");
                }
            }
            let _ = ledger.seal_if_pending();
        });
        SealerHandle {
            stop,
            ledger: Arc::clone(self),
            handle: Some(handle),
        }
    }
}

fn index_block(s: &mut Sealed, block: AnchorBlock) {
    for (pos, e) in block.entries.iter().enumerate() {
        let loc = Location {
            block: block.index,
            position: pos as u32,
        };
        s.by_entry.insert(e.entry_id.clone(), loc);
        s.by_content.entry(e.content_hash.clone()).or_default().push(loc);
    }
    s.blocks.push(block);
}

/// Stops the sealer on drop after a final seal.
pub struct SealerHandle {
    stop: Arc<AtomicBool>,
    ledger: Arc<Ledger>,
    handle: Option<JoinHandle<()>>,
}

impl SealerHandle {
    pub fn stop(mut self) {
        self.shutdown();
    }

    fn shutdown(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        self.ledger.pending_cv.notify_all();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for SealerHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}

impl HashAnchor for Ledger {
    fn anchor_hash(&self, hash: [u8; 32]) -> Result<(), String> {
        self.submit(EntryDraft::public(EntryKind::Fact, &hex::encode(hash), "facts"))
            .map(|_| ())
            .map_err(|e| e.to_string())
    }
}
