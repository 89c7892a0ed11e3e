//! Block layout, hashing, chain verification and inclusion proofs.
//!
//! On disk each block is one record:
//!
//! ```text
//! u32 BE  record length (bytes that follow)
//! u64 BE  index
//! [32]    prev_hash
//! i64 BE  timestamp, epoch millis
//! u32 BE  entry count
//! { u32 BE length, canonical JSON entry }*
//! [32]    block_hash
//! ```
//!
//! `block_hash = SHA-256(index ‖ prev_hash ‖ timestamp ‖ SHA-256(entry)*)`
//! where each entry hash covers the stored JSON bytes verbatim.

use serde::{Deserialize, Serialize};

use super::entry::AnchorEntry;
use super::AnchorError;

pub const GENESIS_PREV: [u8; 32] = [0u8; 32];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnchorBlock {
    pub index: u64,
    pub prev_hash: [u8; 32],
    pub timestamp_ms: i64,
    pub entries: Vec<AnchorEntry>,
    /// Stored JSON of each entry, exactly as hashed.
    pub entry_bytes: Vec<Vec<u8>>,
    pub block_hash: [u8; 32],
}

/// Everything needed to recompute a block hash, without entry bodies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockHeader {
    pub index: u64,
    #[serde(with = "hex32")]
    pub prev_hash: [u8; 32],
    pub timestamp_ms: i64,
    #[serde(with = "hex32_vec")]
    pub entry_hashes: Vec<[u8; 32]>,
    #[serde(with = "hex32")]
    pub block_hash: [u8; 32],
}

pub fn compute_block_hash(index: u64, prev_hash: &[u8; 32], timestamp_ms: i64, entry_hashes: &[[u8; 32]]) -> [u8; 32] {
    let mut buf = Vec::with_capacity(8 + 32 + 8 + 32 * entry_hashes.len());
    buf.extend_from_slice(&index.to_be_bytes());
    buf.extend_from_slice(prev_hash);
    buf.extend_from_slice(&timestamp_ms.to_be_bytes());
    for h in entry_hashes {
        buf.extend_from_slice(h);
    }
    crate::sha256(&buf)
}

impl BlockHeader {
    pub fn recompute(&self) -> [u8; 32] {
        compute_block_hash(self.index, &self.prev_hash, self.timestamp_ms, &self.entry_hashes)
    }
}

impl AnchorBlock {
    /// Builds a block and computes its hash.
    pub fn build(index: u64, prev_hash: [u8; 32], timestamp_ms: i64, entries: Vec<AnchorEntry>) -> Self {
        let entry_bytes: Vec<Vec<u8>> = entries.iter().map(AnchorEntry::canonical_bytes).collect();
        let hashes: Vec<[u8; 32]> = entry_bytes.iter().map(|b| crate::sha256(b)).collect();
        Self {
            index,
            prev_hash,
            timestamp_ms,
            entries,
            entry_bytes,
            block_hash: compute_block_hash(index, &prev_hash, timestamp_ms, &hashes),
        }
    }

    pub fn entry_hashes(&self) -> Vec<[u8; 32]> {
        self.entry_bytes.iter().map(|b| crate::sha256(b)).collect()
    }

    pub fn header(&self) -> BlockHeader {
        BlockHeader {
            index: self.index,
            prev_hash: self.prev_hash,
            timestamp_ms: self.timestamp_ms,
            entry_hashes: self.entry_hashes(),
            block_hash: self.block_hash,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut body = Vec::new();
        body.extend_from_slice(&self.index.to_be_bytes());
        body.extend_from_slice(&self.prev_hash);
        body.extend_from_slice(&self.timestamp_ms.to_be_bytes());
        body.extend_from_slice(&(self.entry_bytes.len() as u32).to_be_bytes());
        for e in &self.entry_bytes {
            body.extend_from_slice(&(e.len() as u32).to_be_bytes());
            body.extend_from_slice(e);
        }
        body.extend_from_slice(&self.block_hash);
        let mut out = Vec::with_capacity(4 + body.len());
        out.extend_from_slice(&(body.len() as u32).to_be_bytes());
        out.extend_from_slice(&body);
        out
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.buf.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        Some(u32::from_be_bytes(self.take(4)?.try_into().ok()?))
    }

    fn u64(&mut self) -> Option<u64> {
        Some(u64::from_be_bytes(self.take(8)?.try_into().ok()?))
    }

    fn arr32(&mut self) -> Option<[u8; 32]> {
        self.take(32)?.try_into().ok()
    }
}

fn decode_body(body: &[u8]) -> Option<AnchorBlock> {
    let mut r = Reader { buf: body, pos: 0 };
    let index = r.u64()?;
    let prev_hash = r.arr32()?;
    let timestamp_ms = r.u64()? as i64;
    let count = r.u32()? as usize;
    // Each entry needs at least its length prefix.
    if count > body.len() / 4 {
        return None;
    }
    let mut entries = Vec::with_capacity(count);
    let mut entry_bytes = Vec::with_capacity(count);
    for _ in 0..count {
        let len = r.u32()? as usize;
        let raw = r.take(len)?;
        entries.push(serde_json::from_slice::<AnchorEntry>(raw).ok()?);
        entry_bytes.push(raw.to_vec());
    }
    let block_hash = r.arr32()?;
    (r.pos == body.len()).then_some(AnchorBlock {
        index,
        prev_hash,
        timestamp_ms,
        entries,
        entry_bytes,
        block_hash,
    })
}

/// Result of checking a chain end to end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ChainVerdict {
    Ok { blocks: u64 },
    FirstBadBlock { index: u64 },
}

/// Checks one block against its expected position and predecessor hash.
fn block_ok(b: &AnchorBlock, expected_index: u64, prev: &[u8; 32]) -> bool {
    b.index == expected_index
        && &b.prev_hash == prev
        && compute_block_hash(b.index, &b.prev_hash, b.timestamp_ms, &b.entry_hashes()) == b.block_hash
}

/// Verifies in-memory blocks.
pub fn verify_chain(blocks: &[AnchorBlock]) -> ChainVerdict {
    let mut prev = GENESIS_PREV;
    for (i, b) in blocks.iter().enumerate() {
        if !block_ok(b, i as u64, &prev) {
            return ChainVerdict::FirstBadBlock { index: i as u64 };
        }
        prev = b.block_hash;
    }
    ChainVerdict::Ok {
        blocks: blocks.len() as u64,
    }
}

/// Parses and verifies a serialized chain. A record that cannot be parsed
/// is reported at its ordinal position.
pub fn verify_chain_bytes(bytes: &[u8]) -> ChainVerdict {
    let mut prev = GENESIS_PREV;
    let mut r = Reader { buf: bytes, pos: 0 };
    let mut i = 0u64;
    while r.pos < bytes.len() {
        let bad = ChainVerdict::FirstBadBlock { index: i };
        let Some(len) = r.u32() else { return bad };
        let Some(body) = r.take(len as usize) else { return bad };
        let Some(block) = decode_body(body) else { return bad };
        if !block_ok(&block, i, &prev) {
            return bad;
        }
        prev = block.block_hash;
        i += 1;
    }
    ChainVerdict::Ok { blocks: i }
}

/// Decodes a chain, failing at the first structurally bad record.
pub fn decode_chain(bytes: &[u8]) -> Result<Vec<AnchorBlock>, AnchorError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let mut out = Vec::new();
    while r.pos < bytes.len() {
        let index = out.len() as u64;
        let block = r
            .u32()
            .and_then(|len| r.take(len as usize))
            .and_then(decode_body)
            .ok_or(AnchorError::ChainCorrupt { index })?;
        out.push(block);
    }
    Ok(out)
}

/// Self-contained evidence that an entry sits in a given block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InclusionProof {
    pub block_index: u64,
    pub entry_position: u32,
    #[serde(with = "hex32")]
    pub block_hash: [u8; 32],
    pub header: BlockHeader,
    /// The entry's stored JSON.
    pub entry: String,
}

pub fn prove_inclusion(blocks: &[AnchorBlock], content_hash: &str) -> Option<InclusionProof> {
    blocks.iter().find_map(|b| {
        b.entries
            .iter()
            .position(|e| e.content_hash == content_hash)
            .map(|pos| InclusionProof {
                block_index: b.index,
                entry_position: pos as u32,
                block_hash: b.block_hash,
                header: b.header(),
                entry: String::from_utf8_lossy(&b.entry_bytes[pos]).into_owned(),
            })
    })
}

/// Third-party check using only block headers. The headers must form a
/// valid chain and the proof's header must match the one at its index.
pub fn verify_inclusion(proof: &InclusionProof, content_hash: &str, headers: &[BlockHeader]) -> bool {
    let mut prev = GENESIS_PREV;
    for (i, h) in headers.iter().enumerate() {
        if h.index != i as u64 || h.prev_hash != prev || h.recompute() != h.block_hash {
            return false;
        }
        prev = h.block_hash;
    }
    let Some(anchored) = headers.get(proof.block_index as usize) else {
        return false;
    };
    let entry_ok = serde_json::from_str::<AnchorEntry>(&proof.entry)
        .map(|e| e.content_hash == content_hash)
        .unwrap_or(false);
    entry_ok
        && anchored == &proof.header
        && proof.block_hash == anchored.block_hash
        && proof.header.recompute() == proof.block_hash
        && proof
            .header
            .entry_hashes
            .get(proof.entry_position as usize)
            .is_some_and(|h| *h == crate::sha256(proof.entry.as_bytes()))
}

mod hex32 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8; 32], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 32], D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(&s)
            .ok()
            .and_then(|v| v.try_into().ok())
            .ok_or_else(|| serde::de::Error::custom("expected 64 hex chars"))
    }
}

mod hex32_vec {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[[u8; 32]], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(hex::encode))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<[u8; 32]>, D::Error> {
        Vec::<String>::deserialize(d)?
            .into_iter()
            .map(|s| {
                hex::decode(&s)
                    .ok()
                    .and_then(|v| v.try_into().ok())
                    .ok_or_else(|| serde::de::Error::custom("expected 64 hex chars"))
            })
            .collect()
    }
}
