//! Hash-chained anchor ledger, notarization and load harness.

pub mod chain;
pub mod entry;
pub mod harness;
pub mod ledger;
pub mod notary;

use thiserror::Error;

pub use chain::{
    compute_block_hash, decode_chain, prove_inclusion, verify_chain, verify_chain_bytes, verify_inclusion, AnchorBlock,
    BlockHeader, ChainVerdict, InclusionProof, GENESIS_PREV,
};
pub use entry::{open_payload, seal_payload, AnchorEntry, EntryDraft, EntryKind, MemberKey, MemberPublic, Visibility};
pub use harness::{run_harness, HarnessConfig, HarnessReport, HarnessRow};
pub use ledger::{Ledger, Location, Receipt, SealerHandle, DEFAULT_BATCH_CAP, DEFAULT_SEAL_INTERVAL};
pub use notary::{notarize, verify_notarization, NotarizationRecord, NotarizationStatus, NotaryDecision};

#[derive(Debug, Error)]
pub enum AnchorError {
    #[error("invalid entry: {0}")]
    InvalidEntry(String),
    #[error("chain corrupt at block {index}")]
    ChainCorrupt { index: u64 },
    #[error("ledger i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("state violation: {0}")]
    StateViolation(String),
    #[error("crypto: {0}")]
    Crypto(String),
    #[error("not found: {0}")]
    NotFound(String),
}
