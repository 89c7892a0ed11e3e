//! Load harness: parallel submitters against a live sealer.

use std::collections::HashMap;
use std::io::Write;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::Serialize;

use super::entry::{EntryDraft, EntryKind};
use super::ledger::Ledger;
use super::AnchorError;

#[derive(Debug, Clone)]
pub struct HarnessConfig {
    pub requests: usize,
    pub parallelism: usize,
    pub seal_interval: Duration,
    /// Per-request wait for inclusion.
    pub inclusion_timeout: Duration,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            requests: 1000,
            parallelism: 64,
            seal_interval: Duration::from_millis(50),
            inclusion_timeout: Duration::from_secs(30),
        }
    }
}

/// One CSV row. Times are milliseconds since the run started; `include_ms`
/// is empty when the entry was never observed in a block.
#[derive(Debug, Clone, Serialize)]
pub struct HarnessRow {
    pub request_id: String,
    pub submit_ms: f64,
    pub include_ms: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct HarnessReport {
    pub requests: usize,
    pub parallelism: usize,
    pub inclusions: usize,
    pub duplicates: usize,
    pub missing: usize,
    /// Receipt sequence numbers were issued in per-worker submission order.
    pub receipts_monotone: bool,
    pub p50_ms: f64,
    pub p90_ms: f64,
    pub p99_ms: f64,
    pub mean_ms: f64,
    pub throughput_per_s: f64,
    pub elapsed_ms: f64,
    #[serde(skip)]
    pub rows: Vec<HarnessRow>,
}

impl HarnessReport {
    pub fn exactly_once(&self) -> bool {
        self.inclusions == self.requests && self.duplicates == 0 && self.missing == 0
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), AnchorError> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r).map_err(|e| AnchorError::Io(std::io::Error::other(e)))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Nearest-rank percentile over sorted values.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1000.0
}

/// Drives `requests` submissions from `parallelism` threads. Each worker
/// submits and waits for its entry to be sealed before the next one.
pub fn run_harness(ledger: &Arc<Ledger>, cfg: &HarnessConfig) -> Result<HarnessReport, AnchorError> {
    if cfg.requests == 0 || cfg.parallelism == 0 {
        return Err(AnchorError::InvalidEntry("harness needs n >= 1 and parallelism >= 1".into()));
    }
    let run = uuid::Uuid::new_v4();
    let sealer = ledger.spawn_sealer(cfg.seal_interval);
    let start = Instant::now();
    let workers = cfg.parallelism.min(cfg.requests);
    let results: Vec<Result<Vec<(HarnessRow, u64)>, AnchorError>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let ledger = Arc::clone(ledger);
                s.spawn(move || {
                    let mut rows = Vec::new();
                    for i in (w..cfg.requests).step_by(workers) {
                        let hash = crate::sha256_hex(format!("harness-{run}-{i}").as_bytes());
                        let submit = start.elapsed();
                        let receipt = ledger.submit(EntryDraft::public(EntryKind::Document, &hash, "harness"))?;
                        let included = ledger
                            .wait_for_inclusion(&receipt.entry_id, cfg.inclusion_timeout)
                            .map(|_| ms(start.elapsed()));
                        rows.push((
                            HarnessRow {
                                request_id: receipt.entry_id,
                                submit_ms: ms(submit),
                                include_ms: included,
                            },
                            receipt.sequence,
                        ));
                    }
                    Ok(rows)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("harness worker panicked")).collect()
    });
    let elapsed = start.elapsed();
    sealer.stop();

    let mut rows = Vec::with_capacity(cfg.requests);
    let mut receipts_monotone = true;
    for r in results {
        let worker_rows = r?;
        receipts_monotone &= worker_rows.windows(2).all(|p| p[0].1 < p[1].1);
        rows.extend(worker_rows.into_iter().map(|(row, _)| row));
    }
    rows.sort_by(|a, b| a.submit_ms.total_cmp(&b.submit_ms));

    // Count appearances straight from the sealed blocks.
    let mut seen: HashMap<&str, usize> = HashMap::new();
    let blocks = ledger.blocks();
    for b in &blocks {
        for e in &b.entries {
            *seen.entry(e.entry_id.as_str()).or_default() += 1;
        }
    }
    let mut inclusions = 0;
    let mut duplicates = 0;
    let mut missing = 0;
    for r in &rows {
        match seen.get(r.request_id.as_str()).copied().unwrap_or(0) {
            0 => missing += 1,
            1 => inclusions += 1,
            _ => {
                inclusions += 1;
                duplicates += 1;
            }
        }
    }
    let mut lat: Vec<f64> = rows.iter().filter_map(|r| r.include_ms.map(|i| i - r.submit_ms)).collect();
    lat.sort_by(f64::total_cmp);
    let mean = if lat.is_empty() { 0.0 } else { lat.iter().sum::<f64>() / lat.len() as f64 };
    Ok(HarnessReport {
        requests: cfg.requests,
        parallelism: cfg.parallelism,
        inclusions,
        duplicates,
        missing,
        receipts_monotone,
        p50_ms: percentile(&lat, 50.0),
        p90_ms: percentile(&lat, 90.0),
        p99_ms: percentile(&lat, 99.0),
        mean_ms: mean,
        throughput_per_s: inclusions as f64 / elapsed.as_secs_f64().max(1e-9),
        elapsed_ms: ms(elapsed),
        rows,
    })
}
