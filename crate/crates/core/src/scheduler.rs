//! Brick request handling: ranking missed bricks, choosing request batches,
//! filling bricks from the field and handing them to the cache at frame
//! boundaries.

use crate::cache::{BrickKey, BrickLayout, InsertOutcome, Mrpd};
use crate::error::{Error, Result};
use crate::field::Field;
use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc;
use std::sync::Arc;
use std::thread::JoinHandle;

/// How request batches are executed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PumpMode {
    /// A background worker fills batches while frames render.
    #[default]
    Async,
    /// Batches are filled synchronously at a frame boundary and inserted at
    /// the following one. Fully deterministic.
    Inline,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchedulerConfig {
    pub max_num_requests: usize,
    /// Rank by request count; when off, the most recently reported bricks go
    /// first in linear brick order.
    pub ranking: bool,
    pub rank_clamp: u32,
    pub mode: PumpMode,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            max_num_requests: 40,
            ranking: true,
            rank_clamp: 1000,
            mode: PumpMode::Async,
        }
    }
}

/// Snapshot of one request record.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RequestEntry {
    pub key: BrickKey,
    pub base: u32,
    pub hits: u32,
    pub rank: u64,
}

const HITS_MASK: u64 = 0xFFFF_FFFF;

/// Dense per-level request records, one packed word per brick: the high
/// half stores `base + 1` (0 when absent), the low half the hit count.
/// Reports from concurrent samplers may lose increments.
#[derive(Debug)]
pub struct RequestTable {
    layout: BrickLayout,
    words: Vec<Vec<AtomicU64>>,
    ranking: bool,
    clamp: u32,
}

impl RequestTable {
    pub fn new(layout: &BrickLayout, ranking: bool, clamp: u32) -> Self {
        let words = (0..=layout.max_lod())
            .map(|lod| {
                (0..layout.brick_count(lod).expect("valid lod"))
                    .map(|_| AtomicU64::new(0))
                    .collect()
            })
            .collect();
        Self {
            layout: layout.clone(),
            words,
            ranking,
            clamp,
        }
    }

    pub fn ranking(&self) -> bool {
        self.ranking
    }

    fn word(&self, key: BrickKey) -> &AtomicU64 {
        &self.words[key.lod as usize][self.layout.linear_index(key)]
    }

    /// Records one request for `key` in `frame`.
    #[inline]
    pub fn report_miss(&self, key: BrickKey, frame: u32) {
        let w = self.word(key);
        let fresh = ((frame as u64) + 1) << 32;
        if !self.ranking {
            w.store(fresh, Ordering::Relaxed);
            return;
        }
        let cur = w.load(Ordering::Relaxed);
        if cur == 0 {
            if w.compare_exchange(0, fresh, Ordering::Relaxed, Ordering::Relaxed)
                .is_ok()
            {
                return;
            }
        } else if cur & HITS_MASK >= self.clamp as u64 {
            return;
        }
        w.fetch_add(1, Ordering::Relaxed);
    }

    /// Replaces the record with a fresh one at `frame`.
    pub fn reset_entry(&self, key: BrickKey, frame: u32) {
        self.word(key)
            .store(((frame as u64) + 1) << 32, Ordering::Relaxed);
    }

    fn decode(&self, key: BrickKey, w: u64) -> Option<RequestEntry> {
        if w == 0 {
            return None;
        }
        let base = ((w >> 32) - 1) as u32;
        let hits = (w & HITS_MASK) as u32;
        let rank = if self.ranking {
            base as u64 + hits.min(self.clamp) as u64
        } else {
            base as u64
        };
        Some(RequestEntry {
            key,
            base,
            hits,
            rank,
        })
    }

    pub fn entry(&self, key: BrickKey) -> Option<RequestEntry> {
        self.decode(key, self.word(key).load(Ordering::Relaxed))
    }

    /// All present records.
    pub fn entries(&self) -> Vec<RequestEntry> {
        let mut out = Vec::new();
        for (lod, words) in self.words.iter().enumerate() {
            for (i, w) in words.iter().enumerate() {
                let w = w.load(Ordering::Relaxed);
                if w != 0 {
                    out.extend(self.decode(self.layout.key_at(lod as u32, i), w));
                }
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.words
            .iter()
            .flatten()
            .filter(|w| w.load(Ordering::Relaxed) != 0)
            .count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clear(&self) {
        for w in self.words.iter().flatten() {
            w.store(0, Ordering::Relaxed);
        }
    }

    /// Removes and returns the `n` highest-ranked records, ties going to the
    /// lower linear brick index and then the finer level. Records for which
    /// `skip` holds (already resident or in flight) are dropped.
    pub fn select_batch(&self, n: usize, skip: impl Fn(BrickKey) -> bool) -> Vec<BrickKey> {
        let mut cands: Vec<(u64, usize, u32)> = Vec::new();
        for (lod, words) in self.words.iter().enumerate() {
            for (i, w) in words.iter().enumerate() {
                let raw = w.load(Ordering::Relaxed);
                if raw == 0 {
                    continue;
                }
                let key = self.layout.key_at(lod as u32, i);
                if skip(key) {
                    w.store(0, Ordering::Relaxed);
                    continue;
                }
                let e = self.decode(key, raw).expect("present");
                cands.push((e.rank, i, lod as u32));
            }
        }
        cands.sort_unstable_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        cands.truncate(n);
        cands
            .into_iter()
            .map(|(_, i, lod)| {
                self.words[lod as usize][i].store(0, Ordering::Relaxed);
                self.layout.key_at(lod, i)
            })
            .collect()
    }
}

/// Lattice coordinates of a brick's samples; see
/// [`BrickLayout::brick_coords`].
pub fn generate_brick_coords(layout: &BrickLayout, key: BrickKey) -> Result<Vec<[u32; 3]>> {
    layout.brick_coords(key)
}

/// A filled brick awaiting insertion.
#[derive(Clone, Debug)]
pub struct CompletedBrick {
    pub key: BrickKey,
    pub samples: Vec<f32>,
}

/// Fills each brick with one field call per brick.
pub fn fulfill(
    layout: &BrickLayout,
    keys: &[BrickKey],
    field: &dyn Field,
) -> Result<Vec<CompletedBrick>> {
    keys.iter()
        .map(|&key| {
            let positions = layout.brick_positions(key)?;
            let samples = field.sample_batch(&positions)?;
            Ok(CompletedBrick { key, samples })
        })
        .collect()
}

/// Fills and inserts every brick of one level directly, bypassing the
/// request queue. Returns the number of bricks inserted.
pub fn preload_level(mrpd: &mut Mrpd, field: &dyn Field, lod: u32) -> Result<usize> {
    let keys: Vec<_> = mrpd.layout().keys(lod)?.collect();
    let mut n = 0;
    for chunk in keys.chunks(64) {
        for brick in fulfill(mrpd.layout(), chunk, field)? {
            if !matches!(
                mrpd.insert(brick.key, &brick.samples)?,
                InsertOutcome::Deferred
            ) {
                n += 1;
            }
        }
    }
    Ok(n)
}

struct BatchResult {
    generation: u64,
    keys: Vec<BrickKey>,
    result: Result<Vec<CompletedBrick>>,
}

struct Worker {
    tx: Option<mpsc::Sender<(u64, Vec<BrickKey>)>>,
    rx: mpsc::Receiver<BatchResult>,
    handle: Option<JoinHandle<()>>,
}

impl Worker {
    fn spawn(layout: BrickLayout, field: Arc<dyn Field>) -> Self {
        let (tx, jobs) = mpsc::channel::<(u64, Vec<BrickKey>)>();
        let (done, rx) = mpsc::channel();
        let handle = std::thread::Builder::new()
            .name("brick-requests".into())
            .spawn(move || {
                for (generation, keys) in jobs {
                    let result = fulfill(&layout, &keys, field.as_ref());
                    if done
                        .send(BatchResult {
                            generation,
                            keys,
                            result,
                        })
                        .is_err()
                    {
                        break;
                    }
                }
            })
            .expect("spawn request worker");
        Self {
            tx: Some(tx),
            rx,
            handle: Some(handle),
        }
    }
}

impl Drop for Worker {
    fn drop(&mut self) {
        self.tx.take();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

/// What happened at one frame boundary.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct BoundaryReport {
    pub inserted: usize,
    pub deferred: usize,
    pub failed: usize,
    pub dispatched: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SchedulerStats {
    pub batches: u64,
    pub bricks_loaded_total: u64,
    pub failed_batches: u64,
}

/// Request handler feeding one cache.
pub struct Scheduler {
    config: SchedulerConfig,
    layout: BrickLayout,
    table: RequestTable,
    field: Arc<dyn Field>,
    worker: Option<Worker>,
    ready: Option<BatchResult>,
    in_flight: Vec<BrickKey>,
    generation: u64,
    stats: SchedulerStats,
    last_error: Option<String>,
}

impl Scheduler {
    pub fn new(
        field: Arc<dyn Field>,
        layout: &BrickLayout,
        config: SchedulerConfig,
    ) -> Result<Self> {
        if config.max_num_requests == 0 {
            return Err(Error::Config("max_num_requests must be >= 1".into()));
        }
        let worker = match config.mode {
            PumpMode::Async => Some(Worker::spawn(layout.clone(), field.clone())),
            PumpMode::Inline => None,
        };
        Ok(Self {
            table: RequestTable::new(layout, config.ranking, config.rank_clamp),
            layout: layout.clone(),
            config,
            field,
            worker,
            ready: None,
            in_flight: Vec::new(),
            generation: 0,
            stats: SchedulerStats::default(),
            last_error: None,
        })
    }

    pub fn config(&self) -> &SchedulerConfig {
        &self.config
    }

    pub fn table(&self) -> &RequestTable {
        &self.table
    }

    pub fn stats(&self) -> SchedulerStats {
        self.stats
    }

    /// Bricks selected but not yet inserted.
    pub fn in_flight(&self) -> &[BrickKey] {
        &self.in_flight
    }

    /// Message of the most recent failed batch.
    pub fn last_error(&self) -> Option<&str> {
        self.last_error.as_deref()
    }

    /// Ends the cache's current frame: inserts bricks that finished since the
    /// previous boundary, starts a new batch if none is outstanding, and
    /// advances the cache's frame counter.
    pub fn frame_boundary(&mut self, mrpd: &mut Mrpd) -> Result<BoundaryReport> {
        let mut report = BoundaryReport::default();
        let frame = mrpd.frame();
        if let Some(done) = self.poll() {
            self.in_flight.clear();
            match done.result {
                Ok(bricks) => {
                    for b in bricks {
                        match mrpd.insert(b.key, &b.samples)? {
                            InsertOutcome::Deferred => {
                                self.table.report_miss(b.key, frame);
                                report.deferred += 1;
                            }
                            _ => {
                                report.inserted += 1;
                                self.stats.bricks_loaded_total += 1;
                            }
                        }
                    }
                }
                Err(e) => {
                    self.last_error = Some(e.to_string());
                    self.stats.failed_batches += 1;
                    report.failed = done.keys.len();
                    for &k in &done.keys {
                        self.table.reset_entry(k, frame);
                    }
                }
            }
        }
        if self.in_flight.is_empty() {
            let in_flight = &self.in_flight;
            let keys = self.table.select_batch(self.config.max_num_requests, |k| {
                mrpd.is_mapped(k) || in_flight.contains(&k)
            });
            if !keys.is_empty() {
                report.dispatched = keys.len();
                self.stats.batches += 1;
                self.dispatch(keys);
            }
        }
        mrpd.tick_frame();
        Ok(report)
    }

    fn dispatch(&mut self, keys: Vec<BrickKey>) {
        self.in_flight = keys.clone();
        match &self.worker {
            Some(w) => {
                w.tx.as_ref()
                    .expect("worker alive")
                    .send((self.generation, keys))
                    .expect("request worker stopped");
            }
            None => {
                let result = fulfill(&self.layout, &keys, self.field.as_ref());
                self.ready = Some(BatchResult {
                    generation: self.generation,
                    keys,
                    result,
                });
            }
        }
    }

    fn poll(&mut self) -> Option<BatchResult> {
        if let Some(r) = self.ready.take() {
            return Some(r);
        }
        let w = self.worker.as_ref()?;
        while let Ok(r) = w.rx.try_recv() {
            if r.generation == self.generation {
                return Some(r);
            }
        }
        None
    }

    /// Blocks until the outstanding batch (if any) has been filled, so the
    /// next boundary inserts it.
    pub fn wait_idle(&mut self) {
        if self.in_flight.is_empty() || self.ready.is_some() {
            return;
        }
        let Some(w) = self.worker.as_ref() else {
            return;
        };
        while let Ok(r) = w.rx.recv() {
            if r.generation == self.generation {
                self.ready = Some(r);
                return;
            }
        }
    }

    /// Forgets all requests; a batch still being filled is discarded.
    pub fn reset(&mut self) {
        self.table.clear();
        self.generation += 1;
        self.in_flight.clear();
        self.ready = None;
    }
}
