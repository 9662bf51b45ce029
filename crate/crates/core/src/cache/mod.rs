//! Multi-resolution brick cache: page tables per level of detail mapping
//! brick keys to slots of a fixed brick pool, with coarser-level fallback on
//! lookup and least-recently-used replacement.
//!
//! Lookups take `&self` and may run concurrently; inserts, evictions and
//! frame ticks take `&mut self` and happen between frames.

mod layout;
mod table;

pub use layout::{BrickKey, BrickLayout};

use crate::error::{Error, Result};
use crate::math::Vec3;
use layout::Bracket;
use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicU32, Ordering};
use table::{PageTable, Reserve, UNMAPPED};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CacheConfig {
    /// Samples per brick side.
    pub brick_size: u32,
    /// Pool slots per axis.
    pub pool_dims: [u32; 3],
    /// Levels with more bricks than this use paged tables.
    pub virtualization_threshold: usize,
    /// Entries per page of a paged table.
    pub page_entries: usize,
    /// Resident pages per paged level.
    pub page_budget: usize,
}

impl Default for CacheConfig {
    fn default() -> Self {
        Self {
            brick_size: 40,
            pool_dims: [8, 8, 8],
            virtualization_threshold: 1 << 18,
            page_entries: 4096,
            page_budget: 64,
        }
    }
}

impl CacheConfig {
    pub fn large_scale() -> Self {
        Self {
            pool_dims: [30, 30, 30],
            ..Self::default()
        }
    }

    pub fn slot_count(&self) -> u64 {
        self.pool_dims.iter().map(|&d| d as u64).product()
    }

    pub fn voxels_per_brick(&self) -> u64 {
        (self.brick_size as u64).pow(3)
    }

    pub fn voxel_capacity(&self) -> u64 {
        self.slot_count() * self.voxels_per_brick()
    }

    /// Pool size at f32 per sample.
    pub fn pool_bytes(&self) -> u64 {
        self.voxel_capacity() * 4
    }

    /// Staging buffer for one request batch of `max_requests` bricks.
    pub fn staging_bytes(&self, max_requests: usize) -> u64 {
        max_requests as u64 * self.voxels_per_brick() * 4
    }

    pub fn validate(&self) -> Result<()> {
        if self.brick_size < 2 {
            return Err(Error::Config("brick_size must be >= 2".into()));
        }
        if self.slot_count() == 0 || self.slot_count() >= u32::MAX as u64 {
            return Err(Error::Config(format!(
                "pool_dims {:?} out of range",
                self.pool_dims
            )));
        }
        if self.page_entries == 0 || self.page_budget == 0 {
            return Err(Error::Config(
                "page_entries and page_budget must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LookupOutcome {
    Hit { value: f32, served_lod: u32 },
    Miss,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InsertOutcome {
    Inserted(u32),
    /// The key was already mapped; its data was rewritten in place.
    Refreshed(u32),
    /// No slot (or page) was free of use in the current frame.
    Deferred,
}

/// Residency counters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CacheStats {
    pub occupied: u64,
    pub capacity: u64,
    pub inserted_total: u64,
    pub evicted_total: u64,
    pub deferred_total: u64,
}

impl CacheStats {
    pub fn occupancy(&self) -> f64 {
        self.occupied as f64 / self.capacity as f64
    }
}

#[derive(Debug)]
struct Pool {
    brick_voxels: usize,
    data: Vec<f32>,
    owners: Vec<Option<BrickKey>>,
    last_used: Vec<AtomicU32>,
    free: Vec<u32>,
}

impl Pool {
    fn new(slots: usize, brick_voxels: usize) -> Self {
        Self {
            brick_voxels,
            data: vec![0.0; slots * brick_voxels],
            owners: vec![None; slots],
            last_used: (0..slots).map(|_| AtomicU32::new(0)).collect(),
            free: (0..slots as u32).rev().collect(),
        }
    }

    fn brick(&self, slot: u32) -> &[f32] {
        let s = slot as usize * self.brick_voxels;
        &self.data[s..s + self.brick_voxels]
    }

    fn release(&mut self, slot: u32) {
        self.owners[slot as usize] = None;
        self.free.push(slot);
    }

    /// LRU victim among slots not used in `frame`.
    fn victim(&self, frame: u32) -> Option<u32> {
        self.last_used
            .iter()
            .enumerate()
            .map(|(i, s)| (s.load(Ordering::Relaxed), i))
            .filter(|&(s, _)| s < frame)
            .min()
            .map(|(_, i)| i as u32)
    }
}

/// The page-table hierarchy plus the brick pool it points into.
#[derive(Debug)]
pub struct Mrpd {
    layout: BrickLayout,
    config: CacheConfig,
    tables: Vec<PageTable>,
    pool: Pool,
    frame: u32,
    stats: CacheStats,
}

impl Mrpd {
    /// Allocates the pool for a volume of `dims` lattice points.
    pub fn new(dims: [u32; 3], config: CacheConfig) -> Result<Self> {
        config.validate()?;
        let layout = BrickLayout::new(dims, config.brick_size)?;
        let tables = (0..=layout.max_lod())
            .map(|lod| {
                PageTable::new(
                    layout.brick_count(lod).expect("valid lod"),
                    config.virtualization_threshold,
                    config.page_entries,
                    config.page_budget,
                )
            })
            .collect();
        let slots = config.slot_count() as usize;
        let pool = Pool::new(slots, config.voxels_per_brick() as usize);
        Ok(Self {
            stats: CacheStats {
                capacity: slots as u64,
                ..Default::default()
            },
            layout,
            config,
            tables,
            pool,
            frame: 1,
        })
    }

    pub fn layout(&self) -> &BrickLayout {
        &self.layout
    }

    pub fn config(&self) -> &CacheConfig {
        &self.config
    }

    pub fn max_lod(&self) -> u32 {
        self.layout.max_lod()
    }

    pub fn frame(&self) -> u32 {
        self.frame
    }

    pub fn stats(&self) -> CacheStats {
        self.stats
    }

    pub fn is_virtualized(&self, lod: u32) -> bool {
        self.tables[lod as usize].is_virtual()
    }

    /// Resident pages of a paged level (0 for directly stored levels).
    pub fn resident_pages(&self, lod: u32) -> usize {
        self.tables[lod as usize].resident_pages()
    }

    /// Starts the next frame; returns its id.
    pub fn tick_frame(&mut self) -> u32 {
        self.frame += 1;
        self.frame
    }

    /// Pool slot currently holding `key`.
    pub fn slot_of(&self, key: BrickKey) -> Option<u32> {
        if !self.layout.contains(key) {
            return None;
        }
        let e = self.tables[key.lod as usize].get(self.layout.linear_index(key), self.frame);
        (e != UNMAPPED).then(|| e - 1)
    }

    pub fn is_mapped(&self, key: BrickKey) -> bool {
        self.slot_of(key).is_some()
    }

    /// Last frame in which `slot` served a lookup or was written.
    pub fn slot_stamp(&self, slot: u32) -> u32 {
        self.pool.last_used[slot as usize].load(Ordering::Relaxed)
    }

    pub fn slot_owner(&self, slot: u32) -> Option<BrickKey> {
        self.pool.owners[slot as usize]
    }

    /// Samples of a mapped brick, x fastest.
    pub fn brick_data(&self, key: BrickKey) -> Option<&[f32]> {
        self.slot_of(key).map(|s| self.pool.brick(s))
    }

    /// Every mapped key.
    pub fn mapped_keys(&self) -> Vec<BrickKey> {
        self.tables
            .iter()
            .enumerate()
            .flat_map(|(lod, t)| {
                t.mapped()
                    .into_iter()
                    .map(move |(i, _)| self.layout.key_at(lod as u32, i))
            })
            .collect()
    }

    /// Value at lattice position `p`, from the `lod` brick(s) when mapped and
    /// otherwise from the finest coarser level whose bricks are. Every
    /// unmapped brick the query needed at `lod` is passed to `missing`.
    pub fn lookup(
        &self,
        p: Vec3,
        lod: u32,
        mut missing: impl FnMut(BrickKey),
    ) -> Result<LookupOutcome> {
        if lod > self.layout.max_lod() {
            return Err(Error::LodOutOfRange {
                lod,
                max_lod: self.layout.max_lod(),
            });
        }
        for l in lod..=self.layout.max_lod() {
            if let Some(value) = self.try_level(p, l, l == lod, &mut missing) {
                return Ok(LookupOutcome::Hit {
                    value,
                    served_lod: l,
                });
            }
        }
        Ok(LookupOutcome::Miss)
    }

    /// Like [`Mrpd::lookup`] but collects the missing keys.
    pub fn lookup_collect(&self, p: Vec3, lod: u32) -> Result<(LookupOutcome, Vec<BrickKey>)> {
        let mut keys = Vec::new();
        let out = self.lookup(p, lod, |k| keys.push(k))?;
        Ok((out, keys))
    }

    #[inline]
    fn try_level(
        &self,
        p: Vec3,
        lod: u32,
        report: bool,
        missing: &mut impl FnMut(BrickKey),
    ) -> Option<f32> {
        let br = [
            self.layout.bracket(p.x, lod, 0),
            self.layout.bracket(p.y, lod, 1),
            self.layout.bracket(p.z, lod, 2),
        ];
        if br.iter().all(|b| b.k0 == b.k1) {
            return self.try_single(&br, lod, report, missing);
        }
        self.try_straddle(&br, lod, report, missing)
    }

    /// All eight corners in one brick.
    #[inline]
    fn try_single(
        &self,
        br: &[Bracket; 3],
        lod: u32,
        report: bool,
        missing: &mut impl FnMut(BrickKey),
    ) -> Option<f32> {
        let g = self.layout.grids_at(lod);
        let index = [br[0].k0, br[1].k0, br[2].k0];
        let linear = index[0] as usize
            + g[0] as usize * (index[1] as usize + g[1] as usize * index[2] as usize);
        let e = self.tables[lod as usize].get(linear, self.frame);
        if e == UNMAPPED {
            if report {
                missing(BrickKey::new(lod, index));
            }
            return None;
        }
        let slot = e - 1;
        let b = self.config.brick_size as usize;
        let data = self.pool.brick(slot);
        let base = br[0].i0 as usize + b * (br[1].i0 as usize + b * br[2].i0 as usize);
        let dx = (br[0].i1 - br[0].i0) as usize;
        let dy = (br[1].i1 - br[1].i0) as usize * b;
        let dz = (br[2].i1 - br[2].i0) as usize * b * b;
        let c = &data[base..=base + dx + dy + dz];
        let (tx, ty, tz) = (br[0].t, br[1].t, br[2].t);
        let lerp = |a: f32, b: f32, t: f32| a + (b - a) * t;
        let x00 = lerp(c[0], c[dx], tx);
        let x10 = lerp(c[dy], c[dy + dx], tx);
        let x01 = lerp(c[dz], c[dz + dx], tx);
        let x11 = lerp(c[dz + dy], c[dz + dy + dx], tx);
        let v = lerp(lerp(x00, x10, ty), lerp(x01, x11, ty), tz);
        self.pool.last_used[slot as usize].store(self.frame, Ordering::Relaxed);
        Some(v)
    }

    /// Corners spread over up to eight bricks.
    fn try_straddle(
        &self,
        br: &[Bracket; 3],
        lod: u32,
        report: bool,
        missing: &mut impl FnMut(BrickKey),
    ) -> Option<f32> {
        let n = br.map(|b| if b.k0 == b.k1 { 1 } else { 2 });
        let table = &self.tables[lod as usize];
        let g = self.layout.grid_dims(lod).expect("valid lod");
        let mut slots = [[[0u32; 2]; 2]; 2];
        let mut complete = true;
        for uz in 0..n[2] {
            for uy in 0..n[1] {
                for ux in 0..n[0] {
                    let index = [
                        if ux == 0 { br[0].k0 } else { br[0].k1 },
                        if uy == 0 { br[1].k0 } else { br[1].k1 },
                        if uz == 0 { br[2].k0 } else { br[2].k1 },
                    ];
                    let linear = index[0] as usize
                        + g[0] as usize * (index[1] as usize + g[1] as usize * index[2] as usize);
                    let e = table.get(linear, self.frame);
                    if e == UNMAPPED {
                        complete = false;
                        if !report {
                            return None;
                        }
                        missing(BrickKey::new(lod, index));
                    } else {
                        slots[uz][uy][ux] = e - 1;
                    }
                }
            }
        }
        if !complete {
            return None;
        }
        let b = self.config.brick_size as usize;
        let mut value = 0.0f32;
        for c in 0..8 {
            let (cx, cy, cz) = (c & 1, (c >> 1) & 1, c >> 2);
            let w = |a: usize, hi: usize| if hi == 1 { br[a].t } else { 1.0 - br[a].t };
            let weight = w(0, cx) * w(1, cy) * w(2, cz);
            if weight == 0.0 {
                continue;
            }
            let u = |a: usize, hi: usize| (hi == 1 && br[a].k1 != br[a].k0) as usize;
            let slot = slots[u(2, cz)][u(1, cy)][u(0, cx)];
            let i = |a: usize, hi: usize| if hi == 1 { br[a].i1 } else { br[a].i0 } as usize;
            let idx = i(0, cx) + b * (i(1, cy) + b * i(2, cz));
            value += weight * self.pool.brick(slot)[idx];
        }
        for uz in 0..n[2] {
            for uy in 0..n[1] {
                for ux in 0..n[0] {
                    self.pool.last_used[slots[uz][uy][ux] as usize]
                        .store(self.frame, Ordering::Relaxed);
                }
            }
        }
        Some(value)
    }

    /// Stores a filled brick, reusing its slot if it is already mapped,
    /// otherwise taking a free slot or the least recently used one not
    /// touched this frame.
    pub fn insert(&mut self, key: BrickKey, samples: &[f32]) -> Result<InsertOutcome> {
        self.layout.check_key(key)?;
        let n = self.pool.brick_voxels;
        if samples.len() != n {
            return Err(Error::Dimensions(format!(
                "brick needs {n} samples, got {}",
                samples.len()
            )));
        }
        let frame = self.frame;
        if let Some(slot) = self.slot_of(key) {
            self.write_slot(slot, samples);
            return Ok(InsertOutcome::Refreshed(slot));
        }
        let linear = self.layout.linear_index(key);
        match self.tables[key.lod as usize].reserve(linear, frame) {
            Reserve::Ready => {}
            Reserve::Full => {
                self.stats.deferred_total += 1;
                return Ok(InsertOutcome::Deferred);
            }
            Reserve::Evicted(entries) => {
                for (_, slot) in entries {
                    self.pool.release(slot);
                    self.stats.occupied -= 1;
                    self.stats.evicted_total += 1;
                }
            }
        }
        let slot = match self.pool.free.pop() {
            Some(s) => s,
            None => {
                let Some(s) = self.pool.victim(frame) else {
                    self.stats.deferred_total += 1;
                    return Ok(InsertOutcome::Deferred);
                };
                let old = self.pool.owners[s as usize].expect("occupied slot has an owner");
                let old_linear = self.layout.linear_index(old);
                self.tables[old.lod as usize].set(old_linear, UNMAPPED);
                self.pool.owners[s as usize] = None;
                self.stats.occupied -= 1;
                self.stats.evicted_total += 1;
                s
            }
        };
        self.write_slot(slot, samples);
        self.pool.owners[slot as usize] = Some(key);
        self.tables[key.lod as usize].set(linear, slot + 1);
        self.stats.occupied += 1;
        self.stats.inserted_total += 1;
        Ok(InsertOutcome::Inserted(slot))
    }

    fn write_slot(&mut self, slot: u32, samples: &[f32]) {
        let n = self.pool.brick_voxels;
        let s = slot as usize * n;
        self.pool.data[s..s + n].copy_from_slice(samples);
        *self.pool.last_used[slot as usize].get_mut() = self.frame;
    }

    /// Drops every brick; the frame counter keeps running.
    pub fn reset(&mut self) {
        for t in &mut self.tables {
            t.clear();
        }
        let slots = self.pool.owners.len();
        self.pool.owners.fill(None);
        self.pool.free = (0..slots as u32).rev().collect();
        for s in &mut self.pool.last_used {
            *s.get_mut() = 0;
        }
        self.stats.occupied = 0;
    }

    /// Checks that mapped entries and occupied slots correspond one to one.
    pub fn verify(&self) -> std::result::Result<(), String> {
        let mut seen = vec![false; self.pool.owners.len()];
        let mut mapped = 0u64;
        for (lod, t) in self.tables.iter().enumerate() {
            for (linear, slot) in t.mapped() {
                let key = self.layout.key_at(lod as u32, linear);
                let s = slot as usize;
                if s >= seen.len() {
                    return Err(format!("{key:?} maps to slot {slot} beyond the pool"));
                }
                if std::mem::replace(&mut seen[s], true) {
                    return Err(format!("slot {slot} mapped twice"));
                }
                if self.pool.owners[s] != Some(key) {
                    return Err(format!(
                        "{key:?} maps to slot {slot} owned by {:?}",
                        self.pool.owners[s]
                    ));
                }
                mapped += 1;
            }
        }
        for (s, owner) in self.pool.owners.iter().enumerate() {
            if owner.is_some() != seen[s] {
                return Err(format!("slot {s} owner {owner:?} without a mapping"));
            }
        }
        let free = self.pool.free.len() as u64;
        if mapped != self.stats.occupied || mapped + free != self.stats.capacity {
            return Err(format!(
                "{mapped} mapped, {free} free, counters say {} of {}",
                self.stats.occupied, self.stats.capacity
            ));
        }
        Ok(())
    }
}
