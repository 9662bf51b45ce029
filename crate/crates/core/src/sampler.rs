//! Per-sample level-of-detail selection and cache-backed volume sampling.

use crate::cache::{LookupOutcome, Mrpd};
use crate::error::Result;
use crate::field::Field;
use crate::math::{splitmix64, Vec3};
use crate::scheduler::RequestTable;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cell::UnsafeCell;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};

/// 32-bit xorshift generator (13, 17, 5).
#[derive(Clone, Copy, Debug)]
pub struct Xorshift32(u32);

impl Xorshift32 {
    /// Seeds from any 64-bit value; a zero state is replaced.
    pub fn new(seed: u64) -> Self {
        let s = (seed ^ (seed >> 32)) as u32;
        Self(if s == 0 { 0x9E37_79B9 } else { s })
    }

    #[inline]
    pub fn next_u32(&mut self) -> u32 {
        let mut x = self.0;
        x ^= x << 13;
        x ^= x >> 17;
        x ^= x << 5;
        self.0 = x;
        x
    }

    /// Uniform in `[0, 1)`.
    #[inline]
    pub fn next_f32(&mut self) -> f32 {
        (self.next_u32() >> 8) as f32 * (1.0 / (1u32 << 24) as f32)
    }
}

/// Seed for one frame, derived from the session's global seed.
pub fn frame_seed(global: u64, frame: u32) -> u64 {
    splitmix64(global ^ splitmix64(frame as u64))
}

/// How the fractional part of the continuous level is resolved.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StochasticLod {
    /// Round up with probability `frac(D)`; the expected level equals `D`.
    #[default]
    Corrected,
    /// Round up when a uniform draw exceeds `frac(D)`.
    AsPrinted,
    /// Always round down.
    Off,
}

/// Level for continuous level `d`, clamped to `[0, max_lod]`.
#[inline]
pub fn select_lod(d: f32, max_lod: u32, mode: StochasticLod, rng: &mut Xorshift32) -> u32 {
    let d = d.max(0.0);
    let base = d.floor();
    let frac = d - base;
    let up = match mode {
        StochasticLod::Corrected => rng.next_f32() < frac,
        StochasticLod::AsPrinted => rng.next_f32() > frac,
        StochasticLod::Off => false,
    };
    ((base as u32).saturating_add(up as u32)).min(max_lod)
}

/// Maps camera distance to a continuous level: `D = distance * scale + offset`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LodTransform {
    pub scale: f32,
    pub offset: f32,
}

impl LodTransform {
    pub fn fixed(scale: f32) -> Self {
        Self { scale, offset: 0.0 }
    }

    #[inline]
    pub fn level(&self, distance: f32) -> f32 {
        distance * self.scale + self.offset
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LodPolicy {
    /// Levels per unit of camera distance (voxels).
    pub lod_scale: f32,
    /// Start at the coarsest level and blend to `lod_scale`.
    pub preload: bool,
    pub preload_frames: u32,
    pub stochastic: StochasticLod,
}

impl Default for LodPolicy {
    fn default() -> Self {
        Self {
            lod_scale: 0.005,
            preload: true,
            preload_frames: 120,
            stochastic: StochasticLod::Corrected,
        }
    }
}

impl LodPolicy {
    /// Level mapping `frame` frames after the cache was (re)started: the
    /// continuous level blends linearly from `max_lod` everywhere at frame 0
    /// to the user's `distance * lod_scale` at `preload_frames`.
    pub fn transform(&self, frame: u32, max_lod: u32) -> LodTransform {
        if !self.preload || frame >= self.preload_frames {
            return LodTransform::fixed(self.lod_scale);
        }
        let w = frame as f32 / self.preload_frames as f32;
        LodTransform {
            scale: self.lod_scale * w,
            offset: (1.0 - w) * max_lod as f32,
        }
    }
}

/// Distance-proportional part of [`LodPolicy::transform`].
pub fn effective_lod_scale(policy: &LodPolicy, frame: u32, max_lod: u32) -> f32 {
    policy.transform(frame, max_lod).scale
}

/// One sample that no cached brick covered.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Miss {
    /// Normalized field coordinate.
    pub position: Vec3,
    pub index: u32,
}

/// Fixed-capacity append buffer shared by sampling threads. Each push
/// reserves a unique slot with one atomic increment.
pub struct MissBuffer {
    slots: Box<[UnsafeCell<Miss>]>,
    len: AtomicUsize,
}

// SAFETY: a slot is written only by the thread that reserved its index, and
// slots are read only after the buffer is owned again (`into_vec`).
unsafe impl Sync for MissBuffer {}

impl MissBuffer {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            slots: (0..n).map(|_| UnsafeCell::new(Miss::default())).collect(),
            len: AtomicUsize::new(0),
        }
    }

    #[inline]
    pub fn push(&self, miss: Miss) {
        let i = self.len.fetch_add(1, Ordering::Relaxed);
        assert!(i < self.slots.len(), "miss buffer overflow");
        // SAFETY: index `i` was reserved exclusively above.
        unsafe { *self.slots[i].get() = miss };
    }

    pub fn len(&self) -> usize {
        self.len.load(Ordering::Relaxed).min(self.slots.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn into_vec(self) -> Vec<Miss> {
        let n = self.len();
        self.slots
            .into_vec()
            .into_iter()
            .take(n)
            .map(UnsafeCell::into_inner)
            .collect()
    }
}

/// Fills `out` at every miss's index with one field call over all missed
/// positions. On error `out` is left untouched.
pub fn resolve_misses(field: &dyn Field, misses: &[Miss], out: &mut [f32]) -> Result<()> {
    if misses.is_empty() {
        return Ok(());
    }
    let positions: Vec<Vec3> = misses.iter().map(|m| m.position).collect();
    let values = field.sample_batch(&positions)?;
    for (m, v) in misses.iter().zip(values) {
        out[m.index as usize] = v;
    }
    Ok(())
}

/// Sample counters, cumulative.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SampleCounts {
    pub samples: u64,
    pub exact_hits: u64,
    pub fallback_hits: u64,
    pub true_misses: u64,
    pub field_calls: u64,
}

impl SampleCounts {
    pub fn hit_rate(&self) -> f64 {
        if self.samples == 0 {
            return 1.0;
        }
        1.0 - self.true_misses as f64 / self.samples as f64
    }

    pub fn true_miss_rate(&self) -> f64 {
        if self.samples == 0 {
            return 0.0;
        }
        self.true_misses as f64 / self.samples as f64
    }

    pub fn fallback_rate(&self) -> f64 {
        if self.samples == 0 {
            return 0.0;
        }
        self.fallback_hits as f64 / self.samples as f64
    }
}

#[derive(Debug, Default)]
struct Counters {
    samples: AtomicU64,
    exact_hits: AtomicU64,
    fallback_hits: AtomicU64,
    true_misses: AtomicU64,
    field_calls: AtomicU64,
}

impl Counters {
    fn snapshot(&self) -> SampleCounts {
        let l = |a: &AtomicU64| a.load(Ordering::Relaxed);
        SampleCounts {
            samples: l(&self.samples),
            exact_hits: l(&self.exact_hits),
            fallback_hits: l(&self.fallback_hits),
            true_misses: l(&self.true_misses),
            field_calls: l(&self.field_calls),
        }
    }
}

/// Source of volume values for the renderers.
pub trait VolumeSampler: Sync {
    /// Lattice dimensions of the sampled volume.
    fn dims(&self) -> [u32; 3];

    /// Values at world positions (`[0, dims]` voxel space), given each
    /// sample's distance from the camera.
    fn sample(&self, positions: &[Vec3], distances: &[f32]) -> Result<Vec<f32>>;

    fn counts(&self) -> SampleCounts;
}

fn world_to_normalized(w: Vec3, dims: Vec3) -> Vec3 {
    const MAX: f32 = 1.0 - f32::EPSILON;
    let q = w.div_elem(dims);
    Vec3::new(
        q.x.clamp(0.0, MAX),
        q.y.clamp(0.0, MAX),
        q.z.clamp(0.0, MAX),
    )
}

/// Samples the field directly, one call per request.
pub struct DirectSampler<'a> {
    field: &'a dyn Field,
    counters: Counters,
}

impl<'a> DirectSampler<'a> {
    pub fn new(field: &'a dyn Field) -> Self {
        Self {
            field,
            counters: Counters::default(),
        }
    }
}

impl VolumeSampler for DirectSampler<'_> {
    fn dims(&self) -> [u32; 3] {
        self.field.domain().dims
    }

    fn sample(&self, positions: &[Vec3], _distances: &[f32]) -> Result<Vec<f32>> {
        if positions.is_empty() {
            return Ok(Vec::new());
        }
        let dims = self.field.domain().dims_f32();
        let q: Vec<Vec3> = positions
            .iter()
            .map(|&w| world_to_normalized(w, dims))
            .collect();
        let n = positions.len() as u64;
        self.counters.samples.fetch_add(n, Ordering::Relaxed);
        self.counters.true_misses.fetch_add(n, Ordering::Relaxed);
        self.counters.field_calls.fetch_add(1, Ordering::Relaxed);
        self.field.sample_batch(&q)
    }

    fn counts(&self) -> SampleCounts {
        self.counters.snapshot()
    }
}

const CHUNK: usize = 4096;

/// Samples through the brick cache, reporting missing bricks and resolving
/// uncovered samples with one field call per request.
pub struct CachedSampler<'a> {
    mrpd: &'a Mrpd,
    requests: &'a RequestTable,
    field: &'a dyn Field,
    transform: LodTransform,
    mode: StochasticLod,
    seed: u64,
    calls: AtomicU64,
    counters: Counters,
}

impl<'a> CachedSampler<'a> {
    /// `seed` should come from [`frame_seed`].
    pub fn new(
        mrpd: &'a Mrpd,
        requests: &'a RequestTable,
        field: &'a dyn Field,
        transform: LodTransform,
        mode: StochasticLod,
        seed: u64,
    ) -> Self {
        Self {
            mrpd,
            requests,
            field,
            transform,
            mode,
            seed,
            calls: AtomicU64::new(0),
            counters: Counters::default(),
        }
    }

    /// Looks up every position, leaving 0 for uncovered samples, which are
    /// returned as misses.
    pub fn lookup_batch(&self, positions: &[Vec3], distances: &[f32]) -> (Vec<f32>, Vec<Miss>) {
        let n = positions.len();
        let mut out = vec![0.0f32; n];
        let misses = MissBuffer::with_capacity(n);
        let dims_u = self.mrpd.layout().dims();
        let dims = Vec3::new(dims_u[0] as f32, dims_u[1] as f32, dims_u[2] as f32);
        let max_lod = self.mrpd.max_lod();
        let frame = self.mrpd.frame();
        let call = self.calls.fetch_add(1, Ordering::Relaxed);
        let half = Vec3::splat(0.5);
        out.par_chunks_mut(CHUNK)
            .enumerate()
            .for_each(|(ci, chunk)| {
                let mut rng = Xorshift32::new(splitmix64(self.seed ^ (call << 40) ^ ci as u64));
                let (mut exact, mut fallback, mut missed) = (0u64, 0u64, 0u64);
                for (j, slot) in chunk.iter_mut().enumerate() {
                    let i = ci * CHUNK + j;
                    let w = positions[i];
                    let lod = select_lod(
                        self.transform.level(distances[i]),
                        max_lod,
                        self.mode,
                        &mut rng,
                    );
                    let outcome = self
                        .mrpd
                        .lookup(w - half, lod, |k| self.requests.report_miss(k, frame))
                        .expect("lod clamped to max_lod");
                    match outcome {
                        LookupOutcome::Hit { value, served_lod } => {
                            *slot = value;
                            if served_lod == lod {
                                exact += 1;
                            } else {
                                fallback += 1;
                            }
                        }
                        LookupOutcome::Miss => {
                            missed += 1;
                            misses.push(Miss {
                                position: world_to_normalized(w, dims),
                                index: i as u32,
                            });
                        }
                    }
                }
                self.counters.exact_hits.fetch_add(exact, Ordering::Relaxed);
                self.counters
                    .fallback_hits
                    .fetch_add(fallback, Ordering::Relaxed);
                self.counters
                    .true_misses
                    .fetch_add(missed, Ordering::Relaxed);
            });
        self.counters.samples.fetch_add(n as u64, Ordering::Relaxed);
        (out, misses.into_vec())
    }
}

impl VolumeSampler for CachedSampler<'_> {
    fn dims(&self) -> [u32; 3] {
        self.mrpd.layout().dims()
    }

    fn sample(&self, positions: &[Vec3], distances: &[f32]) -> Result<Vec<f32>> {
        let (mut out, misses) = self.lookup_batch(positions, distances);
        if !misses.is_empty() {
            self.counters.field_calls.fetch_add(1, Ordering::Relaxed);
            resolve_misses(self.field, &misses, &mut out)?;
        }
        Ok(out)
    }

    fn counts(&self) -> SampleCounts {
        self.counters.snapshot()
    }
}
