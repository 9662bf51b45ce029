//! Frame loop shared by the bench harness, the CLI and the viewer service:
//! one field, one macro-cell grid, an optional private brick cache, and the
//! per-frame maintenance that follows each render.

use crate::cache::{CacheConfig, CacheStats, Mrpd};
use crate::error::{Error, Result};
use crate::field::Field;
use crate::macrocell::MacroCellGrid;
use crate::render::{
    pathtrace_frame, raymarch_frame, Accumulator, Camera, Image, PathTraceOptions, RenderOptions,
    Scene, TransferFunction,
};
use crate::sampler::{
    frame_seed, CachedSampler, DirectSampler, LodPolicy, SampleCounts, VolumeSampler,
};
use crate::scheduler::{BoundaryReport, Scheduler, SchedulerConfig};
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use std::time::{Duration, Instant};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    #[default]
    Raymarch,
    Pathtrace,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    /// Sample through the brick cache; otherwise every sample calls the field.
    pub cached: bool,
    pub pipeline: Pipeline,
    /// Macro-cell edge in voxels.
    pub macrocell_size: u32,
    pub cache: CacheConfig,
    pub scheduler: SchedulerConfig,
    pub lod: LodPolicy,
    pub render: RenderOptions,
    pub pathtrace: PathTraceOptions,
    pub seed: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            cached: true,
            pipeline: Pipeline::Raymarch,
            macrocell_size: 16,
            cache: CacheConfig::default(),
            scheduler: SchedulerConfig::default(),
            lod: LodPolicy::default(),
            render: RenderOptions::default(),
            pathtrace: PathTraceOptions::default(),
            seed: 0x5EED,
        }
    }
}

/// Everything measured for one frame.
#[derive(Clone, Debug)]
pub struct FrameOutput {
    pub frame: u32,
    /// For path tracing, the running average.
    pub image: Image,
    pub counts: SampleCounts,
    /// Render plus maintenance.
    pub elapsed: Duration,
    pub boundary: BoundaryReport,
    pub cache: Option<CacheStats>,
    pub requests_inflight: usize,
    pub bricks_loaded_total: u64,
    /// Frames in the current path-tracing average.
    pub accumulated: u32,
}

struct CacheState {
    mrpd: Mrpd,
    scheduler: Scheduler,
}

pub struct Engine {
    field: Arc<dyn Field>,
    tf: TransferFunction,
    grid: MacroCellGrid,
    cache: Option<CacheState>,
    config: EngineConfig,
    frame: u32,
    since_reset: u32,
    accum: Accumulator,
    last_camera: Option<Camera>,
}

impl Engine {
    /// Builds the macro-cell grid by sampling `field` on its lattice.
    pub fn new(field: Arc<dyn Field>, tf: TransferFunction, config: EngineConfig) -> Result<Self> {
        let dims = field.domain().dims;
        let grid = MacroCellGrid::build(field.as_ref(), dims, config.macrocell_size)?;
        Self::with_grid(field, grid, tf, config)
    }

    pub fn with_grid(
        field: Arc<dyn Field>,
        grid: MacroCellGrid,
        tf: TransferFunction,
        config: EngineConfig,
    ) -> Result<Self> {
        let dims = field.domain().dims;
        if grid.dims() != dims {
            return Err(Error::Config(format!(
                "macro-cell grid covers {:?}, field is {:?}",
                grid.dims(),
                dims
            )));
        }
        if !(config.lod.lod_scale >= 0.0 && config.lod.lod_scale.is_finite()) {
            return Err(Error::Config("lod_scale must be finite and >= 0".into()));
        }
        let cache = if config.cached {
            let mrpd = Mrpd::new(dims, config.cache.clone())?;
            let scheduler = Scheduler::new(field.clone(), mrpd.layout(), config.scheduler.clone())?;
            Some(CacheState { mrpd, scheduler })
        } else {
            None
        };
        let grid = grid.with_majorants(&tf);
        Ok(Self {
            field,
            tf,
            grid,
            cache,
            config,
            frame: 0,
            since_reset: 0,
            accum: Accumulator::new(),
            last_camera: None,
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn field(&self) -> &Arc<dyn Field> {
        &self.field
    }

    pub fn grid(&self) -> &MacroCellGrid {
        &self.grid
    }

    pub fn tf(&self) -> &TransferFunction {
        &self.tf
    }

    /// Frames rendered so far.
    pub fn frame(&self) -> u32 {
        self.frame
    }

    /// Frames since the cache was last (re)started.
    pub fn frames_since_reset(&self) -> u32 {
        self.since_reset
    }

    pub fn mrpd(&self) -> Option<&Mrpd> {
        self.cache.as_ref().map(|c| &c.mrpd)
    }

    pub fn scheduler(&self) -> Option<&Scheduler> {
        self.cache.as_ref().map(|c| &c.scheduler)
    }

    pub fn accumulated(&self) -> u32 {
        self.accum.count()
    }

    /// Replaces the transfer function and refreshes the majorants.
    pub fn set_tf(&mut self, tf: TransferFunction) {
        self.grid.update_majorants(&tf);
        self.tf = tf;
        self.accum.reset();
    }

    pub fn set_lod_scale(&mut self, scale: f32) -> Result<()> {
        if !(scale >= 0.0 && scale.is_finite()) {
            return Err(Error::Config(format!(
                "lod_scale {scale} must be finite and >= 0"
            )));
        }
        if scale != self.config.lod.lod_scale {
            self.config.lod.lod_scale = scale;
            self.accum.reset();
        }
        Ok(())
    }

    pub fn set_pipeline(&mut self, pipeline: Pipeline) {
        if pipeline != self.config.pipeline {
            self.config.pipeline = pipeline;
            self.accum.reset();
        }
    }

    /// Empties the cache and request table and restarts the preload blend.
    pub fn reset_cache(&mut self) {
        if let Some(c) = &mut self.cache {
            c.scheduler.reset();
            c.mrpd.reset();
        }
        self.since_reset = 0;
        self.accum.reset();
    }

    /// Blocks until any outstanding brick batch has been filled.
    pub fn wait_idle(&mut self) {
        if let Some(c) = &mut self.cache {
            c.scheduler.wait_idle();
        }
    }

    /// Renders one frame and runs the frame-boundary maintenance.
    pub fn render_frame(&mut self, camera: &Camera) -> Result<FrameOutput> {
        let start = Instant::now();
        if self.last_camera.as_ref() != Some(camera) {
            self.accum.reset();
            self.last_camera = Some(camera.clone());
        }
        let scene = Scene::new(&self.grid, &self.tf, self.config.render);
        let seed = frame_seed(self.config.seed, self.frame);
        let draw = |sampler: &dyn VolumeSampler| match self.config.pipeline {
            Pipeline::Raymarch => raymarch_frame(camera, &scene, sampler),
            Pipeline::Pathtrace => {
                pathtrace_frame(camera, &scene, &self.config.pathtrace, sampler, 1, seed)
            }
        };
        let (image, counts, boundary) = match &mut self.cache {
            None => {
                let s = DirectSampler::new(self.field.as_ref());
                let img = draw(&s)?;
                (img, s.counts(), BoundaryReport::default())
            }
            Some(c) => {
                let transform = self
                    .config
                    .lod
                    .transform(self.since_reset, c.mrpd.max_lod());
                let s = CachedSampler::new(
                    &c.mrpd,
                    c.scheduler.table(),
                    self.field.as_ref(),
                    transform,
                    self.config.lod.stochastic,
                    seed,
                );
                let img = draw(&s)?;
                let counts = s.counts();
                drop(s);
                let report = c.scheduler.frame_boundary(&mut c.mrpd)?;
                (img, counts, report)
            }
        };
        let image = match self.config.pipeline {
            Pipeline::Raymarch => image,
            Pipeline::Pathtrace => {
                self.accum.add(&image);
                self.accum.image()
            }
        };
        let out = FrameOutput {
            frame: self.frame,
            image,
            counts,
            elapsed: start.elapsed(),
            boundary,
            cache: self.cache.as_ref().map(|c| c.mrpd.stats()),
            requests_inflight: self
                .cache
                .as_ref()
                .map_or(0, |c| c.scheduler.in_flight().len()),
            bricks_loaded_total: self
                .cache
                .as_ref()
                .map_or(0, |c| c.scheduler.stats().bricks_loaded_total),
            accumulated: self.accum.count(),
        };
        self.frame += 1;
        self.since_reset += 1;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{make_procedural, ProceduralKind};
    use crate::math::Vec3;
    use crate::scheduler::PumpMode;

    fn engine(cached: bool, pipeline: Pipeline) -> Engine {
        let field = Arc::new(make_procedural(ProceduralKind::Sphere, [32; 3]).unwrap());
        let config = EngineConfig {
            cached,
            pipeline,
            macrocell_size: 8,
            cache: CacheConfig {
                brick_size: 8,
                pool_dims: [4, 4, 4],
                ..Default::default()
            },
            scheduler: SchedulerConfig {
                mode: PumpMode::Inline,
                ..Default::default()
            },
            ..Default::default()
        };
        Engine::new(field, TransferFunction::ramp([1.0, 0.8, 0.5], 0.6), config).unwrap()
    }

    fn camera(x: f32) -> Camera {
        Camera::new(
            Vec3::new(x, 16.0, -60.0),
            Vec3::splat(16.0),
            Vec3::new(0.0, 1.0, 0.0),
            35.0,
            16,
            16,
        )
        .unwrap()
    }

    #[test]
    fn static_camera_converges_to_no_misses() {
        let mut e = engine(true, Pipeline::Raymarch);
        let cam = camera(16.0);
        let mut last = None;
        for _ in 0..12 {
            last = Some(e.render_frame(&cam).unwrap());
        }
        let last = last.unwrap();
        assert_eq!(last.counts.true_misses, 0);
        assert!(last.cache.unwrap().occupied > 0);
        assert_eq!(e.frame(), 12);
    }

    #[test]
    fn uncached_frames_call_the_field_for_every_sample() {
        let mut e = engine(false, Pipeline::Raymarch);
        let out = e.render_frame(&camera(16.0)).unwrap();
        assert!(out.counts.samples > 0);
        assert_eq!(out.counts.true_misses, out.counts.samples);
        assert!(out.cache.is_none());
    }

    #[test]
    fn accumulation_restarts_on_changes() {
        let mut e = engine(true, Pipeline::Pathtrace);
        for i in 1..=3 {
            assert_eq!(e.render_frame(&camera(16.0)).unwrap().accumulated, i);
        }
        assert_eq!(e.render_frame(&camera(20.0)).unwrap().accumulated, 1);
        e.render_frame(&camera(20.0)).unwrap();
        e.set_tf(TransferFunction::ramp([1.0; 3], 0.3));
        assert_eq!(e.render_frame(&camera(20.0)).unwrap().accumulated, 1);
    }

    #[test]
    fn reset_cache_empties_the_pool() {
        let mut e = engine(true, Pipeline::Raymarch);
        for _ in 0..4 {
            e.render_frame(&camera(16.0)).unwrap();
        }
        assert!(e.mrpd().unwrap().stats().occupied > 0);
        e.reset_cache();
        assert_eq!(e.mrpd().unwrap().stats().occupied, 0);
        assert_eq!(e.frames_since_reset(), 0);
        assert!(e.set_lod_scale(-1.0).is_err());
    }
}
