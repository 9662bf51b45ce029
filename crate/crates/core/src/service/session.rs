use super::protocol::{ControlMessage, FrameFormat, FrameMessage, StatsMessage};
use crate::engine::{Engine, EngineConfig, Pipeline};
use crate::error::{Error, Result};
use crate::field::Field;
use crate::macrocell::MacroCellGrid;
use crate::render::{Camera, TransferFunction};
use std::sync::Arc;

/// Shared model plus per-session defaults; each session gets its own cache.
#[derive(Clone)]
pub struct SessionTemplate {
    pub field: Arc<dyn Field>,
    pub grid: MacroCellGrid,
    pub tf: TransferFunction,
    pub config: EngineConfig,
    pub camera: Camera,
    pub format: FrameFormat,
}

impl SessionTemplate {
    pub fn open(&self) -> Result<Session> {
        if self.camera.width > u16::MAX as u32 || self.camera.height > u16::MAX as u32 {
            return Err(Error::Config(
                "film size exceeds the frame header range".into(),
            ));
        }
        let engine = Engine::with_grid(
            self.field.clone(),
            self.grid.clone(),
            self.tf.clone(),
            self.config.clone(),
        )?;
        Ok(Session {
            engine,
            camera: self.camera.clone(),
            format: self.format,
            pending: Pending::default(),
        })
    }
}

#[derive(Default)]
struct Pending {
    camera: Option<Camera>,
    tf: Option<TransferFunction>,
    lod_scale: Option<f32>,
    mode: Option<Pipeline>,
    reset_cache: bool,
}

/// The settings one frame was rendered with.
#[derive(Clone, Debug, PartialEq)]
pub struct AppliedState {
    pub camera: Camera,
    pub tf: TransferFunction,
    pub lod_scale: f32,
    pub mode: Pipeline,
}

/// Output of one render-loop iteration.
pub struct SessionFrame {
    pub frame: FrameMessage,
    pub stats: StatsMessage,
    pub state: AppliedState,
}

/// One viewer's render loop state. Controls are queued as they arrive and
/// take effect together at the next frame start, newest value winning.
pub struct Session {
    engine: Engine,
    camera: Camera,
    format: FrameFormat,
    pending: Pending,
}

impl Session {
    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn camera(&self) -> &Camera {
        &self.camera
    }

    /// Queues a control; invalid ones are rejected without side effects.
    pub fn handle_control(&mut self, msg: ControlMessage) -> Result<()> {
        msg.validate()?;
        let p = &mut self.pending;
        match msg {
            ControlMessage::Camera {
                position,
                target,
                up,
                fov,
            } => {
                p.camera = Some(Camera {
                    position,
                    target,
                    up,
                    fov,
                    width: self.camera.width,
                    height: self.camera.height,
                });
            }
            ControlMessage::Tf { points } => p.tf = Some(points),
            ControlMessage::LodScale { value } => p.lod_scale = Some(value),
            ControlMessage::Mode { mode } => p.mode = Some(mode),
            ControlMessage::ResetCache {} => p.reset_cache = true,
        }
        Ok(())
    }

    pub fn handle_text(&mut self, text: &str) -> Result<()> {
        self.handle_control(ControlMessage::decode(text)?)
    }

    fn apply_pending(&mut self) -> Result<()> {
        let p = std::mem::take(&mut self.pending);
        if let Some(c) = p.camera {
            self.camera = c;
        }
        if let Some(tf) = p.tf {
            self.engine.set_tf(tf);
        }
        if let Some(s) = p.lod_scale {
            self.engine.set_lod_scale(s)?;
        }
        if let Some(m) = p.mode {
            self.engine.set_pipeline(m);
        }
        if p.reset_cache {
            self.engine.reset_cache();
        }
        Ok(())
    }

    /// Applies queued controls, renders one frame and encodes it.
    pub fn step(&mut self) -> Result<SessionFrame> {
        self.apply_pending()?;
        let state = AppliedState {
            camera: self.camera.clone(),
            tf: self.engine.tf().clone(),
            lod_scale: self.engine.config().lod.lod_scale,
            mode: self.engine.config().pipeline,
        };
        let out = self.engine.render_frame(&self.camera)?;
        let payload = match self.format {
            FrameFormat::Rgba8 => out.image.to_rgba8(),
            FrameFormat::Png => out.image.encode_png()?,
        };
        let frame = FrameMessage {
            frame: out.frame,
            width: out.image.width as u16,
            height: out.image.height as u16,
            format: self.format,
            payload,
        };
        let stats = StatsMessage {
            frame: out.frame,
            fps: 1.0 / out.elapsed.as_secs_f64().max(1e-9),
            true_miss_rate: out.counts.true_miss_rate(),
            fallback_rate: out.counts.fallback_rate(),
            cache_occupancy: out.cache.map_or(0.0, |c| c.occupancy()),
            requests_inflight: out.requests_inflight as u32,
            bricks_loaded_total: out.bricks_loaded_total,
            accumulated: out.accumulated,
        };
        Ok(SessionFrame {
            frame,
            stats,
            state,
        })
    }
}
