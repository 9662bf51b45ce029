mod camera;
mod image;
mod pathtrace;
mod raymarch;
mod tf;

pub use camera::{generate_rays, ActiveRay, Camera};
pub use image::Image;
pub use pathtrace::{delta_track, pathtrace_frame, Accumulator, PathTraceOptions};
pub use raymarch::raymarch_frame;
pub use tf::{ControlPoint, TransferFunction};

use crate::macrocell::MacroCellGrid;
use serde::{Deserialize, Serialize};

/// Half a voxel diagonal.
pub const DEFAULT_BASE_STEP: f32 = 0.866_025_4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderOptions {
    pub base_step: f32,
    /// Scale the step inside non-empty cells by `1 / max(mu, mu_floor)`.
    pub adaptive: bool,
    /// Skip cells whose majorant is zero.
    pub skip_empty: bool,
    pub mu_floor: f32,
    /// Rays stop once transmittance drops below this.
    pub early_termination: f32,
    pub background: [f32; 3],
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            base_step: DEFAULT_BASE_STEP,
            adaptive: true,
            skip_empty: true,
            mu_floor: 1.0 / 16.0,
            early_termination: 0.01,
            background: [0.0; 3],
        }
    }
}

/// What both pipelines need besides a camera and a sampler.
#[derive(Clone, Copy)]
pub struct Scene<'a> {
    pub grid: &'a MacroCellGrid,
    pub tf: &'a TransferFunction,
    pub options: RenderOptions,
}

impl<'a> Scene<'a> {
    pub fn new(grid: &'a MacroCellGrid, tf: &'a TransferFunction, options: RenderOptions) -> Self {
        Self { grid, tf, options }
    }
}
