use super::trajectory::Orbit;
use crate::engine::EngineConfig;
use crate::error::{Error, Result};
use crate::field::{
    load_raw_with_descriptor, make_procedural, wrap_delayed, CostModel, Field, ProceduralKind,
    VolumeDescriptor,
};
use crate::inr::load_weights;
use crate::macrocell::MacroCellGrid;
use crate::render::TransferFunction;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::sync::Arc;

/// Where volume values come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldSource {
    Procedural {
        shape: ProceduralKind,
        dims: [u32; 3],
    },
    Raw {
        path: PathBuf,
        descriptor: PathBuf,
    },
    Model {
        path: PathBuf,
    },
}

/// A complete bench or viewer scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub field: FieldSource,
    /// Simulated inference cost charged on every field call.
    #[serde(default)]
    pub cost_model: Option<CostModel>,
    /// Defaults to a white ramp with peak opacity 0.5.
    #[serde(default)]
    pub tf: Option<TransferFunction>,
    /// Defaults to [`Orbit::around`] the volume with one revolution over
    /// `frames`.
    #[serde(default)]
    pub orbit: Option<Orbit>,
    #[serde(default = "default_frames")]
    pub frames: u32,
    /// Trajectory index of the first rendered frame.
    #[serde(default)]
    pub first_frame: u32,
    /// Frames averaged for the summary FPS.
    #[serde(default = "default_window")]
    pub window: u32,
    #[serde(default)]
    pub engine: EngineConfig,
}

fn default_frames() -> u32 {
    600
}
fn default_window() -> u32 {
    100
}

impl SceneConfig {
    pub fn new(field: FieldSource) -> Self {
        Self {
            field,
            cost_model: None,
            tf: None,
            orbit: None,
            frames: default_frames(),
            first_frame: 0,
            window: default_window(),
            engine: EngineConfig::default(),
        }
    }

    /// Reads a scene; relative paths inside resolve against the file's
    /// directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut c: SceneConfig = serde_json::from_slice(&std::fs::read(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut c.field {
            FieldSource::Procedural { .. } => {}
            FieldSource::Raw { path, descriptor } => {
                fix(path);
                fix(descriptor);
            }
            FieldSource::Model { path } => fix(path),
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 {
            return Err(Error::Config("frames must be >= 1".into()));
        }
        if self.window == 0 {
            return Err(Error::Config("window must be >= 1".into()));
        }
        if let Some(o) = &self.orbit {
            o.validate()?;
        }
        Ok(())
    }

    pub fn transfer_function(&self) -> TransferFunction {
        self.tf
            .clone()
            .unwrap_or_else(|| TransferFunction::ramp([1.0; 3], 0.5))
    }

    pub fn orbit_for(&self, dims: [u32; 3]) -> Orbit {
        self.orbit
            .clone()
            .unwrap_or_else(|| Orbit::around(dims, self.frames))
    }
}

/// A loaded field with its macro-cell grid, built before any simulated
/// cost is attached.
pub struct LoadedField {
    pub field: Arc<dyn Field>,
    pub grid: MacroCellGrid,
}

pub fn load_field(
    source: &FieldSource,
    cost: Option<CostModel>,
    macrocell_size: u32,
) -> Result<LoadedField> {
    fn finish<F: Field + 'static>(
        f: F,
        grid: MacroCellGrid,
        cost: Option<CostModel>,
    ) -> LoadedField {
        let field: Arc<dyn Field> = match cost {
            Some(c) => Arc::new(wrap_delayed(f, c)),
            None => Arc::new(f),
        };
        LoadedField { field, grid }
    }
    match source {
        FieldSource::Procedural { shape, dims } => {
            let f = make_procedural(*shape, *dims)?;
            let grid = MacroCellGrid::build(&f, *dims, macrocell_size)?;
            Ok(finish(f, grid, cost))
        }
        FieldSource::Raw { path, descriptor } => {
            let d = VolumeDescriptor::load(descriptor)?;
            let f = load_raw_with_descriptor(path, &d)?;
            let grid = MacroCellGrid::build(&f, d.dims, macrocell_size)?;
            Ok(finish(f, grid, cost))
        }
        FieldSource::Model { path } => {
            let w = load_weights(path)?;
            let dims = w.model.domain().dims;
            let grid = match w.macro_cells {
                Some(g) if g.cell_size() == macrocell_size => g,
                _ => MacroCellGrid::build(&w.model, dims, macrocell_size)?,
            };
            Ok(finish(w.model, grid, cost))
        }
    }
}
