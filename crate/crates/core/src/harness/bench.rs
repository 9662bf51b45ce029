use super::config::{load_field, LoadedField, SceneConfig};
use crate::engine::{Engine, Pipeline};
use crate::error::{Error, Result};
use serde::Serialize;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

/// One point of the {cached, uncached} x {raymarch, pathtrace} x ranking x
/// preload grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BenchMode {
    pub cached: bool,
    pub pipeline: Pipeline,
    pub ranking: bool,
    pub preload: bool,
}

impl Default for BenchMode {
    fn default() -> Self {
        Self {
            cached: true,
            pipeline: Pipeline::Raymarch,
            ranking: true,
            preload: true,
        }
    }
}

/// Comma-separated tokens over the defaults
/// (`cached,raymarch,ranking,preload`), e.g. `uncached` or
/// `cached,pathtrace,no-ranking`.
impl FromStr for BenchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut m = BenchMode::default();
        for tok in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            match tok {
                "cached" => m.cached = true,
                "uncached" => m.cached = false,
                "raymarch" | "rm" => m.pipeline = Pipeline::Raymarch,
                "pathtrace" | "pt" => m.pipeline = Pipeline::Pathtrace,
                "ranking" => m.ranking = true,
                "no-ranking" => m.ranking = false,
                "preload" => m.preload = true,
                "no-preload" => m.preload = false,
                other => return Err(Error::Config(format!("unknown bench mode token {other:?}"))),
            }
        }
        Ok(m)
    }
}

impl fmt::Display for BenchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{}",
            if self.cached { "cached" } else { "uncached" },
            match self.pipeline {
                Pipeline::Raymarch => "raymarch",
                Pipeline::Pathtrace => "pathtrace",
            },
            if self.ranking {
                "ranking"
            } else {
                "no-ranking"
            },
            if self.preload {
                "preload"
            } else {
                "no-preload"
            },
        )
    }
}

/// One CSV row.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrameRow {
    pub frame: u32,
    pub fps: f64,
    pub frame_ms: f64,
    pub samples: u64,
    pub true_misses: u64,
    pub fallback_hits: u64,
    pub exact_hits: u64,
    pub occupancy: f64,
    pub bricks_loaded: u64,
    pub requests_inflight: usize,
    /// `ok`, or `error: ...` on the row of a failed frame.
    pub status: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchReport {
    pub mode: String,
    pub rows: Vec<FrameRow>,
    /// Frames in the summary window.
    pub window: u32,
    /// Mean per-frame FPS over the last `window` frames.
    pub mean_fps: f64,
}

impl BenchReport {
    fn summarize(mode: BenchMode, rows: Vec<FrameRow>, window: u32) -> Self {
        let w = (window as usize).min(rows.len()).max(1);
        let tail = &rows[rows.len().saturating_sub(w)..];
        let mean_fps = tail.iter().map(|r| r.fps).sum::<f64>() / tail.len().max(1) as f64;
        Self {
            mode: mode.to_string(),
            window: tail.len() as u32,
            rows,
            mean_fps,
        }
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_rows(&self.rows, path)
    }
}

fn write_rows(rows: &[FrameRow], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(e.into()))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io(e.into()))?;
    }
    w.flush()?;
    Ok(())
}

/// Loads the scene's field and runs it in `mode`.
pub fn bench_run(scene: &SceneConfig, mode: BenchMode, csv: Option<&Path>) -> Result<BenchReport> {
    let loaded = load_field(&scene.field, scene.cost_model, scene.engine.macrocell_size)?;
    bench_run_with(loaded, scene, mode, csv)
}

/// Runs the scene's trajectory on an already loaded field. On a render
/// error the CSV written so far ends with a flagged row and the error is
/// returned.
pub fn bench_run_with(
    loaded: LoadedField,
    scene: &SceneConfig,
    mode: BenchMode,
    csv: Option<&Path>,
) -> Result<BenchReport> {
    scene.validate()?;
    let dims = loaded.field.domain().dims;
    let mut config = scene.engine.clone();
    config.cached = mode.cached;
    config.pipeline = mode.pipeline;
    config.scheduler.ranking = mode.ranking;
    config.lod.preload = mode.preload;
    let mut engine =
        Engine::with_grid(loaded.field, loaded.grid, scene.transfer_function(), config)?;
    let orbit = scene.orbit_for(dims);
    let mut rows = Vec::with_capacity(scene.frames as usize);
    for i in 0..scene.frames {
        let frame = scene.first_frame + i;
        match engine.render_frame(&orbit.camera(frame)) {
            Ok(out) => {
                let secs = out.elapsed.as_secs_f64();
                rows.push(FrameRow {
                    frame,
                    fps: 1.0 / secs.max(1e-9),
                    frame_ms: secs * 1e3,
                    samples: out.counts.samples,
                    true_misses: out.counts.true_misses,
                    fallback_hits: out.counts.fallback_hits,
                    exact_hits: out.counts.exact_hits,
                    occupancy: out.cache.map_or(0.0, |c| c.occupancy()),
                    bricks_loaded: out.bricks_loaded_total,
                    requests_inflight: out.requests_inflight,
                    status: "ok".into(),
                });
            }
            Err(e) => {
                rows.push(FrameRow {
                    frame,
                    fps: 0.0,
                    frame_ms: 0.0,
                    samples: 0,
                    true_misses: 0,
                    fallback_hits: 0,
                    exact_hits: 0,
                    occupancy: 0.0,
                    bricks_loaded: 0,
                    requests_inflight: 0,
                    status: format!("error: {e}"),
                });
                if let Some(p) = csv {
                    write_rows(&rows, p)?;
                }
                return Err(e);
            }
        }
    }
    let report = BenchReport::summarize(mode, rows, scene.window);
    if let Some(p) = csv {
        report.write_csv(p)?;
    }
    Ok(report)
}
