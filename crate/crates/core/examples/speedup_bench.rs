//! Cached versus uncached rendering of a field that costs time per call.
//! Writes one CSV per mode and prints the steady-state frame rates.

use inrcache::field::{CostModel, ProceduralKind};
use inrcache::harness::{bench_run, BenchMode, FieldSource, Orbit, SceneConfig};
use std::time::Duration;

fn main() -> inrcache::Result<()> {
    let frames: u32 = std::env::args()
        .nth(1)
        .and_then(|a| a.parse().ok())
        .unwrap_or(150);
    let mut scene = SceneConfig::new(FieldSource::Procedural {
        shape: ProceduralKind::Shells,
        dims: [96; 3],
    });
    scene.cost_model = Some(CostModel::new(
        Duration::from_micros(200),
        Duration::from_nanos(500),
    ));
    let mut orbit = Orbit::around([96; 3], frames);
    orbit.width = 128;
    orbit.height = 128;
    scene.orbit = Some(orbit);
    scene.frames = frames;
    scene.window = frames / 4;
    let dir = std::env::temp_dir();

    let cached = bench_run(
        &scene,
        "cached".parse()?,
        Some(&dir.join("bench_cached.csv")),
    )?;
    // the uncached renderer has no warm-up, so only its window is rendered
    let mut tail = scene.clone();
    tail.first_frame = frames - scene.window;
    tail.frames = scene.window;
    let uncached = bench_run(
        &tail,
        BenchMode {
            cached: false,
            ..Default::default()
        },
        Some(&dir.join("bench_uncached.csv")),
    )?;

    println!(
        "cached   {:.2} fps over the last {} frames",
        cached.mean_fps, cached.window
    );
    println!("uncached {:.2} fps", uncached.mean_fps);
    println!("speedup  {:.2}x", cached.mean_fps / uncached.mean_fps);
    Ok(())
}
