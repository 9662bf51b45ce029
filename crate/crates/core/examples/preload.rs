//! Starting from the coarsest level and blending toward the requested level
//! of detail keeps early frames covered instead of missing everywhere.

use inrcache::engine::{Engine, EngineConfig};
use inrcache::field::{make_procedural, wrap_delayed, CostModel, ProceduralKind};
use inrcache::harness::Orbit;
use inrcache::render::TransferFunction;
use inrcache::sampler::LodPolicy;
use std::sync::Arc;
use std::time::Duration;

fn run(preload: bool) -> inrcache::Result<Vec<u64>> {
    let dims = [128; 3];
    let field = Arc::new(wrap_delayed(
        make_procedural(ProceduralKind::Shells, dims)?,
        CostModel::new(Duration::from_micros(200), Duration::from_nanos(500)),
    ));
    let config = EngineConfig {
        lod: LodPolicy {
            lod_scale: 0.0,
            preload,
            ..Default::default()
        },
        ..Default::default()
    };
    let mut engine = Engine::new(field, TransferFunction::ramp([1.0; 3], 0.5), config)?;
    let orbit = Orbit::around(dims, 600);
    (0..12)
        .map(|f| {
            engine
                .render_frame(&orbit.camera(f))
                .map(|o| o.counts.true_misses)
        })
        .collect()
}

fn main() -> inrcache::Result<()> {
    let on = run(true)?;
    let off = run(false)?;
    println!("frame  misses(preload)  misses(no preload)");
    for (i, (a, b)) in on.iter().zip(&off).enumerate() {
        println!("{i:5}  {a:15}  {b:18}");
    }
    Ok(())
}
