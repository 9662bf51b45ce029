//! Progressive path tracing with delta tracking: frames from a fixed camera
//! are averaged until the image settles.

use inrcache::engine::{Engine, EngineConfig, Pipeline};
use inrcache::field::{make_procedural, ProceduralKind};
use inrcache::harness::{psnr, Orbit};
use inrcache::render::TransferFunction;
use std::sync::Arc;

fn main() -> inrcache::Result<()> {
    let dims = [64; 3];
    let field = Arc::new(make_procedural(ProceduralKind::MarschnerLobbLike, dims)?);
    let mut config = EngineConfig {
        pipeline: Pipeline::Pathtrace,
        ..Default::default()
    };
    config.pathtrace.density_scale = 0.3;
    let mut engine = Engine::new(field, TransferFunction::ramp([0.9, 0.8, 0.7], 0.8), config)?;
    let mut orbit = Orbit::around(dims, 0);
    orbit.width = 128;
    orbit.height = 128;
    let camera = orbit.camera(0);

    let mut prev = None;
    for i in 0..32 {
        let f = engine.render_frame(&camera)?;
        if let Some(p) = &prev {
            if i % 4 == 3 {
                println!(
                    "{:2} frames averaged, PSNR vs previous average {:.1} dB",
                    f.accumulated,
                    psnr(&f.image, p)?
                );
            }
        }
        prev = Some(f.image);
    }
    let path = std::env::temp_dir().join("pathtrace.png");
    prev.expect("rendered").save_png(&path)?;
    println!("wrote {}", path.display());
    Ok(())
}
