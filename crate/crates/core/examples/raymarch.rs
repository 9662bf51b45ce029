//! Ray marches a procedural volume once directly and once through the brick
//! cache, and writes both images.

use inrcache::engine::{Engine, EngineConfig};
use inrcache::field::{make_procedural, ProceduralKind};
use inrcache::harness::Orbit;
use inrcache::render::{ControlPoint, TransferFunction};
use std::sync::Arc;

fn main() -> inrcache::Result<()> {
    let dims = [96; 3];
    let field = Arc::new(make_procedural(ProceduralKind::Shells, dims)?);
    let tf = TransferFunction::new(vec![
        ControlPoint::new(0.0, [0.0, 0.0, 0.0], 0.0),
        ControlPoint::new(0.45, [0.1, 0.3, 0.9], 0.0),
        ControlPoint::new(0.8, [0.9, 0.6, 0.2], 0.6),
        ControlPoint::new(1.0, [1.0, 1.0, 1.0], 0.9),
    ])?;
    let camera = Orbit::around(dims, 0).camera(30);
    let out = std::env::temp_dir();

    let mut direct = Engine::new(
        field.clone(),
        tf.clone(),
        EngineConfig {
            cached: false,
            ..Default::default()
        },
    )?;
    let f = direct.render_frame(&camera)?;
    f.image.save_png(out.join("raymarch_direct.png"))?;
    println!(
        "direct: {} samples in {:.1} ms",
        f.counts.samples,
        f.elapsed.as_secs_f64() * 1e3
    );

    let mut cached = Engine::new(field, tf, EngineConfig::default())?;
    for i in 0.. {
        let f = cached.render_frame(&camera)?;
        println!(
            "cached frame {i}: {:.1} ms, hit rate {:.3}, {} misses, {} bricks loaded",
            f.elapsed.as_secs_f64() * 1e3,
            f.counts.hit_rate(),
            f.counts.true_misses,
            f.bricks_loaded_total
        );
        if f.counts.true_misses == 0 && f.requests_inflight == 0 || i == 40 {
            f.image.save_png(out.join("raymarch_cached.png"))?;
            break;
        }
        cached.wait_idle();
    }
    println!("images in {}", out.display());
    Ok(())
}
