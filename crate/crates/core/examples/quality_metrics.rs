//! Image quality of cached rendering: PSNR and mean SSIM of a converged
//! cached frame against direct sampling, at several level-of-detail scales.

use inrcache::engine::{Engine, EngineConfig};
use inrcache::field::{make_procedural, ProceduralKind};
use inrcache::harness::{mssim, psnr, Orbit};
use inrcache::render::TransferFunction;
use inrcache::sampler::LodPolicy;
use std::sync::Arc;

fn main() -> inrcache::Result<()> {
    let dims = [96; 3];
    let field = Arc::new(make_procedural(ProceduralKind::MarschnerLobbLike, dims)?);
    let tf = TransferFunction::ramp([1.0, 0.9, 0.8], 0.6);
    let camera = Orbit::around(dims, 0).camera(0);
    let reference = Engine::new(
        field.clone(),
        tf.clone(),
        EngineConfig {
            cached: false,
            ..Default::default()
        },
    )?
    .render_frame(&camera)?
    .image;

    for scale in [0.0, 0.005, 0.02, 0.05] {
        let config = EngineConfig {
            lod: LodPolicy {
                lod_scale: scale,
                preload: false,
                ..Default::default()
            },
            ..Default::default()
        };
        let mut engine = Engine::new(field.clone(), tf.clone(), config)?;
        let mut image = None;
        for _ in 0..60 {
            let f = engine.render_frame(&camera)?;
            let settled = f.counts.true_misses == 0 && f.requests_inflight == 0;
            image = Some(f.image);
            if settled {
                break;
            }
            engine.wait_idle();
        }
        let image = image.expect("rendered");
        println!(
            "lod_scale {scale:5}: PSNR {:6.2} dB, MSSIM {:.4}",
            psnr(&reference, &image)?,
            mssim(&reference, &image)?
        );
    }
    Ok(())
}
