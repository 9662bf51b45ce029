//! How quickly the cache converges when requests are ranked by how many
//! samples wanted each brick, compared with taking the latest reports in
//! brick order.

use inrcache::cache::CacheConfig;
use inrcache::engine::{Engine, EngineConfig};
use inrcache::field::{make_procedural, ProceduralKind};
use inrcache::math::Vec3;
use inrcache::render::{Camera, TransferFunction};
use inrcache::sampler::LodPolicy;
use inrcache::scheduler::{PumpMode, SchedulerConfig};
use std::sync::Arc;

fn frames_to(target: f64, ranking: bool) -> inrcache::Result<u32> {
    let dims = [64; 3];
    let field = Arc::new(make_procedural(ProceduralKind::Shells, dims)?);
    let config = EngineConfig {
        cache: CacheConfig {
            brick_size: 8,
            pool_dims: [12; 3],
            ..Default::default()
        },
        scheduler: SchedulerConfig {
            max_num_requests: 12,
            ranking,
            mode: PumpMode::Inline,
            ..Default::default()
        },
        lod: LodPolicy {
            lod_scale: 0.0,
            preload: false,
            ..Default::default()
        },
        ..Default::default()
    };
    let mut engine = Engine::new(field, TransferFunction::ramp([1.0; 3], 0.9), config)?;
    let camera = Camera::new(
        Vec3::splat(76.0),
        Vec3::splat(40.0),
        Vec3::new(0.0, 1.0, 0.0),
        60.0,
        96,
        96,
    )?;
    for frame in 1..=300 {
        if engine.render_frame(&camera)?.counts.hit_rate() >= target {
            return Ok(frame);
        }
    }
    Ok(u32::MAX)
}

fn main() -> inrcache::Result<()> {
    for target in [0.5, 0.8, 0.9, 0.99] {
        println!(
            "hit rate {target}: ranked {} frames, unranked {} frames",
            frames_to(target, true)?,
            frames_to(target, false)?
        );
    }
    Ok(())
}
