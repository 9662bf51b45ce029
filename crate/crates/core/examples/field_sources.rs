//! The three kinds of field the renderer can sit on: analytic shapes, raw
//! lattices read from disk, and any field slowed down by a cost model.

use inrcache::field::{
    load_raw_with_descriptor, make_procedural, wrap_delayed, CostModel, Field, ProceduralKind,
    ScalarType, VolumeDescriptor,
};
use inrcache::math::Vec3;
use std::time::{Duration, Instant};

fn main() -> inrcache::Result<()> {
    let probes = [
        Vec3::splat(0.5),
        Vec3::new(0.1, 0.5, 0.5),
        Vec3::new(0.25, 0.25, 0.75),
    ];
    for kind in [
        ProceduralKind::Sphere,
        ProceduralKind::Shells,
        ProceduralKind::MarschnerLobbLike,
    ] {
        let f = make_procedural(kind, [64; 3])?;
        println!("{kind:?}: {:?}", f.sample_batch(&probes)?);
    }

    // a 16^3 u8 ramp along x, stored as raw bytes plus a JSON sidecar
    let dir = tempfile::tempdir()?;
    let n = 16u32;
    let bytes: Vec<u8> = (0..n * n * n).map(|i| ((i % n) * 17) as u8).collect();
    let raw = dir.path().join("ramp.raw");
    std::fs::write(&raw, bytes)?;
    let desc = VolumeDescriptor {
        dims: [n; 3],
        scalar_type: ScalarType::U8,
        vmin: 0.0,
        vmax: 255.0,
    };
    let lattice = load_raw_with_descriptor(&raw, &desc)?;
    let xs: Vec<Vec3> = (0..5)
        .map(|i| Vec3::new(i as f32 / 4.0 * 0.999, 0.5, 0.5))
        .collect();
    println!("raw ramp along x: {:?}", lattice.sample_batch(&xs)?);

    let slow = wrap_delayed(
        make_procedural(ProceduralKind::Sphere, [64; 3])?,
        CostModel::new(Duration::from_millis(2), Duration::from_micros(1)),
    );
    let batch = vec![Vec3::splat(0.5); 5000];
    let t = Instant::now();
    slow.sample_batch(&batch)?;
    println!(
        "5000 samples through a 2 ms + 1 us/sample model took {:.1} ms",
        t.elapsed().as_secs_f64() * 1e3
    );
    Ok(())
}
