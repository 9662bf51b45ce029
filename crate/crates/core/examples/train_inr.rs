//! Fits a small hash-grid network to a rasterized analytic volume, checks it
//! against the lattice, and round-trips the weights through a file.

use inrcache::field::{make_procedural, Field, ProceduralKind, RawLattice};
use inrcache::inr::{
    load_weights, save_weights, train, HashGridConfig, InrConfig, InrModel, MlpConfig, TrainConfig,
};
use inrcache::math::Vec3;

fn main() -> inrcache::Result<()> {
    let dims = [24; 3];
    let lattice = RawLattice::rasterize(
        &make_procedural(ProceduralKind::MarschnerLobbLike, dims)?,
        dims,
    )?;
    let config = InrConfig {
        hash_grid: HashGridConfig {
            levels: 8,
            table_size: 1 << 14,
            ..Default::default()
        },
        mlp: MlpConfig::default(),
        domain: lattice.domain().clone(),
    };
    let mut model = InrModel::<f32>::new(config, 1)?;
    let tc = TrainConfig {
        steps: 300,
        batch_size: 2048,
        learning_rate: 1e-2,
        seed: 1,
        ..Default::default()
    };
    let report = train(&mut model, &lattice, &tc)?;
    for (i, l) in report.losses.iter().enumerate().step_by(50) {
        println!("step {i:4}  mse {l:.3e}");
    }

    let d = lattice.domain().clone();
    let coords: Vec<Vec3> = (0..d.voxel_count() as u32)
        .map(|i| {
            d.index_to_normalized(Vec3::new(
                (i % 24) as f32,
                (i / 24 % 24) as f32,
                (i / 576) as f32,
            ))
        })
        .collect();
    let want = lattice.sample_batch(&coords)?;
    let got = model.infer_batch(&coords)?;
    let mse = want
        .iter()
        .zip(&got)
        .map(|(a, b)| ((a - b) as f64).powi(2))
        .sum::<f64>()
        / want.len() as f64;
    println!("lattice PSNR {:.2} dB", 10.0 * (1.0 / mse).log10());

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("model.bin");
    save_weights(&model, None, &path)?;
    let back = load_weights(&path)?;
    let same = back.model.infer_batch(&coords[..100])? == got[..100];
    println!(
        "reloaded {} bytes, identical outputs: {same}",
        std::fs::metadata(&path)?.len()
    );
    Ok(())
}
