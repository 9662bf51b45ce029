//! Drives the multi-resolution brick cache by hand: misses, coarse fallback,
//! exact hits after insertion, and LRU eviction when the pool fills.

use inrcache::cache::{BrickKey, CacheConfig, InsertOutcome, LookupOutcome, Mrpd};
use inrcache::field::{make_procedural, ProceduralKind};
use inrcache::math::Vec3;
use inrcache::scheduler::{fulfill, preload_level};

fn main() -> inrcache::Result<()> {
    let dims = [64; 3];
    let field = make_procedural(ProceduralKind::Shells, dims)?;
    let mut mrpd = Mrpd::new(
        dims,
        CacheConfig {
            brick_size: 8,
            pool_dims: [2, 2, 2],
            ..Default::default()
        },
    )?;
    let layout = mrpd.layout().clone();
    println!(
        "max lod {}, {} slots",
        mrpd.max_lod(),
        mrpd.stats().capacity
    );
    for lod in 0..=mrpd.max_lod() {
        println!("  lod {lod}: grid {:?}", layout.grid_dims(lod)?);
    }

    let p = Vec3::new(20.3, 31.7, 12.9);
    let show = |mrpd: &Mrpd, what: &str| -> inrcache::Result<()> {
        let mut missing = Vec::new();
        let out = mrpd.lookup(p, 0, |k| missing.push(k))?;
        match out {
            LookupOutcome::Hit { value, served_lod } => {
                println!("{what}: {value:.4} from lod {served_lod}, missing {missing:?}")
            }
            LookupOutcome::Miss => println!("{what}: miss, missing {missing:?}"),
        }
        Ok(())
    };

    show(&mrpd, "empty cache")?;
    let top = mrpd.max_lod();
    preload_level(&mut mrpd, &field, top)?;
    show(&mrpd, "coarsest level resident")?;
    let (_, needed) = mrpd.lookup_collect(p, 0)?;
    for b in fulfill(&layout, &needed, &field)? {
        mrpd.insert(b.key, &b.samples)?;
    }
    show(&mrpd, "fine bricks inserted")?;

    // fill the pool in later frames so the oldest slots get evicted
    for key in layout.keys(0)?.take(12) {
        mrpd.tick_frame();
        let samples = fulfill(&layout, &[key], &field)?.remove(0).samples;
        let out = mrpd.insert(key, &samples)?;
        if let InsertOutcome::Inserted(slot) = out {
            println!("frame {:2}: {key:?} -> slot {slot}", mrpd.frame());
        } else {
            println!("frame {:2}: {key:?} {out:?}", mrpd.frame());
        }
    }
    println!(
        "mapped now: {:?}",
        mrpd.mapped_keys()
            .iter()
            .map(|k: &BrickKey| (k.lod, k.index))
            .collect::<Vec<_>>()
    );
    mrpd.verify().map_err(inrcache::Error::Config)?;
    Ok(())
}
