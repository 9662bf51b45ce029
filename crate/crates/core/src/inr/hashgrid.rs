//! Multiresolution hash-grid geometry.

use super::HashGridConfig;
use crate::math::Vec3;

const PRIMES: [u32; 3] = [1, 2_654_435_761, 805_459_861];

/// Placement of one resolution level inside the flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelLayout {
    pub resolution: u32,
    /// Number of table entries actually stored for this level.
    pub entries: usize,
    /// Dense levels index every vertex directly, without hashing.
    pub dense: bool,
    /// Offset of the first value of this level, in scalars.
    pub offset: usize,
}

impl LevelLayout {
    /// Table entry for integer vertex `(x, y, z)` of this level.
    pub fn entry(&self, x: u32, y: u32, z: u32) -> usize {
        if self.dense {
            let side = self.resolution as usize + 1;
            x as usize + side * (y as usize + side * z as usize)
        } else {
            let h =
                x.wrapping_mul(PRIMES[0]) ^ y.wrapping_mul(PRIMES[1]) ^ z.wrapping_mul(PRIMES[2]);
            (h as usize) & (self.entries - 1)
        }
    }

    /// The 8 table entries surrounding `q` with their trilinear weights,
    /// in corner order `x + 2y + 4z`.
    pub fn corners(&self, q: Vec3) -> [(usize, f32); 8] {
        let res = self.resolution;
        let mut cell = [0u32; 3];
        let mut frac = [0f32; 3];
        for a in 0..3 {
            let s = q[a] * res as f32;
            let i = (s.floor().max(0.0) as u32).min(res - 1);
            cell[a] = i;
            frac[a] = (s - i as f32).clamp(0.0, 1.0);
        }
        let mut out = [(0usize, 0f32); 8];
        for (c, slot) in out.iter_mut().enumerate() {
            let (bx, by, bz) = ((c & 1) as u32, ((c >> 1) & 1) as u32, ((c >> 2) & 1) as u32);
            let w = |b: u32, f: f32| if b == 1 { f } else { 1.0 - f };
            *slot = (
                self.entry(cell[0] + bx, cell[1] + by, cell[2] + bz),
                w(bx, frac[0]) * w(by, frac[1]) * w(bz, frac[2]),
            );
        }
        out
    }
}

/// Lays out every level of `config` starting at scalar offset 0.
pub fn level_layouts(config: &HashGridConfig) -> Vec<LevelLayout> {
    let mut offset = 0;
    (0..config.levels)
        .map(|l| {
            let resolution = config.level_resolution(l);
            let vertices = (resolution as usize + 1).pow(3);
            let dense = vertices <= config.table_size;
            let entries = if dense { vertices } else { config.table_size };
            let layout = LevelLayout {
                resolution,
                entries,
                dense,
                offset,
            };
            offset += entries * config.features_per_entry;
            layout
        })
        .collect()
}
