use crate::error::{Error, Result};
use crate::math::Vec3;
use serde::{Deserialize, Serialize};

/// Identifies one brick: its level of detail and 3D position in that
/// level's brick grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BrickKey {
    pub lod: u32,
    pub index: [u32; 3],
}

impl BrickKey {
    pub fn new(lod: u32, index: [u32; 3]) -> Self {
        Self { lod, index }
    }
}

/// Where one lattice coordinate falls at one level: the two bracketing
/// samples `(brick, sample)` along an axis and the interpolation weight of
/// the upper one. The pair may straddle two bricks.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Bracket {
    pub k0: u32,
    pub i0: u32,
    pub k1: u32,
    pub i1: u32,
    pub t: f32,
}

/// Brick geometry for a volume: brick grids per level, origins and strides.
///
/// A brick at level `L` holds `B^3` samples spaced `2^L` lattice units apart.
/// Along each axis brick 0 starts at 0 and brick `k >= 1` starts at
/// `k * B * 2^L - 1`, so neighbouring bricks share their boundary sample at
/// level 0 and sit one stride apart at coarser levels.
#[derive(Clone, Debug, PartialEq)]
pub struct BrickLayout {
    dims: [u32; 3],
    brick_size: u32,
    max_lod: u32,
    grids: Vec<[u32; 3]>,
}

impl BrickLayout {
    pub fn new(dims: [u32; 3], brick_size: u32) -> Result<Self> {
        if brick_size < 2 {
            return Err(Error::Config(format!(
                "brick size {brick_size} must be >= 2"
            )));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Config(format!("dims {dims:?} must be >= 1")));
        }
        let b = brick_size as u64;
        let span = |lod: u32| (b - 1) << lod;
        let mut max_lod = 0;
        while dims.iter().any(|&d| span(max_lod) < d as u64 - 1) {
            max_lod += 1;
        }
        let grids = (0..=max_lod)
            .map(|lod| dims.map(|d| bricks_per_axis(d, brick_size, lod)))
            .collect();
        Ok(Self {
            dims,
            brick_size,
            max_lod,
            grids,
        })
    }

    pub fn dims(&self) -> [u32; 3] {
        self.dims
    }

    pub fn brick_size(&self) -> u32 {
        self.brick_size
    }

    /// Coarsest level: the smallest `L` at which one brick spans the volume.
    pub fn max_lod(&self) -> u32 {
        self.max_lod
    }

    pub fn stride(lod: u32) -> u32 {
        1 << lod
    }

    fn check_lod(&self, lod: u32) -> Result<()> {
        if lod > self.max_lod {
            return Err(Error::LodOutOfRange {
                lod,
                max_lod: self.max_lod,
            });
        }
        Ok(())
    }

    pub fn grid_dims(&self, lod: u32) -> Result<[u32; 3]> {
        self.check_lod(lod)?;
        Ok(self.grids[lod as usize])
    }

    pub fn brick_count(&self, lod: u32) -> Result<usize> {
        Ok(self.grid_dims(lod)?.iter().map(|&g| g as usize).product())
    }

    pub fn total_bricks(&self) -> usize {
        self.grids
            .iter()
            .map(|g| g.iter().map(|&n| n as usize).product::<usize>())
            .sum()
    }

    pub fn contains(&self, key: BrickKey) -> bool {
        key.lod <= self.max_lod
            && key
                .index
                .iter()
                .zip(self.grids[key.lod as usize])
                .all(|(&i, g)| i < g)
    }

    pub fn check_key(&self, key: BrickKey) -> Result<()> {
        self.check_lod(key.lod)?;
        if !self.contains(key) {
            return Err(Error::Config(format!(
                "brick {:?} outside the level-{} grid {:?}",
                key.index, key.lod, self.grids[key.lod as usize]
            )));
        }
        Ok(())
    }

    #[inline]
    pub(crate) fn grids_at(&self, lod: u32) -> [u32; 3] {
        self.grids[lod as usize]
    }

    /// Row-major position of the brick within its level, x fastest.
    pub fn linear_index(&self, key: BrickKey) -> usize {
        let g = self.grids[key.lod as usize];
        let [i, j, k] = key.index.map(|v| v as usize);
        i + g[0] as usize * (j + g[1] as usize * k)
    }

    pub fn key_at(&self, lod: u32, linear: usize) -> BrickKey {
        let g = self.grids[lod as usize].map(|v| v as usize);
        BrickKey::new(
            lod,
            [
                (linear % g[0]) as u32,
                (linear / g[0] % g[1]) as u32,
                (linear / (g[0] * g[1])) as u32,
            ],
        )
    }

    /// Every brick key of one level in linear order.
    pub fn keys(&self, lod: u32) -> Result<impl Iterator<Item = BrickKey> + '_> {
        let n = self.brick_count(lod)?;
        Ok((0..n).map(move |i| self.key_at(lod, i)))
    }

    /// Lattice coordinate of the brick's first sample along one axis.
    pub fn axis_origin(&self, index: u32, lod: u32) -> u64 {
        if index == 0 {
            0
        } else {
            ((index as u64 * self.brick_size as u64) << lod) - 1
        }
    }

    pub fn origin(&self, key: BrickKey) -> [u64; 3] {
        key.index.map(|i| self.axis_origin(i, key.lod))
    }

    #[inline]
    fn axis_brick(&self, p: f32, lod: u32, axis: usize) -> u32 {
        let span = (self.brick_size << lod) as f32;
        // saturating cast: negative positions land in brick 0
        let k = ((p + 1.0) / span) as u32;
        k.min(self.grids[lod as usize][axis] - 1)
    }

    /// Brick owning lattice position `p` at `lod` and `p`'s coordinate in
    /// that brick's sample lattice. A sample shared by two bricks belongs to
    /// the higher-index one. Local coordinates past `B - 1` mean `p` lies
    /// between this brick's last sample and the next brick's first.
    pub fn locate(&self, p: Vec3, lod: u32) -> Result<(BrickKey, Vec3)> {
        self.check_lod(lod)?;
        let index: [u32; 3] = std::array::from_fn(|a| self.axis_brick(p[a], lod, a));
        let s = Self::stride(lod) as f32;
        let local: [f32; 3] =
            std::array::from_fn(|a| (p[a] - self.axis_origin(index[a], lod) as f32) / s);
        Ok((BrickKey::new(lod, index), Vec3::from(local)))
    }

    /// Bracketing samples for lattice coordinate `p` along `axis`; `p` is
    /// clamped to `[0, dims - 1]`.
    #[inline]
    pub(crate) fn bracket(&self, p: f32, lod: u32, axis: usize) -> Bracket {
        let p = p.clamp(0.0, (self.dims[axis] - 1) as f32);
        let b = self.brick_size;
        // SAFETY: p is finite and within [0, dims - 1]
        let whole: u32 = unsafe { p.to_int_unchecked() };
        // floor((p + 1) / span) without the float division
        let k = ((whole + 1) / (b << lod)).min(self.grids[lod as usize][axis] - 1);
        let s = Self::stride(lod) as f32;
        let origin = self.axis_origin(k, lod) as f32;
        // exact: s is a power of two
        let u = ((p - origin) * (1.0 / s)).max(0.0);
        let last = (b - 1) as f32;
        let n = self.grids[lod as usize][axis];
        let mut br = if u < last {
            // SAFETY: 0 <= u < b - 1
            let i: u32 = unsafe { u.to_int_unchecked() };
            Bracket {
                k0: k,
                i0: i,
                k1: k,
                i1: i + 1,
                t: u - i as f32,
            }
        } else if k + 1 < n {
            let lo = origin + last * s;
            let hi = self.axis_origin(k + 1, lod) as f32;
            Bracket {
                k0: k,
                i0: b - 1,
                k1: k + 1,
                i1: 0,
                t: ((p - lo) / (hi - lo)).clamp(0.0, 1.0),
            }
        } else {
            Bracket {
                k0: k,
                i0: b - 1,
                k1: k,
                i1: b - 1,
                t: 0.0,
            }
        };
        if br.t == 0.0 {
            br.k1 = br.k0;
            br.i1 = br.i0;
        }
        br
    }

    /// Lattice coordinates of every sample of `key`, x fastest, each clamped
    /// to the last valid lattice position.
    pub fn brick_coords(&self, key: BrickKey) -> Result<Vec<[u32; 3]>> {
        self.check_key(key)?;
        let b = self.brick_size;
        let origin = self.origin(key);
        let s = Self::stride(key.lod) as u64;
        let axis = |a: usize| -> Vec<u32> {
            (0..b as u64)
                .map(|i| (origin[a] + i * s).min(self.dims[a] as u64 - 1) as u32)
                .collect()
        };
        let (xs, ys, zs) = (axis(0), axis(1), axis(2));
        let mut out = Vec::with_capacity((b * b * b) as usize);
        for &z in &zs {
            for &y in &ys {
                for &x in &xs {
                    out.push([x, y, z]);
                }
            }
        }
        Ok(out)
    }

    /// [`BrickLayout::brick_coords`] mapped to the field's normalized domain.
    pub fn brick_positions(&self, key: BrickKey) -> Result<Vec<Vec3>> {
        let d = self.dims.map(|v| v as f32);
        Ok(self
            .brick_coords(key)?
            .into_iter()
            .map(|c| {
                Vec3::new(
                    (c[0] as f32 + 0.5) / d[0],
                    (c[1] as f32 + 0.5) / d[1],
                    (c[2] as f32 + 0.5) / d[2],
                )
            })
            .collect())
    }
}

fn bricks_per_axis(dim: u32, brick_size: u32, lod: u32) -> u32 {
    let b = brick_size as u64;
    let s = 1u64 << lod;
    let last_sample = |k: u64| {
        if k == 0 {
            (b - 1) * s
        } else {
            k * b * s - 1 + (b - 1) * s
        }
    };
    let mut n = 1;
    while last_sample(n - 1) < dim as u64 - 1 {
        n += 1;
    }
    n as u32
}

#[cfg(test)]
mod tests {
    use super::*;

    fn large_layout() -> BrickLayout {
        BrickLayout::new([4000; 3], 40).unwrap()
    }

    #[test]
    fn worked_example_origin_and_stride() {
        let l = large_layout();
        let key = BrickKey::new(1, [0, 1, 2]);
        assert_eq!(l.origin(key), [0, 79, 159]);
        assert_eq!(BrickLayout::stride(1), 2);
        let (k, local) = l.locate(Vec3::new(0.0, 79.0, 159.0), 1).unwrap();
        assert_eq!(k, key);
        assert_eq!(local, Vec3::ZERO);
        assert_eq!(l.axis_origin(2, 2), 319);
    }

    #[test]
    fn shared_boundary_sample_goes_to_higher_index() {
        let l = large_layout();
        let (k, local) = l.locate(Vec3::new(38.5, 0.0, 0.0), 0).unwrap();
        assert_eq!(k.index[0], 0);
        assert_eq!(local.x, 38.5);
        let (k, local) = l.locate(Vec3::new(39.0, 0.0, 0.0), 0).unwrap();
        assert_eq!(k.index[0], 1);
        assert_eq!(local.x, 0.0);
        let (k, local) = l.locate(Vec3::ZERO, 0).unwrap();
        assert_eq!(k, BrickKey::new(0, [0; 3]));
        assert_eq!(local, Vec3::ZERO);
    }

    #[test]
    fn lod_above_max_is_rejected() {
        let l = BrickLayout::new([128; 3], 40).unwrap();
        assert_eq!(l.max_lod(), 2);
        assert!(matches!(
            l.locate(Vec3::ZERO, 3),
            Err(Error::LodOutOfRange { lod: 3, max_lod: 2 })
        ));
    }

    #[test]
    fn grids_cover_the_volume() {
        for dims in [[128, 128, 128], [64, 17, 200], [1, 1, 1], [40, 41, 79]] {
            for b in [2, 5, 8, 40] {
                let l = BrickLayout::new(dims, b).unwrap();
                for lod in 0..=l.max_lod() {
                    let g = l.grid_dims(lod).unwrap();
                    for a in 0..3 {
                        let s = 1u64 << lod;
                        let last = l.axis_origin(g[a] - 1, lod) + (b as u64 - 1) * s;
                        assert!(last >= dims[a] as u64 - 1, "{dims:?} b={b} lod={lod}");
                        if g[a] > 1 {
                            let prev = l.axis_origin(g[a] - 2, lod) + (b as u64 - 1) * s;
                            assert!(prev < dims[a] as u64 - 1, "no redundant trailing brick");
                        }
                    }
                }
                assert_eq!(l.grid_dims(l.max_lod()).unwrap(), [1, 1, 1]);
            }
        }
        let l = BrickLayout::new([128; 3], 40).unwrap();
        assert_eq!(l.grid_dims(0).unwrap(), [4; 3]);
        assert_eq!(l.grid_dims(1).unwrap(), [2; 3]);
        assert_eq!(l.total_bricks(), 64 + 8 + 1);
    }

    #[test]
    fn coords_are_strided_and_clamped() {
        let l = BrickLayout::new([100, 100, 100], 40).unwrap();
        let c = l.brick_coords(BrickKey::new(0, [0; 3])).unwrap();
        assert_eq!(c.len(), 64_000);
        assert_eq!(c[0], [0, 0, 0]);
        assert_eq!(c[1], [1, 0, 0]);
        assert_eq!(c[40], [0, 1, 0]);
        let c = l.brick_coords(BrickKey::new(1, [1, 0, 0])).unwrap();
        assert_eq!(c[0], [79, 0, 0]);
        assert_eq!(c[1], [81, 0, 0]);
        assert_eq!(c[39], [99, 0, 0]);
    }

    #[test]
    fn linear_index_round_trips() {
        let l = BrickLayout::new([300, 90, 130], 8).unwrap();
        for lod in 0..=l.max_lod() {
            for (i, key) in l.keys(lod).unwrap().enumerate() {
                assert_eq!(l.linear_index(key), i);
                assert!(l.contains(key));
            }
        }
    }

    #[test]
    fn brackets_hit_sample_positions() {
        let l = BrickLayout::new([100; 3], 8).unwrap();
        for lod in 0..=l.max_lod() {
            let s = 1u64 << lod;
            for p10 in 0..990 {
                let p = p10 as f32 / 10.0;
                let br = l.bracket(p, lod, 0);
                let pos = |k: u32, i: u32| (l.axis_origin(k, lod) + i as u64 * s) as f32;
                let (a, b) = (pos(br.k0, br.i0), pos(br.k1, br.i1));
                assert!(br.i0 < 8 && br.i1 < 8);
                if br.t == 0.0 {
                    assert!((a - p).abs() < 1e-3 || a >= p);
                } else {
                    assert!(a <= p + 1e-3 && p <= b + 1e-3, "lod {lod} p {p} [{a},{b}]");
                    assert!((a + (b - a) * br.t - p).abs() < 1e-3);
                }
            }
        }
    }
}
