//! Macro-cell acceleration grid: per-region value ranges and the opacity
//! majorants derived from them for a given transfer function.
//!
//! Cells live in world space (continuous voxel units). Cell `c` covers
//! `[c * N, (c + 1) * N)` along each axis, the last cell being cut by the
//! volume boundary.

use crate::error::{Error, Result};
use crate::field::{Field, FieldDomain};
use crate::math::{Aabb, Ray, Vec3};
use crate::render::TransferFunction;

/// Cell-size default, in voxels per side.
pub const DEFAULT_CELL_SIZE: u32 = 16;

/// Bytes stored per cell: an f32 `(min, max)` pair.
pub const BYTES_PER_CELL: u64 = 8;

/// Size bookkeeping for a grid, computed without allocating it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MacroCellLayout {
    pub grid_dims: [u32; 3],
    pub cell_count: u64,
    pub bytes: u64,
}

impl MacroCellLayout {
    pub fn new(dims: [u32; 3], cell_size: u32) -> Result<Self> {
        if cell_size < 2 {
            return Err(Error::Config(format!(
                "macro-cell size {cell_size} must be >= 2"
            )));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Config(format!("dims {dims:?} must be >= 1")));
        }
        let grid_dims = dims.map(|d| d.div_ceil(cell_size));
        let cell_count = grid_dims.iter().map(|&g| g as u64).product();
        Ok(Self {
            grid_dims,
            cell_count,
            bytes: cell_count * BYTES_PER_CELL,
        })
    }
}

const TF_BINS: usize = 256;

/// Range-maximum structure over a transfer function's opacity, discretized
/// into 256 bins with a sparse table of bin maxima.
#[derive(Clone, Debug)]
pub struct OpacityRangeMax {
    tf: TransferFunction,
    /// `table[k][i]` = max over bins `i .. i + 2^k`.
    table: Vec<Vec<f32>>,
}

impl OpacityRangeMax {
    pub fn new(tf: &TransferFunction) -> Self {
        let base: Vec<f32> = (0..TF_BINS)
            .map(|i| tf.max_opacity(i as f32 / TF_BINS as f32, (i + 1) as f32 / TF_BINS as f32))
            .collect();
        let mut table = vec![base];
        let mut span = 1;
        while span * 2 <= TF_BINS {
            let prev = table.last().unwrap();
            let next = (0..=TF_BINS - span * 2)
                .map(|i| prev[i].max(prev[i + span]))
                .collect();
            table.push(next);
            span *= 2;
        }
        Self {
            tf: tf.clone(),
            table,
        }
    }

    fn bins_max(&self, lo: usize, hi: usize) -> f32 {
        if lo > hi {
            return 0.0;
        }
        let k = (usize::BITS - 1 - (hi - lo + 1).leading_zeros()) as usize;
        self.table[k][lo].max(self.table[k][hi + 1 - (1 << k)])
    }

    /// Maximum opacity over `[lo, hi]`: interior bins from the table, the two
    /// partial end bins evaluated exactly.
    pub fn query(&self, lo: f32, hi: f32) -> f32 {
        let (lo, hi) = (lo.clamp(0.0, 1.0), hi.clamp(0.0, 1.0));
        let bin = |v: f32| ((v * TF_BINS as f32) as usize).min(TF_BINS - 1);
        let (bl, bh) = (bin(lo), bin(hi));
        if bl == bh {
            return self.tf.max_opacity(lo, hi);
        }
        let lo_edge = (bl + 1) as f32 / TF_BINS as f32;
        let hi_edge = bh as f32 / TF_BINS as f32;
        self.bins_max(bl + 1, bh.saturating_sub(1))
            .max(self.tf.max_opacity(lo, lo_edge))
            .max(self.tf.max_opacity(hi_edge, hi))
    }
}

/// Min/max grid with per-cell opacity majorants.
#[derive(Clone, Debug)]
pub struct MacroCellGrid {
    dims: [u32; 3],
    cell_size: u32,
    grid_dims: [u32; 3],
    ranges: Vec<(f32, f32)>,
    majorants: Vec<f32>,
}

impl MacroCellGrid {
    /// Builds the grid from the field's lattice samples. Each cell's range
    /// covers the lattice points inside it plus a one-voxel border, widened
    /// by the largest difference between neighboring samples in that block so
    /// values between lattice points stay bracketed.
    pub fn build(field: &dyn Field, dims: [u32; 3], cell_size: u32) -> Result<Self> {
        let layout = MacroCellLayout::new(dims, cell_size)?;
        let domain = FieldDomain::unit(dims)?;
        let [gx, gy, gz] = layout.grid_dims;
        let [vx, vy, vz] = dims;
        let n = cell_size;
        let span = |c: u32, v: u32| {
            (
                c.saturating_mul(n).saturating_sub(1),
                ((c + 1) * n).min(v - 1),
            )
        };
        let mut ranges = vec![(0.0f32, 0.0f32); layout.cell_count as usize];

        for cz in 0..gz {
            let (z0, z1) = span(cz, vz);
            let slab_z = (z1 - z0 + 1) as usize;
            let mut coords = Vec::with_capacity(vx as usize * vy as usize * slab_z);
            for z in z0..=z1 {
                for y in 0..vy {
                    for x in 0..vx {
                        coords.push(
                            domain.index_to_normalized(Vec3::new(x as f32, y as f32, z as f32)),
                        );
                    }
                }
            }
            let values = field.sample_batch(&coords)?;
            let at = |x: u32, y: u32, z: u32| {
                values[x as usize + vx as usize * (y as usize + vy as usize * (z - z0) as usize)]
            };
            for cy in 0..gy {
                let (y0, y1) = span(cy, vy);
                for cx in 0..gx {
                    let (x0, x1) = span(cx, vx);
                    let (mut lo, mut hi, mut jump) = (f32::INFINITY, f32::NEG_INFINITY, 0.0f32);
                    for z in z0..=z1 {
                        for y in y0..=y1 {
                            for x in x0..=x1 {
                                let v = at(x, y, z);
                                lo = lo.min(v);
                                hi = hi.max(v);
                                if x < x1 {
                                    jump = jump.max((at(x + 1, y, z) - v).abs());
                                }
                                if y < y1 {
                                    jump = jump.max((at(x, y + 1, z) - v).abs());
                                }
                                if z < z1 {
                                    jump = jump.max((at(x, y, z + 1) - v).abs());
                                }
                            }
                        }
                    }
                    let idx = cx as usize + gx as usize * (cy as usize + gy as usize * cz as usize);
                    ranges[idx] = ((lo - jump).max(0.0), (hi + jump).min(1.0));
                }
            }
        }
        Self::from_ranges(dims, cell_size, ranges)
    }

    /// Assembles a grid from stored ranges; majorants start at 1 (nothing
    /// skippable) until [`MacroCellGrid::update_majorants`] runs.
    pub fn from_ranges(dims: [u32; 3], cell_size: u32, ranges: Vec<(f32, f32)>) -> Result<Self> {
        let layout = MacroCellLayout::new(dims, cell_size)?;
        if ranges.len() as u64 != layout.cell_count {
            return Err(Error::Dimensions(format!(
                "{} ranges for a {:?} cell grid",
                ranges.len(),
                layout.grid_dims
            )));
        }
        if let Some(r) = ranges.iter().find(|(lo, hi)| !(lo <= hi)) {
            return Err(Error::Config(format!("cell range {r:?} has min > max")));
        }
        let majorants = vec![1.0; ranges.len()];
        Ok(Self {
            dims,
            cell_size,
            grid_dims: layout.grid_dims,
            ranges,
            majorants,
        })
    }

    pub fn dims(&self) -> [u32; 3] {
        self.dims
    }

    pub fn cell_size(&self) -> u32 {
        self.cell_size
    }

    pub fn grid_dims(&self) -> [u32; 3] {
        self.grid_dims
    }

    pub fn ranges(&self) -> &[(f32, f32)] {
        &self.ranges
    }

    pub fn majorants(&self) -> &[f32] {
        &self.majorants
    }

    pub fn cell_index(&self, cell: [u32; 3]) -> usize {
        let [gx, gy, _] = self.grid_dims;
        cell[0] as usize + gx as usize * (cell[1] as usize + gy as usize * cell[2] as usize)
    }

    /// Cell containing world position `w`, clamped to the grid.
    pub fn cell_at(&self, w: Vec3) -> [u32; 3] {
        std::array::from_fn(|a| {
            let c = (w[a] / self.cell_size as f32).floor().max(0.0) as u32;
            c.min(self.grid_dims[a] - 1)
        })
    }

    pub fn range_at(&self, w: Vec3) -> (f32, f32) {
        self.ranges[self.cell_index(self.cell_at(w))]
    }

    pub fn majorant(&self, index: usize) -> f32 {
        self.majorants[index]
    }

    /// Recomputes every cell's majorant as the transfer function's maximum
    /// opacity over the cell's value range.
    pub fn update_majorants(&mut self, tf: &TransferFunction) {
        let rmq = OpacityRangeMax::new(tf);
        for (m, &(lo, hi)) in self.majorants.iter_mut().zip(&self.ranges) {
            *m = rmq.query(lo, hi);
        }
    }

    /// Same as [`MacroCellGrid::update_majorants`], returning the updated grid.
    pub fn with_majorants(mut self, tf: &TransferFunction) -> Self {
        self.update_majorants(tf);
        self
    }

    pub fn bounds(&self) -> Aabb {
        let d = self.dims;
        Aabb::new(Vec3::ZERO, Vec3::new(d[0] as f32, d[1] as f32, d[2] as f32))
    }

    /// Cells pierced by `ray`, front to back.
    pub fn traverse(&self, ray: &Ray) -> Vec<CellSpan> {
        self.walker(ray).map(|w| w.collect()).unwrap_or_default()
    }

    /// Incremental walk over the cells pierced by `ray`, or `None` when the
    /// ray misses the volume.
    pub fn walker(&self, ray: &Ray) -> Option<CellWalker> {
        let (t0, t1) = self.bounds().intersect(ray)?;
        Some(CellWalker::new(self, ray, t0, t1))
    }
}

/// One cell crossed by a ray over `[t_enter, t_exit)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellSpan {
    pub cell: [u32; 3],
    pub index: usize,
    pub t_enter: f32,
    pub t_exit: f32,
}

/// 3D DDA over the macro-cell grid.
#[derive(Clone, Copy, Debug)]
pub struct CellWalker {
    cell: [i64; 3],
    step: [i64; 3],
    t_next: [f32; 3],
    t_delta: [f32; 3],
    grid_dims: [u32; 3],
    t: f32,
    t_end: f32,
    done: bool,
}

impl CellWalker {
    fn new(grid: &MacroCellGrid, ray: &Ray, t0: f32, t1: f32) -> Self {
        let n = grid.cell_size as f32;
        let entry = ray.at(t0);
        let mut cell = [0i64; 3];
        let mut step = [0i64; 3];
        let mut t_next = [f32::INFINITY; 3];
        let mut t_delta = [f32::INFINITY; 3];
        for a in 0..3 {
            let d = ray.dir[a];
            let g = grid.grid_dims[a] as i64;
            let mut c = (entry[a] / n).floor() as i64;
            // on a face, pick the cell the ray moves into
            if d < 0.0 && entry[a] == c as f32 * n {
                c -= 1;
            }
            cell[a] = c.clamp(0, g - 1);
            if d > 0.0 {
                step[a] = 1;
                t_next[a] = ray.origin[a].mul_add(-1.0, (cell[a] + 1) as f32 * n) / d;
                t_delta[a] = n / d;
            } else if d < 0.0 {
                step[a] = -1;
                t_next[a] = ray.origin[a].mul_add(-1.0, cell[a] as f32 * n) / d;
                t_delta[a] = -n / d;
            }
        }
        Self {
            cell,
            step,
            t_next,
            t_delta,
            grid_dims: grid.grid_dims,
            t: t0,
            t_end: t1,
            done: t1 <= t0,
        }
    }

    /// Parametric end of the walk.
    pub fn t_end(&self) -> f32 {
        self.t_end
    }
}

impl Iterator for CellWalker {
    type Item = CellSpan;

    fn next(&mut self) -> Option<CellSpan> {
        while !self.done {
            let axis = if self.t_next[0] <= self.t_next[1] && self.t_next[0] <= self.t_next[2] {
                0
            } else if self.t_next[1] <= self.t_next[2] {
                1
            } else {
                2
            };
            let exit = self.t_next[axis].min(self.t_end);
            let cell = self.cell.map(|c| c as u32);
            let enter = self.t;

            self.t = exit;
            self.cell[axis] += self.step[axis];
            self.t_next[axis] += self.t_delta[axis];
            if exit >= self.t_end
                || self.cell[axis] < 0
                || self.cell[axis] >= self.grid_dims[axis] as i64
            {
                self.done = true;
            }
            if exit > enter {
                let g = self.grid_dims;
                let index = cell[0] as usize
                    + g[0] as usize * (cell[1] as usize + g[1] as usize * cell[2] as usize);
                return Some(CellSpan {
                    cell,
                    index,
                    t_enter: enter,
                    t_exit: exit,
                });
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{make_procedural, ConstantField, ProceduralKind, RawLattice};
    use crate::render::ControlPoint;
    use rand::{Rng, SeedableRng};

    #[test]
    fn large_layout_is_metadata_only() {
        let l = MacroCellLayout::new([4096; 3], 16).unwrap();
        assert_eq!(l.grid_dims, [256; 3]);
        assert_eq!(l.cell_count, 16_777_216);
        assert_eq!(l.bytes, 134_217_728);
    }

    #[test]
    fn ceiling_formula() {
        assert_eq!(
            MacroCellLayout::new([100; 3], 16).unwrap().grid_dims,
            [7; 3]
        );
        assert_eq!(
            MacroCellLayout::new([17, 16, 1], 16).unwrap().grid_dims,
            [2, 1, 1]
        );
        assert!(MacroCellLayout::new([16; 3], 1).is_err());
    }

    #[test]
    fn constant_field_cells() {
        let f = ConstantField::new(0.5, [20; 3]).unwrap();
        let g = MacroCellGrid::build(&f, [20; 3], 8).unwrap();
        assert_eq!(g.grid_dims(), [3; 3]);
        assert!(g.ranges().iter().all(|&r| r == (0.5, 0.5)));
    }

    #[test]
    fn ranges_bracket_random_samples() {
        let dims = [40, 33, 27];
        let mut rng = rand::rngs::SmallRng::seed_from_u64(5);
        let data: Vec<f32> = (0..40 * 33 * 27).map(|_| rng.gen()).collect();
        let lattice = RawLattice::from_normalized(dims, data).unwrap();
        let sphere = make_procedural(ProceduralKind::Shells, dims).unwrap();
        for field in [&lattice as &dyn Field, &sphere] {
            let g = MacroCellGrid::build(field, dims, 8).unwrap();
            for _ in 0..20_000 {
                let w = Vec3::new(
                    rng.gen::<f32>() * 40.0,
                    rng.gen::<f32>() * 33.0,
                    rng.gen::<f32>() * 27.0,
                );
                let q = field
                    .domain()
                    .world_to_normalized(w)
                    .min_elem(Vec3::splat(0.999_999));
                let v = field.sample(q).unwrap();
                let (lo, hi) = g.range_at(w);
                assert!(lo <= v && v <= hi, "{v} not in [{lo}, {hi}] at {w:?}");
            }
        }
    }

    fn grid_with(ranges: Vec<(f32, f32)>) -> MacroCellGrid {
        let n = ranges.len() as u32;
        MacroCellGrid::from_ranges([4 * n, 4, 4], 4, ranges).unwrap()
    }

    #[test]
    fn transparent_tf_zeroes_majorants() {
        let g = grid_with(vec![(0.0, 1.0), (0.2, 0.3)])
            .with_majorants(&TransferFunction::transparent());
        assert!(g.majorants().iter().all(|&m| m == 0.0));
    }

    #[test]
    fn identity_ramp_majorant_is_range_max() {
        let ranges = vec![
            (0.0, 0.1),
            (0.13, 0.57),
            (0.5, 0.5),
            (0.3, 1.0),
            (0.0031, 0.0033),
        ];
        let g = grid_with(ranges.clone()).with_majorants(&TransferFunction::ramp([1.0; 3], 1.0));
        for (m, r) in g.majorants().iter().zip(&ranges) {
            assert!((m - r.1).abs() < 1e-6, "{m} vs {}", r.1);
        }
    }

    #[test]
    fn spike_only_lights_cells_containing_it() {
        let tf = TransferFunction::new(vec![
            ControlPoint::new(0.0, [1.0; 3], 0.0),
            ControlPoint::new(0.69, [1.0; 3], 0.0),
            ControlPoint::new(0.7, [1.0; 3], 1.0),
            ControlPoint::new(0.71, [1.0; 3], 0.0),
            ControlPoint::new(1.0, [1.0; 3], 0.0),
        ])
        .unwrap();
        let ranges = vec![
            (0.0, 0.6),
            (0.65, 0.75),
            (0.7, 0.7),
            (0.72, 1.0),
            (0.2, 0.689),
        ];
        let g = grid_with(ranges).with_majorants(&tf);
        assert_eq!(g.majorants(), &[0.0, 1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn majorant_dominates_sampled_opacity() {
        let dims = [48; 3];
        let f = make_procedural(ProceduralKind::MarschnerLobbLike, dims).unwrap();
        let tf = TransferFunction::new(vec![
            ControlPoint::new(0.0, [1.0; 3], 0.0),
            ControlPoint::new(0.35, [1.0; 3], 0.0),
            ControlPoint::new(0.5, [1.0; 3], 0.8),
            ControlPoint::new(0.6, [1.0; 3], 0.1),
            ControlPoint::new(1.0, [1.0; 3], 0.3),
        ])
        .unwrap();
        let g = MacroCellGrid::build(&f, dims, 8)
            .unwrap()
            .with_majorants(&tf);
        let mut rng = rand::rngs::SmallRng::seed_from_u64(8);
        for _ in 0..20_000 {
            let q = Vec3::new(rng.gen(), rng.gen(), rng.gen());
            let w = q.mul_elem(Vec3::splat(48.0));
            let v = f.sample(q).unwrap();
            let m = g.majorant(g.cell_index(g.cell_at(w)));
            assert!(tf.opacity(v) <= m + 1e-6);
        }
    }

    #[test]
    fn rmq_matches_exact_range_max() {
        let mut rng = rand::rngs::SmallRng::seed_from_u64(13);
        let mut xs: Vec<f32> = (0..10).map(|_| rng.gen()).collect();
        xs.sort_by(f32::total_cmp);
        let mut pts = vec![ControlPoint::new(0.0, [0.0; 3], rng.gen())];
        pts.extend(
            xs.iter()
                .map(|&x| ControlPoint::new(x, [0.0; 3], rng.gen())),
        );
        pts.push(ControlPoint::new(1.0, [0.0; 3], rng.gen()));
        let tf = TransferFunction::new(pts).unwrap();
        let rmq = OpacityRangeMax::new(&tf);
        for _ in 0..2000 {
            let (a, b): (f32, f32) = (rng.gen(), rng.gen());
            let (lo, hi) = (a.min(b), a.max(b));
            assert!((rmq.query(lo, hi) - tf.max_opacity(lo, hi)).abs() < 1e-6);
        }
    }

    fn unit_grid(dims: [u32; 3], n: u32) -> MacroCellGrid {
        let cells = MacroCellLayout::new(dims, n).unwrap().cell_count as usize;
        MacroCellGrid::from_ranges(dims, n, vec![(0.0, 1.0); cells]).unwrap()
    }

    #[test]
    fn axis_ray_visits_four_cells_in_order() {
        let g = unit_grid([16; 3], 4);
        let r = Ray::new(Vec3::new(-5.0, 1.5, 2.5), Vec3::new(1.0, 0.0, 0.0));
        let spans = g.traverse(&r);
        let cells: Vec<_> = spans.iter().map(|s| s.cell).collect();
        assert_eq!(cells, vec![[0, 0, 0], [1, 0, 0], [2, 0, 0], [3, 0, 0]]);
        assert!((spans[0].t_enter - 5.0).abs() < 1e-5);
        assert!((spans[3].t_exit - 21.0).abs() < 1e-5);
    }

    #[test]
    fn diagonal_ray_is_monotone() {
        let g = unit_grid([8; 3], 4);
        let r = Ray::new(Vec3::splat(-1.0), Vec3::splat(1.0).normalized());
        let spans = g.traverse(&r);
        assert_eq!(spans.first().unwrap().cell, [0, 0, 0]);
        assert_eq!(spans.last().unwrap().cell, [1, 1, 1]);
        for w in spans.windows(2) {
            for a in 0..3 {
                assert!(w[1].cell[a] >= w[0].cell[a]);
            }
        }
    }

    #[test]
    fn spans_tile_the_box_overlap() {
        let dims = [37, 20, 29];
        let g = unit_grid(dims, 8);
        let mut rng = rand::rngs::SmallRng::seed_from_u64(21);
        let mut tested = 0;
        while tested < 500 {
            let o = Vec3::new(
                rng.gen_range(-60.0..100.0),
                rng.gen_range(-60.0..80.0),
                rng.gen_range(-60.0..90.0),
            );
            let target = Vec3::new(
                rng.gen_range(0.0..37.0),
                rng.gen_range(0.0..20.0),
                rng.gen_range(0.0..29.0),
            );
            let r = Ray::new(o, (target - o).normalized());
            let Some((t0, t1)) = g.bounds().intersect(&r) else {
                continue;
            };
            tested += 1;
            let spans = g.traverse(&r);
            assert!(!spans.is_empty());
            assert!((spans[0].t_enter - t0).abs() < 1e-6);
            assert!((spans.last().unwrap().t_exit - t1).abs() < 1e-4);
            let mut total = 0.0f64;
            for w in spans.windows(2) {
                assert_eq!(w[0].t_exit, w[1].t_enter);
                assert_ne!(w[0].cell, w[1].cell);
            }
            for s in &spans {
                assert!(s.t_exit > s.t_enter);
                total += (s.t_exit - s.t_enter) as f64;
                let mid = r.at(0.5 * (s.t_enter + s.t_exit));
                assert_eq!(g.cell_at(mid), s.cell, "midpoint of span lies in its cell");
            }
            assert!((total - (t1 - t0) as f64).abs() < 1e-4);
        }
    }
}
