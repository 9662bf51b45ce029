//! Scalar-field sources.
//!
//! Every field is a pure function over normalized coordinates `[0,1)^3`
//! returning values in `[0,1]`. Three coordinate frames appear across the
//! crate and all of them are anchored here:
//!
//! * normalized `q ∈ [0,1)^3`, the field's own domain;
//! * world `w = q * dims`, the continuous voxel space `[0, dims]` in which
//!   cameras, rays and macro-cells live;
//! * lattice index `p = w - 0.5`, where integer `p` is a voxel center. Brick
//!   samples sit on integer lattice indices.

use crate::error::{Error, Result};
use crate::math::Vec3;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

/// Nominal lattice and native value range of a field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldDomain {
    pub dims: [u32; 3],
    pub value_range: (f64, f64),
}

impl FieldDomain {
    pub fn new(dims: [u32; 3], value_range: (f64, f64)) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Config(format!("dims must be >= 1, got {dims:?}")));
        }
        if !(value_range.0 <= value_range.1) {
            return Err(Error::Config(format!(
                "value range {value_range:?} has vmin > vmax"
            )));
        }
        Ok(Self { dims, value_range })
    }

    /// Domain of a field whose native values are already normalized.
    pub fn unit(dims: [u32; 3]) -> Result<Self> {
        Self::new(dims, (0.0, 1.0))
    }

    pub fn dims_f32(&self) -> Vec3 {
        Vec3::new(
            self.dims[0] as f32,
            self.dims[1] as f32,
            self.dims[2] as f32,
        )
    }

    pub fn voxel_count(&self) -> u64 {
        self.dims.iter().map(|&d| d as u64).product()
    }

    /// `(v - vmin) / (vmax - vmin)`, clamped; a degenerate range maps to 0.
    pub fn normalize(&self, v: f64) -> f64 {
        let (lo, hi) = self.value_range;
        if hi <= lo {
            return 0.0;
        }
        ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
    }

    pub fn world_to_normalized(&self, w: Vec3) -> Vec3 {
        w.div_elem(self.dims_f32())
    }

    /// Normalized coordinate of a (possibly fractional) lattice index.
    pub fn index_to_normalized(&self, p: Vec3) -> Vec3 {
        (p + Vec3::splat(0.5)).div_elem(self.dims_f32())
    }
}

/// Simulated per-call inference cost.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    #[serde(with = "duration_micros")]
    pub fixed_per_batch: Duration,
    #[serde(with = "duration_micros")]
    pub per_sample: Duration,
}

impl CostModel {
    pub fn new(fixed_per_batch: Duration, per_sample: Duration) -> Self {
        Self {
            fixed_per_batch,
            per_sample,
        }
    }

    pub fn cost(&self, n: usize) -> Duration {
        self.fixed_per_batch + self.per_sample.mul_f64(n as f64)
    }
}

mod duration_micros {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64() * 1e6)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let us = f64::deserialize(d)?;
        if !(us >= 0.0) {
            return Err(serde::de::Error::custom("durations must be >= 0"));
        }
        Ok(Duration::from_secs_f64(us * 1e-6))
    }
}

/// A scalar field sampled in batches.
///
/// Implementations must be deterministic and safe to sample concurrently.
pub trait Field: Send + Sync {
    fn domain(&self) -> &FieldDomain;

    /// One value in `[0,1]` per input position, in input order. Positions
    /// outside `[0,1)^3` are rejected, not clamped.
    fn sample_batch(&self, positions: &[Vec3]) -> Result<Vec<f32>>;

    fn sample(&self, position: Vec3) -> Result<f32> {
        Ok(self.sample_batch(&[position])?[0])
    }
}

impl<F: Field + ?Sized> Field for Arc<F> {
    fn domain(&self) -> &FieldDomain {
        (**self).domain()
    }
    fn sample_batch(&self, positions: &[Vec3]) -> Result<Vec<f32>> {
        (**self).sample_batch(positions)
    }
}

impl<F: Field + ?Sized> Field for Box<F> {
    fn domain(&self) -> &FieldDomain {
        (**self).domain()
    }
    fn sample_batch(&self, positions: &[Vec3]) -> Result<Vec<f32>> {
        (**self).sample_batch(positions)
    }
}

pub(crate) fn check_positions(positions: &[Vec3]) -> Result<()> {
    let inside = |c: f32| (0.0..1.0).contains(&c);
    for (index, p) in positions.iter().enumerate() {
        if !(inside(p.x) && inside(p.y) && inside(p.z)) {
            return Err(Error::OutOfDomain {
                index,
                coord: p.to_array(),
            });
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProceduralKind {
    /// `1 - |q - center|`, clamped.
    Sphere,
    /// Concentric shells, periodic in radius.
    Shells,
    /// The Marschner–Lobb test signal.
    #[serde(alias = "marschner_lobb")]
    MarschnerLobbLike,
}

impl FromStr for ProceduralKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sphere" => Ok(Self::Sphere),
            "shells" => Ok(Self::Shells),
            "marschner_lobb_like" | "marschner_lobb" => Ok(Self::MarschnerLobbLike),
            other => Err(Error::Config(format!(
                "unknown procedural field kind {other:?}"
            ))),
        }
    }
}

/// Radial period of [`ProceduralKind::Shells`] in normalized units.
pub const SHELL_PERIOD: f32 = 0.125;

const ML_FREQUENCY: f32 = 6.0;
const ML_ALPHA: f32 = 0.25;

/// Analytic test field.
#[derive(Clone, Debug)]
pub struct ProceduralField {
    kind: ProceduralKind,
    domain: FieldDomain,
}

impl ProceduralField {
    pub fn kind(&self) -> ProceduralKind {
        self.kind
    }

    pub fn eval(&self, q: Vec3) -> f32 {
        match self.kind {
            ProceduralKind::Sphere => {
                let r = (q - Vec3::splat(0.5)).length();
                (1.0 - r).clamp(0.0, 1.0)
            }
            ProceduralKind::Shells => shells_value((q - Vec3::splat(0.5)).length()),
            ProceduralKind::MarschnerLobbLike => {
                let c = q * 2.0 - Vec3::splat(1.0);
                let r = (c.x * c.x + c.y * c.y).sqrt();
                let pi = std::f32::consts::PI;
                let rho_r = (2.0 * pi * ML_FREQUENCY * (pi * r / 2.0).cos()).cos();
                let v = (1.0 - (pi * c.z / 2.0).sin() + ML_ALPHA * (1.0 + rho_r))
                    / (2.0 * (1.0 + ML_ALPHA));
                v.clamp(0.0, 1.0)
            }
        }
    }
}

/// Shell profile as a function of normalized radius.
pub fn shells_value(r: f32) -> f32 {
    0.5 + 0.5 * (2.0 * std::f32::consts::PI * r / SHELL_PERIOD).cos()
}

impl Field for ProceduralField {
    fn domain(&self) -> &FieldDomain {
        &self.domain
    }

    fn sample_batch(&self, positions: &[Vec3]) -> Result<Vec<f32>> {
        check_positions(positions)?;
        Ok(positions.iter().map(|&q| self.eval(q)).collect())
    }
}

/// Builds an analytic field. `dims` only declares the nominal lattice.
pub fn make_procedural(kind: ProceduralKind, dims: [u32; 3]) -> Result<ProceduralField> {
    Ok(ProceduralField {
        kind,
        domain: FieldDomain::unit(dims)?,
    })
}

/// Same as [`make_procedural`] with the kind given by name.
pub fn make_procedural_named(kind: &str, dims: [u32; 3]) -> Result<ProceduralField> {
    make_procedural(kind.parse()?, dims)
}

/// Field with one value everywhere.
#[derive(Clone, Debug)]
pub struct ConstantField {
    value: f32,
    domain: FieldDomain,
}

impl ConstantField {
    pub fn new(value: f32, dims: [u32; 3]) -> Result<Self> {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::Config(format!("constant {value} outside [0,1]")));
        }
        Ok(Self {
            value,
            domain: FieldDomain::unit(dims)?,
        })
    }
}

impl Field for ConstantField {
    fn domain(&self) -> &FieldDomain {
        &self.domain
    }

    fn sample_batch(&self, positions: &[Vec3]) -> Result<Vec<f32>> {
        check_positions(positions)?;
        Ok(vec![self.value; positions.len()])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalarType {
    U8,
    U16,
    F32,
    F64,
}

impl ScalarType {
    pub fn size(self) -> usize {
        match self {
            ScalarType::U8 => 1,
            ScalarType::U16 => 2,
            ScalarType::F32 => 4,
            ScalarType::F64 => 8,
        }
    }
}

impl FromStr for ScalarType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "u8" => Ok(Self::U8),
            "u16" => Ok(Self::U16),
            "f32" => Ok(Self::F32),
            "f64" => Ok(Self::F64),
            other => Err(Error::Config(format!("unknown scalar type {other:?}"))),
        }
    }
}

/// Sidecar JSON describing a headerless raw volume.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeDescriptor {
    pub dims: [u32; 3],
    #[serde(rename = "type")]
    pub scalar_type: ScalarType,
    pub vmin: f64,
    pub vmax: f64,
}

impl VolumeDescriptor {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}

/// Trilinearly interpolated lattice with samples at voxel centers.
#[derive(Clone, Debug)]
pub struct RawLattice {
    domain: FieldDomain,
    data: Vec<f32>,
}

impl RawLattice {
    /// Wraps already-normalized samples laid out x-fastest.
    pub fn from_normalized(dims: [u32; 3], data: Vec<f32>) -> Result<Self> {
        let domain = FieldDomain::unit(dims)?;
        if data.len() as u64 != domain.voxel_count() {
            return Err(Error::Dimensions(format!(
                "{} samples for dims {dims:?}",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Config(format!("sample {v} outside [0,1]")));
        }
        Ok(Self { domain, data })
    }

    /// Samples `field` at every voxel center of `dims`.
    pub fn rasterize(field: &dyn Field, dims: [u32; 3]) -> Result<Self> {
        let domain = FieldDomain::unit(dims)?;
        let mut coords = Vec::with_capacity(domain.voxel_count() as usize);
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    coords
                        .push(domain.index_to_normalized(Vec3::new(x as f32, y as f32, z as f32)));
                }
            }
        }
        let data = field.sample_batch(&coords)?;
        Ok(Self { domain, data })
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn at(&self, x: u32, y: u32, z: u32) -> f32 {
        let [dx, dy, _] = self.domain.dims;
        self.data[(x as usize) + dx as usize * (y as usize + dy as usize * z as usize)]
    }

    fn interpolate(&self, q: Vec3) -> f32 {
        let dims = self.domain.dims;
        let mut base = [0u32; 3];
        let mut frac = [0f32; 3];
        for a in 0..3 {
            let n = dims[a];
            let x = (q[a] * n as f32 - 0.5).clamp(0.0, (n - 1) as f32);
            let i = (x.floor() as u32).min(n.saturating_sub(2));
            base[a] = i;
            frac[a] = if n == 1 { 0.0 } else { x - i as f32 };
        }
        let step = |a: usize| u32::from(dims[a] > 1);
        let (x0, y0, z0) = (base[0], base[1], base[2]);
        let (x1, y1, z1) = (x0 + step(0), y0 + step(1), z0 + step(2));
        let [fx, fy, fz] = frac;
        let lerp = |a: f32, b: f32, t: f32| a + (b - a) * t;
        let c00 = lerp(self.at(x0, y0, z0), self.at(x1, y0, z0), fx);
        let c10 = lerp(self.at(x0, y1, z0), self.at(x1, y1, z0), fx);
        let c01 = lerp(self.at(x0, y0, z1), self.at(x1, y0, z1), fx);
        let c11 = lerp(self.at(x0, y1, z1), self.at(x1, y1, z1), fx);
        lerp(lerp(c00, c10, fy), lerp(c01, c11, fy), fz)
    }
}

impl Field for RawLattice {
    fn domain(&self) -> &FieldDomain {
        &self.domain
    }

    fn sample_batch(&self, positions: &[Vec3]) -> Result<Vec<f32>> {
        check_positions(positions)?;
        Ok(positions.iter().map(|&q| self.interpolate(q)).collect())
    }
}

/// Reads a headerless little-endian volume, x-fastest then y then z.
pub fn load_raw(
    path: impl AsRef<Path>,
    dims: [u32; 3],
    scalar_type: ScalarType,
    value_range: (f64, f64),
) -> Result<RawLattice> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    let domain = FieldDomain::new(dims, value_range)?;
    let expected = domain.voxel_count() as usize * scalar_type.size();
    let ingest = |reason: String| Error::Ingestion {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() != expected {
        return Err(ingest(format!(
            "file holds {} bytes, expected {expected} for {dims:?} {scalar_type:?}",
            bytes.len()
        )));
    }
    let native: Vec<f64> = match scalar_type {
        ScalarType::U8 => bytes.iter().map(|&b| b as f64).collect(),
        ScalarType::U16 => bytes
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]) as f64)
            .collect(),
        ScalarType::F32 => bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        ScalarType::F64 => bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    };
    if let Some(i) = native.iter().position(|v| v.is_nan()) {
        return Err(ingest(format!("NaN at voxel {i}")));
    }
    let data = native.iter().map(|&v| domain.normalize(v) as f32).collect();
    Ok(RawLattice { domain, data })
}

/// Loads a raw volume described by a sidecar descriptor.
pub fn load_raw_with_descriptor(
    path: impl AsRef<Path>,
    descriptor: &VolumeDescriptor,
) -> Result<RawLattice> {
    load_raw(
        path,
        descriptor.dims,
        descriptor.scalar_type,
        (descriptor.vmin, descriptor.vmax),
    )
}

/// Pass-through field that charges a simulated inference cost per call.
pub struct DelayedField<F> {
    inner: F,
    cost: CostModel,
}

impl<F: Field> DelayedField<F> {
    pub fn inner(&self) -> &F {
        &self.inner
    }

    pub fn cost_model(&self) -> CostModel {
        self.cost
    }
}

pub fn wrap_delayed<F: Field>(inner: F, cost: CostModel) -> DelayedField<F> {
    DelayedField { inner, cost }
}

impl<F: Field> Field for DelayedField<F> {
    fn domain(&self) -> &FieldDomain {
        self.inner.domain()
    }

    fn sample_batch(&self, positions: &[Vec3]) -> Result<Vec<f32>> {
        let deadline = Instant::now() + self.cost.cost(positions.len());
        let values = self.inner.sample_batch(positions)?;
        // Sleeps only the calling thread.
        let now = Instant::now();
        if deadline > now {
            std::thread::sleep(deadline - now);
        }
        Ok(values)
    }
}
