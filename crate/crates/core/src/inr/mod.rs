//! Compact neural representation of a scalar field: a multiresolution
//! hash-grid encoder feeding a small fully-connected network.
//!
//! All trainable values live in one flat parameter vector. Grid tables come
//! first, coarsest level first, each stored entry-major (`features_per_entry`
//! consecutive values per entry). MLP layers follow in order, each as a
//! row-major `outputs x inputs` weight matrix followed by its bias vector.

mod hashgrid;
mod io;
mod mlp;
mod train;

pub use hashgrid::{level_layouts, LevelLayout};
pub use io::{load_weights, save_weights, WeightFile};
pub use mlp::LayerLayout;
pub use train::{loss_and_gradient, train, Optimizer, TrainConfig, TrainReport};

use crate::error::{Error, Result};
use crate::field::{check_positions, Field, FieldDomain};
use crate::math::Vec3;
use num_traits::{Float, FromPrimitive, ToPrimitive};
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use std::fmt::Debug;
use std::sync::OnceLock;

/// Scalar type the network can be instantiated with.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Debug + Default + Send + Sync + std::iter::Sum + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

pub(crate) fn cast<T: Real>(v: f32) -> T {
    T::from_f32(v).expect("f32 fits every Real")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HashGridConfig {
    pub levels: usize,
    pub features_per_entry: usize,
    pub base_resolution: u32,
    pub growth_factor: f32,
    pub table_size: usize,
}

impl Default for HashGridConfig {
    fn default() -> Self {
        Self {
            levels: 8,
            features_per_entry: 2,
            base_resolution: 4,
            growth_factor: 1.5,
            table_size: 1 << 16,
        }
    }
}

impl HashGridConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 || self.features_per_entry == 0 {
            return Err(Error::Config(
                "hash grid needs >= 1 level and feature".into(),
            ));
        }
        if !(self.growth_factor > 1.0) {
            return Err(Error::Config("growth_factor must exceed 1".into()));
        }
        if !self.table_size.is_power_of_two() {
            return Err(Error::Config(format!(
                "table_size {} is not a power of two",
                self.table_size
            )));
        }
        if self.base_resolution == 0 {
            return Err(Error::Config("base_resolution must be >= 1".into()));
        }
        Ok(())
    }

    pub fn level_resolution(&self, level: usize) -> u32 {
        let r = self.base_resolution as f64 * (self.growth_factor as f64).powi(level as i32);
        (r.floor() as u32).max(1)
    }

    /// Length of the encoded feature vector, `levels * features_per_entry`.
    pub fn encoded_len(&self) -> usize {
        self.levels * self.features_per_entry
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Sigmoid,
    Clamp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub activation: Activation,
    pub output_activation: OutputActivation,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden_width: 32,
            hidden_layers: 2,
            activation: Activation::Relu,
            output_activation: OutputActivation::Sigmoid,
        }
    }
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_width == 0 || self.hidden_layers == 0 {
            return Err(Error::Config(
                "MLP needs >= 1 hidden layer of width >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Full architecture description, also the JSON header of weight files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InrConfig {
    pub hash_grid: HashGridConfig,
    pub mlp: MlpConfig,
    pub domain: FieldDomain,
}

/// Where each parameter block sits in the flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamLayout {
    pub levels: Vec<LevelLayout>,
    pub layers: Vec<LayerLayout>,
    pub grid_len: usize,
    pub total: usize,
}

impl ParamLayout {
    pub fn new(config: &InrConfig) -> Self {
        let levels = level_layouts(&config.hash_grid);
        let grid_len = levels
            .last()
            .map(|l| l.offset + l.entries * config.hash_grid.features_per_entry)
            .unwrap_or(0);
        let layers = mlp::layer_layouts(&config.mlp, config.hash_grid.encoded_len(), grid_len);
        let total = layers
            .last()
            .map(|l| l.bias_offset + l.outputs)
            .unwrap_or(grid_len);
        Self {
            levels,
            layers,
            grid_len,
            total,
        }
    }
}

/// Which block a parameter belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamClass {
    GridEntry,
    Weight,
    Bias,
}

impl ParamLayout {
    pub fn class_of(&self, index: usize) -> ParamClass {
        if index < self.grid_len {
            return ParamClass::GridEntry;
        }
        for l in &self.layers {
            if (l.weight_offset..l.bias_offset).contains(&index) {
                return ParamClass::Weight;
            }
            if (l.bias_offset..l.bias_offset + l.outputs).contains(&index) {
                return ParamClass::Bias;
            }
        }
        panic!("parameter index {index} out of range")
    }
}

/// A trained (or trainable) neural field.
#[derive(Debug)]
pub struct InrModel<T: Real = f32> {
    config: InrConfig,
    layout: ParamLayout,
    params: Vec<T>,
    finite: OnceLock<bool>,
}

impl<T: Real> Clone for InrModel<T> {
    fn clone(&self) -> Self {
        Self::from_params(self.config.clone(), self.params.clone()).expect("valid clone")
    }
}

impl<T: Real> InrModel<T> {
    /// Randomly initialized model: grid entries uniform in ±1e-4, MLP
    /// weights uniform in ±1/sqrt(fan_in), biases zero.
    pub fn new(config: InrConfig, seed: u64) -> Result<Self> {
        config.hash_grid.validate()?;
        config.mlp.validate()?;
        let layout = ParamLayout::new(&config);
        let mut rng = rand::rngs::SmallRng::seed_from_u64(seed);
        let mut params = vec![T::zero(); layout.total];
        for p in &mut params[..layout.grid_len] {
            *p = cast(rng.gen_range(-1e-4f32..1e-4));
        }
        for l in &layout.layers {
            let bound = 1.0 / (l.inputs as f32).sqrt();
            for p in &mut params[l.weight_offset..l.bias_offset] {
                *p = cast(rng.gen_range(-bound..bound));
            }
        }
        Ok(Self {
            config,
            layout,
            params,
            finite: OnceLock::new(),
        })
    }

    pub fn from_params(config: InrConfig, params: Vec<T>) -> Result<Self> {
        config.hash_grid.validate()?;
        config.mlp.validate()?;
        let layout = ParamLayout::new(&config);
        if params.len() != layout.total {
            return Err(Error::ModelCorrupt(format!(
                "{} parameters, architecture needs {}",
                params.len(),
                layout.total
            )));
        }
        Ok(Self {
            config,
            layout,
            params,
            finite: OnceLock::new(),
        })
    }

    pub fn config(&self) -> &InrConfig {
        &self.config
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        self.finite = OnceLock::new();
        &mut self.params
    }

    /// Converts every parameter to another precision.
    pub fn cast<U: Real>(&self) -> InrModel<U> {
        let params = self
            .params
            .iter()
            .map(|p| U::from_f64(p.to_f64().unwrap()).unwrap())
            .collect();
        InrModel::from_params(self.config.clone(), params).expect("same layout")
    }

    fn check_finite(&self) -> Result<()> {
        let ok = *self
            .finite
            .get_or_init(|| self.params.iter().all(|p| p.is_finite()));
        if ok {
            Ok(())
        } else {
            Err(Error::ModelCorrupt("non-finite parameter".into()))
        }
    }

    /// Feature vector of length `levels * features_per_entry`, coarsest
    /// level first.
    pub fn encode(&self, q: Vec3) -> Vec<T> {
        let mut out = vec![T::zero(); self.config.hash_grid.encoded_len()];
        self.encode_into(q, &mut out, None);
        out
    }

    /// Encodes into `out`; optionally records the 8 corner entries and
    /// weights of every level for back-propagation.
    pub(crate) fn encode_into(
        &self,
        q: Vec3,
        out: &mut [T],
        mut corners: Option<&mut Vec<[(usize, f32); 8]>>,
    ) {
        let n = self.config.hash_grid.features_per_entry;
        if let Some(c) = corners.as_deref_mut() {
            c.clear();
        }
        for (l, level) in self.layout.levels.iter().enumerate() {
            let cs = level.corners(q);
            let slice = &mut out[l * n..(l + 1) * n];
            slice.iter_mut().for_each(|v| *v = T::zero());
            for &(entry, w) in &cs {
                let base = level.offset + entry * n;
                let w: T = cast(w);
                for (f, v) in slice.iter_mut().enumerate() {
                    *v = *v + w * self.params[base + f];
                }
            }
            if let Some(c) = corners.as_deref_mut() {
                c.push(cs);
            }
        }
    }

    /// Network output for one position.
    pub fn infer_one(&self, q: Vec3) -> T {
        let mut scratch = mlp::Scratch::new(&self.layout);
        self.encode_into(q, &mut scratch.acts[0], None);
        mlp::forward(&self.layout, &self.config.mlp, &self.params, &mut scratch)
    }

    /// `MLP(encode(q))` per position, order preserved.
    pub fn infer_batch(&self, positions: &[Vec3]) -> Result<Vec<T>> {
        self.check_finite()?;
        check_positions(positions)?;
        use rayon::prelude::*;
        Ok(positions
            .par_chunks(1024)
            .flat_map_iter(|chunk| {
                let mut scratch = mlp::Scratch::new(&self.layout);
                chunk
                    .iter()
                    .map(|&q| {
                        self.encode_into(q, &mut scratch.acts[0], None);
                        mlp::forward(&self.layout, &self.config.mlp, &self.params, &mut scratch)
                    })
                    .collect::<Vec<_>>()
            })
            .collect())
    }
}

impl<T: Real> Field for InrModel<T> {
    fn domain(&self) -> &FieldDomain {
        &self.config.domain
    }

    fn sample_batch(&self, positions: &[Vec3]) -> Result<Vec<f32>> {
        Ok(self
            .infer_batch(positions)?
            .into_iter()
            .map(|v| v.to_f32().unwrap().clamp(0.0, 1.0))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny_config() -> InrConfig {
        InrConfig {
            hash_grid: HashGridConfig {
                levels: 2,
                features_per_entry: 2,
                base_resolution: 2,
                growth_factor: 2.0,
                table_size: 16,
            },
            mlp: MlpConfig {
                hidden_width: 8,
                hidden_layers: 1,
                ..MlpConfig::default()
            },
            domain: FieldDomain::unit([16; 3]).unwrap(),
        }
    }

    #[test]
    fn encoded_length_is_levels_times_features() {
        let m: InrModel = InrModel::new(tiny_config(), 0).unwrap();
        assert_eq!(m.encode(Vec3::splat(0.3)).len(), 4);
    }

    #[test]
    fn vertex_position_returns_table_entry() {
        let mut m: InrModel = InrModel::new(tiny_config(), 1).unwrap();
        for (i, p) in m.params_mut().iter_mut().enumerate() {
            *p = i as f32 * 0.01;
        }
        // level 0 has resolution 2: vertex (1, 0, 2) sits at q = (0.5, 0, 1.0)
        // and q must stay < 1, so use vertex (1, 1, 0) at (0.5, 0.5, 0).
        let level = &m.layout().levels[0];
        let entry = level.entry(1, 1, 0);
        let f = m.encode(Vec3::new(0.5, 0.5, 0.0));
        let base = level.offset + entry * 2;
        assert!((f[0] - m.params()[base]).abs() < 1e-6);
        assert!((f[1] - m.params()[base + 1]).abs() < 1e-6);
    }

    #[test]
    fn edge_midpoint_averages_endpoints() {
        let mut m: InrModel = InrModel::new(tiny_config(), 2).unwrap();
        for (i, p) in m.params_mut().iter_mut().enumerate() {
            *p = ((i * 7919) % 97) as f32 * 0.01;
        }
        let level = m.layout().levels[0].clone();
        // midpoint of the x-edge between vertices (0,1,1) and (1,1,1)
        let f = m.encode(Vec3::new(0.25, 0.5, 0.5));
        let a = level.offset + level.entry(0, 1, 1) * 2;
        let b = level.offset + level.entry(1, 1, 1) * 2;
        for k in 0..2 {
            let hand = 0.5 * (m.params()[a + k] + m.params()[b + k]);
            assert!((f[k] - hand).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_output_layer_gives_half() {
        let mut m: InrModel = InrModel::new(tiny_config(), 3).unwrap();
        let last = m.layout().layers.last().unwrap().clone();
        for p in &mut m.params_mut()[last.weight_offset..last.bias_offset + last.outputs] {
            *p = 0.0;
        }
        let v = m
            .infer_batch(&[Vec3::splat(0.1), Vec3::splat(0.9)])
            .unwrap();
        assert_eq!(v, vec![0.5, 0.5]);
    }

    #[test]
    fn batch_matches_per_position_composition() {
        let m: InrModel = InrModel::new(tiny_config(), 4).unwrap();
        let pts = [
            Vec3::new(0.1, 0.2, 0.3),
            Vec3::new(0.7, 0.1, 0.9),
            Vec3::new(0.1, 0.2, 0.3),
        ];
        let batch = m.infer_batch(&pts).unwrap();
        for (p, v) in pts.iter().zip(&batch) {
            assert_eq!(*v, m.infer_one(*p));
        }
        assert_eq!(batch[0], batch[2]);
    }

    #[test]
    fn non_finite_parameter_is_reported() {
        let mut m: InrModel = InrModel::new(tiny_config(), 5).unwrap();
        m.params_mut()[3] = f32::NAN;
        assert!(matches!(
            m.infer_batch(&[Vec3::splat(0.5)]),
            Err(Error::ModelCorrupt(_))
        ));
    }

    #[test]
    fn encoding_is_continuous_across_cell_boundaries() {
        let mut m: InrModel = InrModel::new(
            InrConfig {
                hash_grid: HashGridConfig {
                    table_size: 1 << 10,
                    ..HashGridConfig::default()
                },
                ..tiny_config()
            },
            6,
        )
        .unwrap();
        let mut rng = rand::rngs::SmallRng::seed_from_u64(6);
        for p in m.params_mut() {
            *p = rng.gen_range(-1.0..1.0);
        }
        let eps = 1e-6f32;
        for level in m.layout().levels.clone() {
            for k in 1..level.resolution.min(6) {
                let b = k as f32 / level.resolution as f32;
                let lo = m.encode(Vec3::new(b - eps, 0.37, 0.61));
                let hi = m.encode(Vec3::new(b + eps, 0.37, 0.61));
                let jump = lo
                    .iter()
                    .zip(&hi)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f32::max);
                assert!(jump < 1e-3, "jump {jump} at level res {}", level.resolution);
            }
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut c = tiny_config();
        c.hash_grid.table_size = 12;
        assert!(InrModel::<f32>::new(c, 0).is_err());
        let mut c = tiny_config();
        c.hash_grid.growth_factor = 1.0;
        assert!(InrModel::<f32>::new(c, 0).is_err());
        let mut c = tiny_config();
        c.mlp.hidden_layers = 0;
        assert!(InrModel::<f32>::new(c, 0).is_err());
    }
}
