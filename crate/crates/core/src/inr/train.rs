//! In-memory training on uniformly random coordinate batches.

use super::{cast, mlp, InrModel, Real};
use crate::error::{Error, Result};
use crate::field::Field;
use crate::math::Vec3;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Optimizer {
    Sgd,
    Adam {
        beta1: f32,
        beta2: f32,
        epsilon: f32,
    },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.99,
            epsilon: 1e-15,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f32,
    pub optimizer: Optimizer,
    /// Rescales the gradient to this L2 norm when it is exceeded.
    pub clip_grad_norm: Option<f32>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            batch_size: 65536,
            learning_rate: 1e-2,
            optimizer: Optimizer::adam(),
            clip_grad_norm: None,
            seed: 0x5EED,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct TrainReport {
    /// Mean-squared error of each step's batch, measured before the update.
    pub losses: Vec<f64>,
}

/// Mean-squared error of the model on `(coords, targets)` and its gradient
/// with respect to every parameter.
pub fn loss_and_gradient<T: Real>(
    model: &InrModel<T>,
    coords: &[Vec3],
    targets: &[T],
) -> (T, Vec<T>) {
    assert_eq!(coords.len(), targets.len());
    let n = coords.len();
    if n == 0 {
        return (T::zero(), vec![T::zero(); model.layout.total]);
    }
    let scale = T::from_usize(n).unwrap().recip();
    let chunk = n.div_ceil(rayon::current_num_threads()).max(256);
    let features = model.config.hash_grid.features_per_entry;

    let work = |(cs, ts): (&[Vec3], &[T])| {
        let mut grad = vec![T::zero(); model.layout.total];
        let mut scratch = mlp::Scratch::new(&model.layout);
        let mut corners = Vec::with_capacity(model.layout.levels.len());
        let mut loss = T::zero();
        for (&q, &t) in cs.iter().zip(ts) {
            model.encode_into(q, &mut scratch.acts[0], Some(&mut corners));
            let y = mlp::forward(
                &model.layout,
                &model.config.mlp,
                &model.params,
                &mut scratch,
            );
            let err = y - t;
            loss = loss + err * err;
            let dy = (err + err) * scale;
            mlp::backward(
                &model.layout,
                &model.config.mlp,
                &model.params,
                &mut scratch,
                y,
                dy,
                &mut grad,
            );
            let dfeat = &scratch.deltas[0];
            for (li, (level, cs)) in model.layout.levels.iter().zip(&corners).enumerate() {
                let dl = &dfeat[li * features..(li + 1) * features];
                for &(entry, w) in cs {
                    let w: T = cast(w);
                    let base = level.offset + entry * features;
                    for (f, d) in dl.iter().enumerate() {
                        grad[base + f] = grad[base + f] + w * *d;
                    }
                }
            }
        }
        (loss, grad)
    };

    let (loss, grad) = coords
        .par_chunks(chunk)
        .zip(targets.par_chunks(chunk))
        .map(work)
        .reduce(
            || (T::zero(), vec![T::zero(); model.layout.total]),
            |(la, mut ga), (lb, gb)| {
                for (a, b) in ga.iter_mut().zip(gb) {
                    *a = *a + b;
                }
                (la + lb, ga)
            },
        );
    (loss * scale, grad)
}

struct OptimizerState<T> {
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

fn apply_update<T: Real>(
    params: &mut [T],
    grad: &[T],
    config: &TrainConfig,
    state: &mut OptimizerState<T>,
) {
    let lr: T = cast(config.learning_rate);
    match config.optimizer {
        Optimizer::Sgd => {
            for (p, g) in params.iter_mut().zip(grad) {
                *p = *p - lr * *g;
            }
        }
        Optimizer::Adam {
            beta1,
            beta2,
            epsilon,
        } => {
            let (b1, b2, eps): (T, T, T) = (cast(beta1), cast(beta2), cast(epsilon));
            state.t += 1;
            let c1 = T::one() - b1.powi(state.t);
            let c2 = T::one() - b2.powi(state.t);
            for i in 0..params.len() {
                let g = grad[i];
                state.m[i] = b1 * state.m[i] + (T::one() - b1) * g;
                state.v[i] = b2 * state.v[i] + (T::one() - b2) * g * g;
                let mh = state.m[i] / c1;
                let vh = state.v[i] / c2;
                params[i] = params[i] - lr * mh / (vh.sqrt() + eps);
            }
        }
    }
}

/// Fits `model` to `field` by minimizing the mean-squared error over random
/// coordinates in `[0,1)^3`. On divergence the model keeps the parameters of
/// the last finite step.
pub fn train<T: Real>(
    model: &mut InrModel<T>,
    field: &dyn Field,
    config: &TrainConfig,
) -> Result<TrainReport> {
    if config.steps == 0 {
        return Err(Error::Config("steps must be >= 1".into()));
    }
    if config.batch_size == 0 {
        return Err(Error::Config("batch_size must be >= 1".into()));
    }
    let mut rng = rand::rngs::SmallRng::seed_from_u64(config.seed);
    let mut state = OptimizerState {
        m: vec![T::zero(); model.layout.total],
        v: vec![T::zero(); model.layout.total],
        t: 0,
    };
    let mut report = TrainReport::default();
    let mut coords = Vec::with_capacity(config.batch_size);
    for step in 0..config.steps {
        coords.clear();
        coords.extend((0..config.batch_size).map(|_| Vec3::new(rng.gen(), rng.gen(), rng.gen())));
        let targets: Vec<T> = field.sample_batch(&coords)?.into_iter().map(cast).collect();
        let (loss, mut grad) = loss_and_gradient(model, &coords, &targets);
        let loss = loss.to_f64().unwrap_or(f64::NAN);
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged {
                step,
                last_finite_step: step.checked_sub(1),
            });
        }
        report.losses.push(loss);
        if let Some(max_norm) = config.clip_grad_norm {
            let norm = grad.iter().map(|g| *g * *g).sum::<T>().sqrt();
            let max_norm: T = cast(max_norm);
            if norm > max_norm {
                let s = max_norm / norm;
                grad.iter_mut().for_each(|g| *g = *g * s);
            }
        }
        apply_update(model.params_mut(), &grad, config, &mut state);
    }
    Ok(report)
}
