use super::{MlpConfig, OutputActivation, ParamLayout, Real};

/// One dense layer inside the flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerLayout {
    pub inputs: usize,
    pub outputs: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
}

pub(crate) fn layer_layouts(config: &MlpConfig, encoded: usize, start: usize) -> Vec<LayerLayout> {
    let mut widths = vec![encoded];
    widths.extend(std::iter::repeat(config.hidden_width).take(config.hidden_layers));
    widths.push(1);
    let mut offset = start;
    widths
        .windows(2)
        .map(|w| {
            let l = LayerLayout {
                inputs: w[0],
                outputs: w[1],
                weight_offset: offset,
                bias_offset: offset + w[0] * w[1],
            };
            offset = l.bias_offset + l.outputs;
            l
        })
        .collect()
}

/// Per-thread activation buffers. `acts[0]` holds the encoded features;
/// `acts[i + 1]` the output of layer `i` (post-activation for hidden layers,
/// pre-activation for the output layer).
pub(crate) struct Scratch<T> {
    pub acts: Vec<Vec<T>>,
    pub deltas: Vec<Vec<T>>,
}

impl<T: Real> Scratch<T> {
    pub fn new(layout: &ParamLayout) -> Self {
        let mut acts = vec![vec![T::zero(); layout.layers[0].inputs]];
        acts.extend(layout.layers.iter().map(|l| vec![T::zero(); l.outputs]));
        let deltas = acts.clone();
        Self { acts, deltas }
    }
}

fn output<T: Real>(z: T, act: OutputActivation) -> T {
    match act {
        OutputActivation::Sigmoid => T::one() / (T::one() + (-z).exp()),
        OutputActivation::Clamp => z.max(T::zero()).min(T::one()),
    }
}

fn output_derivative<T: Real>(z: T, y: T, act: OutputActivation) -> T {
    match act {
        OutputActivation::Sigmoid => y * (T::one() - y),
        OutputActivation::Clamp => {
            if z > T::zero() && z < T::one() {
                T::one()
            } else {
                T::zero()
            }
        }
    }
}

/// Runs the network on `scratch.acts[0]` and returns the activated output.
pub(crate) fn forward<T: Real>(
    layout: &ParamLayout,
    config: &MlpConfig,
    params: &[T],
    scratch: &mut Scratch<T>,
) -> T {
    let last = layout.layers.len() - 1;
    for (i, l) in layout.layers.iter().enumerate() {
        let (before, after) = scratch.acts.split_at_mut(i + 1);
        let input = &before[i];
        let out = &mut after[0];
        for (o, slot) in out.iter_mut().enumerate() {
            let row = &params[l.weight_offset + o * l.inputs..l.weight_offset + (o + 1) * l.inputs];
            let mut acc = params[l.bias_offset + o];
            for (w, x) in row.iter().zip(input) {
                acc = acc + *w * *x;
            }
            *slot = if i < last { acc.max(T::zero()) } else { acc };
        }
    }
    output(scratch.acts[last + 1][0], config.output_activation)
}

/// Back-propagates `dloss_dy` through the network state left by [`forward`].
/// Accumulates parameter gradients into `grad` and leaves the gradient with
/// respect to the encoded features in `scratch.deltas[0]`.
pub(crate) fn backward<T: Real>(
    layout: &ParamLayout,
    config: &MlpConfig,
    params: &[T],
    scratch: &mut Scratch<T>,
    y: T,
    dloss_dy: T,
    grad: &mut [T],
) {
    let last = layout.layers.len() - 1;
    let z = scratch.acts[last + 1][0];
    scratch.deltas[last + 1][0] = dloss_dy * output_derivative(z, y, config.output_activation);
    for (i, l) in layout.layers.iter().enumerate().rev() {
        let (lo, hi) = scratch.deltas.split_at_mut(i + 1);
        let delta_out = &hi[0];
        let delta_in = &mut lo[i];
        let input = &scratch.acts[i];
        delta_in.iter_mut().for_each(|d| *d = T::zero());
        for o in 0..l.outputs {
            let d = delta_out[o];
            if d == T::zero() {
                continue;
            }
            grad[l.bias_offset + o] = grad[l.bias_offset + o] + d;
            let w0 = l.weight_offset + o * l.inputs;
            for k in 0..l.inputs {
                grad[w0 + k] = grad[w0 + k] + d * input[k];
                delta_in[k] = delta_in[k] + d * params[w0 + k];
            }
        }
        if i > 0 {
            // input of this layer is a ReLU output
            for (d, a) in delta_in.iter_mut().zip(input) {
                if *a <= T::zero() {
                    *d = T::zero();
                }
            }
        }
    }
}
