use serde::{Deserialize, Serialize};

use super::kernels::{accumulate_weight_grads, dot, input_grads, matmul_bias, sigmoid};
use super::{NnError, Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Linear,
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    fn apply<T: Real>(self, xs: &mut [T]) {
        match self {
            Activation::Linear => {}
            Activation::Relu => xs.iter_mut().for_each(|x| *x = x.max(T::zero())),
            Activation::Tanh => xs.iter_mut().for_each(|x| *x = x.tanh()),
            Activation::Sigmoid => xs.iter_mut().for_each(|x| *x = sigmoid(*x)),
        }
    }

    /// Multiplies `grad` by the derivative, expressed through the output `y`.
    fn backprop<T: Real>(self, y: &[T], grad: &mut [T]) {
        match self {
            Activation::Linear => {}
            Activation::Relu => grad.iter_mut().zip(y).for_each(|(g, &v)| {
                if v <= T::zero() {
                    *g = T::zero();
                }
            }),
            Activation::Tanh => grad
                .iter_mut()
                .zip(y)
                .for_each(|(g, &v)| *g *= T::one() - v * v),
            Activation::Sigmoid => grad
                .iter_mut()
                .zip(y)
                .for_each(|(g, &v)| *g *= v * (T::one() - v)),
        }
    }

    /// Orthogonal-init gain conventionally paired with the activation.
    pub fn gain(self) -> f64 {
        match self {
            Activation::Relu => std::f64::consts::SQRT_2,
            Activation::Tanh => 5.0 / 3.0,
            Activation::Linear | Activation::Sigmoid => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerSpec {
    Dense {
        inputs: usize,
        outputs: usize,
        activation: Activation,
    },
    /// Valid (unpadded) convolution over `[H, W, C]` inputs.
    Conv {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        activation: Activation,
    },
    Gru {
        inputs: usize,
        hidden: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Init {
    Orthogonal,
    Uniform,
}

/// Ordered layer list plus the per-sample input shape.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetSpec {
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
    pub init: Init,
}

impl NetSpec {
    pub fn new(input_shape: Vec<usize>, layers: Vec<LayerSpec>) -> Self {
        Self {
            input_shape,
            layers,
            init: Init::Orthogonal,
        }
    }

    /// Per-sample output shape of every layer, checking that layers compose.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>, NnError> {
        if self.layers.is_empty() {
            return Err(NnError::Spec("no layers".into()));
        }
        if self.input_shape.is_empty() || self.input_shape.contains(&0) {
            return Err(NnError::Spec(format!(
                "bad input shape {:?}",
                self.input_shape
            )));
        }
        let grus = self
            .layers
            .iter()
            .filter(|l| matches!(l, LayerSpec::Gru { .. }))
            .count();
        if grus > 1 {
            return Err(NnError::Spec("at most one GRU layer per network".into()));
        }
        let mut shape = self.input_shape.clone();
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let flat: usize = shape.iter().product();
            shape = match *layer {
                LayerSpec::Dense {
                    inputs, outputs, ..
                } => {
                    if inputs != flat || outputs == 0 {
                        return Err(NnError::Spec(format!(
                            "layer {i}: dense expects {inputs} inputs, gets {flat}"
                        )));
                    }
                    vec![outputs]
                }
                LayerSpec::Gru { inputs, hidden } => {
                    if inputs != flat || hidden == 0 {
                        return Err(NnError::Spec(format!(
                            "layer {i}: gru expects {inputs} inputs, gets {flat}"
                        )));
                    }
                    vec![hidden]
                }
                LayerSpec::Conv {
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                    ..
                } => {
                    if shape.len() != 3 || shape[2] != in_channels {
                        return Err(NnError::Spec(format!(
                            "layer {i}: conv expects [H, W, {in_channels}], gets {shape:?}"
                        )));
                    }
                    if kernel == 0
                        || stride == 0
                        || out_channels == 0
                        || kernel > shape[0]
                        || kernel > shape[1]
                    {
                        return Err(NnError::Spec(format!("layer {i}: bad conv geometry")));
                    }
                    vec![
                        (shape[0] - kernel) / stride + 1,
                        (shape[1] - kernel) / stride + 1,
                        out_channels,
                    ]
                }
            };
            out.push(shape.clone());
        }
        Ok(out)
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn output_len(&self) -> Result<usize, NnError> {
        Ok(self.shapes()?.last().unwrap().iter().product())
    }

    pub fn gru_hidden(&self) -> Option<usize> {
        self.layers.iter().find_map(|l| match *l {
            LayerSpec::Gru { hidden, .. } => Some(hidden),
            _ => None,
        })
    }

    /// Shapes of a layer's parameter tensors (weights first, then biases).
    pub(crate) fn param_shapes(layer: &LayerSpec) -> Vec<Vec<usize>> {
        match *layer {
            LayerSpec::Dense {
                inputs, outputs, ..
            } => vec![vec![inputs, outputs], vec![outputs]],
            LayerSpec::Conv {
                in_channels,
                out_channels,
                kernel,
                ..
            } => vec![
                vec![kernel * kernel * in_channels, out_channels],
                vec![out_channels],
            ],
            LayerSpec::Gru { inputs, hidden } => vec![
                vec![inputs, 3 * hidden],
                vec![hidden, 3 * hidden],
                vec![3 * hidden],
                vec![3 * hidden],
            ],
        }
    }
}

/// Per-layer values retained for the backward pass.
#[derive(Debug, Clone)]
pub(crate) enum LayerCache<T> {
    Dense {
        input: Vec<T>,
        output: Vec<T>,
    },
    Conv {
        patches: Vec<T>,
        output: Vec<T>,
        in_shape: [usize; 3],
        out_hw: [usize; 2],
    },
    Gru {
        input: Vec<T>,
        hidden: Vec<T>,
        r: Vec<T>,
        z: Vec<T>,
        n: Vec<T>,
        gh_n: Vec<T>,
    },
}

pub(crate) fn dense_forward<T: Real>(
    params: &[Tensor<T>],
    activation: Activation,
    input: Vec<T>,
    rows: usize,
) -> (Vec<T>, LayerCache<T>) {
    let (w, b) = (&params[0], &params[1]);
    let inputs = w.shape()[0];
    let mut y = vec![T::zero(); rows * b.len()];
    matmul_bias(&input, w.data(), b.data(), rows, inputs, &mut y);
    activation.apply(&mut y);
    (y.clone(), LayerCache::Dense { input, output: y })
}

pub(crate) fn dense_backward<T: Real>(
    params: &[Tensor<T>],
    activation: Activation,
    cache: &LayerCache<T>,
    mut grad: Vec<T>,
    rows: usize,
    grads: &mut [Tensor<T>],
    want_input: bool,
) -> Option<Vec<T>> {
    let LayerCache::Dense { input, output } = cache else {
        unreachable!("cache kind checked by caller")
    };
    activation.backprop(output, &mut grad);
    let w = &params[0];
    let (inputs, outputs) = (w.shape()[0], w.shape()[1]);
    let (gw, gb) = grads.split_at_mut(1);
    accumulate_weight_grads(
        input,
        &grad,
        rows,
        inputs,
        gw[0].data_mut(),
        gb[0].data_mut(),
    );
    want_input.then(|| {
        let mut dx = vec![T::zero(); rows * inputs];
        input_grads(&grad, w.data(), rows, inputs, outputs, &mut dx);
        dx
    })
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_forward<T: Real>(
    params: &[Tensor<T>],
    activation: Activation,
    kernel: usize,
    stride: usize,
    in_shape: [usize; 3],
    input: &[T],
    rows: usize,
) -> (Vec<T>, LayerCache<T>) {
    let [h, w, c] = in_shape;
    let oh = (h - kernel) / stride + 1;
    let ow = (w - kernel) / stride + 1;
    let patch = kernel * kernel * c;
    let sample = h * w * c;
    let mut patches = vec![T::zero(); rows * oh * ow * patch];
    for n in 0..rows {
        let x = &input[n * sample..(n + 1) * sample];
        for oy in 0..oh {
            for ox in 0..ow {
                let base = ((n * oh + oy) * ow + ox) * patch;
                for ky in 0..kernel {
                    let src = ((oy * stride + ky) * w + ox * stride) * c;
                    let dst = base + ky * kernel * c;
                    patches[dst..dst + kernel * c].copy_from_slice(&x[src..src + kernel * c]);
                }
            }
        }
    }
    let (wt, b) = (&params[0], &params[1]);
    let out_ch = b.len();
    let total = rows * oh * ow;
    let mut y = vec![T::zero(); total * out_ch];
    matmul_bias(&patches, wt.data(), b.data(), total, patch, &mut y);
    activation.apply(&mut y);
    (
        y.clone(),
        LayerCache::Conv {
            patches,
            output: y,
            in_shape,
            out_hw: [oh, ow],
        },
    )
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward<T: Real>(
    params: &[Tensor<T>],
    activation: Activation,
    kernel: usize,
    stride: usize,
    cache: &LayerCache<T>,
    mut grad: Vec<T>,
    rows: usize,
    grads: &mut [Tensor<T>],
    want_input: bool,
) -> Option<Vec<T>> {
    let LayerCache::Conv {
        patches,
        output,
        in_shape,
        out_hw,
    } = cache
    else {
        unreachable!("cache kind checked by caller")
    };
    activation.backprop(output, &mut grad);
    let [h, w, c] = *in_shape;
    let [oh, ow] = *out_hw;
    let patch = kernel * kernel * c;
    let wt = &params[0];
    let out_ch = wt.shape()[1];
    let total = rows * oh * ow;
    let (gw, gb) = grads.split_at_mut(1);
    accumulate_weight_grads(
        patches,
        &grad,
        total,
        patch,
        gw[0].data_mut(),
        gb[0].data_mut(),
    );
    if !want_input {
        return None;
    }
    let mut dpatch = vec![T::zero(); total * patch];
    input_grads(&grad, wt.data(), total, patch, out_ch, &mut dpatch);
    let sample = h * w * c;
    let mut dx = vec![T::zero(); rows * sample];
    for n in 0..rows {
        let dxs = &mut dx[n * sample..(n + 1) * sample];
        for oy in 0..oh {
            for ox in 0..ow {
                let base = ((n * oh + oy) * ow + ox) * patch;
                for ky in 0..kernel {
                    let dst = ((oy * stride + ky) * w + ox * stride) * c;
                    let src = base + ky * kernel * c;
                    for (d, &g) in dxs[dst..dst + kernel * c]
                        .iter_mut()
                        .zip(&dpatch[src..src + kernel * c])
                    {
                        *d += g;
                    }
                }
            }
        }
    }
    Some(dx)
}

/// PyTorch-style GRU cell, gate order (reset, update, new):
/// `r = σ(x Wr + h Ur + b)`, `z = σ(x Wz + h Uz + b)`,
/// `n = tanh(x Wn + bn + r ⊙ (h Un + cn))`, `h' = (1 - z) ⊙ n + z ⊙ h`.
pub(crate) fn gru_forward<T: Real>(
    params: &[Tensor<T>],
    input: Vec<T>,
    hidden: Vec<T>,
    rows: usize,
) -> (Vec<T>, LayerCache<T>) {
    let (wi, wh, bi, bh) = (&params[0], &params[1], &params[2], &params[3]);
    let inputs = wi.shape()[0];
    let hs = wh.shape()[0];
    let mut gi = vec![T::zero(); rows * 3 * hs];
    let mut gh = vec![T::zero(); rows * 3 * hs];
    matmul_bias(&input, wi.data(), bi.data(), rows, inputs, &mut gi);
    matmul_bias(&hidden, wh.data(), bh.data(), rows, hs, &mut gh);
    let mut r = vec![T::zero(); rows * hs];
    let mut z = vec![T::zero(); rows * hs];
    let mut nn = vec![T::zero(); rows * hs];
    let mut gh_n = vec![T::zero(); rows * hs];
    let mut out = vec![T::zero(); rows * hs];
    for row in 0..rows {
        let gi = &gi[row * 3 * hs..(row + 1) * 3 * hs];
        let gh = &gh[row * 3 * hs..(row + 1) * 3 * hs];
        for j in 0..hs {
            let k = row * hs + j;
            let rv = sigmoid(gi[j] + gh[j]);
            let zv = sigmoid(gi[hs + j] + gh[hs + j]);
            let nv = (gi[2 * hs + j] + rv * gh[2 * hs + j]).tanh();
            r[k] = rv;
            z[k] = zv;
            nn[k] = nv;
            gh_n[k] = gh[2 * hs + j];
            out[k] = (T::one() - zv) * nv + zv * hidden[k];
        }
    }
    (
        out,
        LayerCache::Gru {
            input,
            hidden,
            r,
            z,
            n: nn,
            gh_n,
        },
    )
}

/// Returns `(input grad, hidden grad)`; the input grad is skipped when not wanted.
pub(crate) fn gru_backward<T: Real>(
    params: &[Tensor<T>],
    cache: &LayerCache<T>,
    grad: &[T],
    rows: usize,
    grads: &mut [Tensor<T>],
    want_input: bool,
) -> (Option<Vec<T>>, Vec<T>) {
    let LayerCache::Gru {
        input,
        hidden,
        r,
        z,
        n,
        gh_n,
    } = cache
    else {
        unreachable!("cache kind checked by caller")
    };
    let (wi, wh) = (&params[0], &params[1]);
    let inputs = wi.shape()[0];
    let hs = wh.shape()[0];
    let mut dgi = vec![T::zero(); rows * 3 * hs];
    let mut dgh = vec![T::zero(); rows * 3 * hs];
    let mut dh = vec![T::zero(); rows * hs];
    for row in 0..rows {
        for j in 0..hs {
            let k = row * hs + j;
            let g = grad[k];
            let (rv, zv, nv) = (r[k], z[k], n[k]);
            let dn = g * (T::one() - zv);
            let dz = g * (hidden[k] - nv);
            dh[k] = g * zv;
            let dn_pre = dn * (T::one() - nv * nv);
            let dr_pre = dn_pre * gh_n[k] * rv * (T::one() - rv);
            let dz_pre = dz * zv * (T::one() - zv);
            let b = row * 3 * hs;
            dgi[b + j] = dr_pre;
            dgi[b + hs + j] = dz_pre;
            dgi[b + 2 * hs + j] = dn_pre;
            dgh[b + j] = dr_pre;
            dgh[b + hs + j] = dz_pre;
            dgh[b + 2 * hs + j] = dn_pre * rv;
        }
    }
    {
        let (w_in, rest) = grads.split_at_mut(1);
        let (w_h, rest) = rest.split_at_mut(1);
        let (b_in, b_h) = rest.split_at_mut(1);
        accumulate_weight_grads(
            input,
            &dgi,
            rows,
            inputs,
            w_in[0].data_mut(),
            b_in[0].data_mut(),
        );
        accumulate_weight_grads(hidden, &dgh, rows, hs, w_h[0].data_mut(), b_h[0].data_mut());
    }
    for row in 0..rows {
        let dghr = &dgh[row * 3 * hs..(row + 1) * 3 * hs];
        for i in 0..hs {
            dh[row * hs + i] += dot(dghr, &wh.data()[i * 3 * hs..(i + 1) * 3 * hs]);
        }
    }
    let dx = want_input.then(|| {
        let mut dx = vec![T::zero(); rows * inputs];
        input_grads(&dgi, wi.data(), rows, inputs, 3 * hs, &mut dx);
        dx
    });
    (dx, dh)
}
