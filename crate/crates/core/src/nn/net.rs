use std::hash::{Hash, Hasher};
use std::sync::atomic::{AtomicU64, Ordering};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::adam::{adam_step, AdamConfig, AdamState};
use super::init::{orthogonal_init, uniform_init};
use super::layers::{
    conv_backward, conv_forward, dense_backward, dense_forward, gru_backward, gru_forward,
    LayerCache,
};
use super::{Init, LayerSpec, NetSpec, NnError, Real, Tensor};

/// Per-layer parameter tensors. Dense and conv layers hold `[weight, bias]`
/// with weights stored `[inputs, outputs]`; GRU layers hold
/// `[w_input, w_hidden, b_input, b_hidden]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetParams<T> {
    pub layers: Vec<Vec<Tensor<T>>>,
}

impl<T: Real> NetParams<T> {
    pub fn zeros_for(spec: &NetSpec) -> Self {
        Self {
            layers: spec
                .layers
                .iter()
                .map(|l| {
                    NetSpec::param_shapes(l)
                        .into_iter()
                        .map(Tensor::zeros)
                        .collect()
                })
                .collect(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| {
                    l.iter()
                        .map(|t| Tensor::zeros(t.shape().to_vec()))
                        .collect()
                })
                .collect(),
        }
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.layers.iter().flatten()
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor<T>> {
        self.layers.iter_mut().flatten()
    }

    pub fn num_values(&self) -> usize {
        self.tensors().map(Tensor::len).sum()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.shape() == y.shape())
            })
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors().map(Tensor::sum_squares).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, k: T) {
        for t in self.tensors_mut() {
            t.data_mut().iter_mut().for_each(|x| *x *= k);
        }
    }

    /// `self += other`; shapes must match.
    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.tensors_mut().zip(other.tensors()) {
            for (x, &y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += y;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().all(Tensor::is_finite)
    }

    /// Hash of the exact bit patterns, for change detection in tests and logs.
    pub fn fingerprint(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for t in self.tensors() {
            t.shape().hash(&mut h);
            for x in t.data() {
                x.f64().to_bits().hash(&mut h);
            }
        }
        h.finish()
    }

    pub fn flatten(&self) -> Vec<T> {
        self.tensors()
            .flat_map(|t| t.data().iter().copied())
            .collect()
    }
}

/// Everything `backward` needs from a forward call.
#[derive(Debug, Clone)]
pub struct Cache<T> {
    net_id: u64,
    generation: u64,
    rows: usize,
    layers: Vec<LayerCache<T>>,
}

impl<T> Cache<T> {
    pub fn rows(&self) -> usize {
        self.rows
    }
}

pub struct Forward<T> {
    pub output: Tensor<T>,
    pub hidden: Option<Tensor<T>>,
    pub cache: Cache<T>,
}

pub struct Gradients<T> {
    pub params: NetParams<T>,
    /// Gradient w.r.t. the network input (absent when not requested).
    pub input: Option<Tensor<T>>,
    /// Gradient w.r.t. the incoming hidden state (GRU networks only).
    pub hidden: Option<Tensor<T>>,
}

static NEXT_NET_ID: AtomicU64 = AtomicU64::new(1);

#[derive(Debug)]
pub struct Net<T> {
    spec: NetSpec,
    shapes: Vec<Vec<usize>>,
    params: NetParams<T>,
    id: u64,
    generation: u64,
}

impl<T: Real> Clone for Net<T> {
    fn clone(&self) -> Self {
        Self {
            spec: self.spec.clone(),
            shapes: self.shapes.clone(),
            params: self.params.clone(),
            id: NEXT_NET_ID.fetch_add(1, Ordering::Relaxed),
            generation: 0,
        }
    }
}

impl<T: Real> Net<T> {
    /// Seeded initialisation. Orthogonal init uses the layer activation's gain;
    /// GRU weights are initialised gate by gate. Biases start at zero.
    pub fn new(spec: NetSpec, seed: u64) -> Result<Self, NnError> {
        let shapes = spec.shapes()?;
        let mut params = NetParams::zeros_for(&spec);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (layer, tensors) in spec.layers.iter().zip(params.layers.iter_mut()) {
            match *layer {
                LayerSpec::Dense { activation, .. } | LayerSpec::Conv { activation, .. } => {
                    let shape = tensors[0].shape().to_vec();
                    tensors[0] = init_block(spec.init, &shape, activation.gain(), rng.next_u64())?;
                }
                LayerSpec::Gru { inputs, hidden } => {
                    for (t, rows) in [(0, inputs), (1, hidden)] {
                        let mut w = Tensor::zeros(vec![rows, 3 * hidden]);
                        for gate in 0..3 {
                            let block =
                                init_block(spec.init, &[rows, hidden], 1.0, rng.next_u64())?;
                            for r in 0..rows {
                                w.row_mut(r)[gate * hidden..(gate + 1) * hidden]
                                    .copy_from_slice(block.row(r));
                            }
                        }
                        tensors[t] = w;
                    }
                }
            }
        }
        Ok(Self {
            spec,
            shapes,
            params,
            id: NEXT_NET_ID.fetch_add(1, Ordering::Relaxed),
            generation: 0,
        })
    }

    pub fn from_params(spec: NetSpec, params: NetParams<T>) -> Result<Self, NnError> {
        let shapes = spec.shapes()?;
        if !params.same_shape(&NetParams::zeros_for(&spec)) {
            return Err(NnError::Shape("parameters do not match spec".into()));
        }
        Ok(Self {
            spec,
            shapes,
            params,
            id: NEXT_NET_ID.fetch_add(1, Ordering::Relaxed),
            generation: 0,
        })
    }

    pub fn spec(&self) -> &NetSpec {
        &self.spec
    }

    pub fn params(&self) -> &NetParams<T> {
        &self.params
    }

    /// Mutable access invalidates outstanding caches.
    pub fn params_mut(&mut self) -> &mut NetParams<T> {
        self.generation += 1;
        &mut self.params
    }

    pub fn output_len(&self) -> usize {
        self.shapes.last().unwrap().iter().product()
    }

    pub fn hidden_len(&self) -> Option<usize> {
        self.spec.gru_hidden()
    }

    /// Multiplies the weights of layer `layer` by `k` (e.g. small policy heads).
    pub fn scale_layer_weights(&mut self, layer: usize, k: f64) {
        let k = T::of(k);
        self.generation += 1;
        for t in self.params.layers[layer].iter_mut().take(1) {
            t.data_mut().iter_mut().for_each(|x| *x *= k);
        }
    }

    /// Batched forward pass. `input` is `[N, ...input_shape]` (or `[N, flat]`);
    /// `hidden` is `[N, H]` and required exactly when the network has a GRU.
    pub fn forward(
        &self,
        input: &Tensor<T>,
        hidden: Option<&Tensor<T>>,
    ) -> Result<Forward<T>, NnError> {
        let rows = input.rows();
        if input.row_len() != self.spec.input_len() {
            return Err(NnError::Shape(format!(
                "input rows hold {} values, spec wants {:?}",
                input.row_len(),
                self.spec.input_shape
            )));
        }
        let gru = self.spec.gru_hidden();
        match (gru, hidden) {
            (Some(h), Some(t)) if t.rows() == rows && t.row_len() == h => {}
            (None, None) => {}
            (Some(h), Some(t)) => {
                return Err(NnError::Shape(format!(
                    "hidden {:?} does not match [{rows}, {h}]",
                    t.shape()
                )))
            }
            (Some(_), None) => {
                return Err(NnError::Shape("GRU network needs a hidden state".into()))
            }
            (None, Some(_)) => {
                return Err(NnError::Shape(
                    "hidden given to a network without GRU".into(),
                ))
            }
        }

        let mut x = input.data().to_vec();
        let mut in_shape = self.spec.input_shape.clone();
        let mut caches = Vec::with_capacity(self.spec.layers.len());
        let mut new_hidden = None;
        for (i, layer) in self.spec.layers.iter().enumerate() {
            let p = &self.params.layers[i];
            let (y, c) = match *layer {
                LayerSpec::Dense { activation, .. } => dense_forward(p, activation, x, rows),
                LayerSpec::Conv {
                    kernel,
                    stride,
                    activation,
                    ..
                } => {
                    let s = [in_shape[0], in_shape[1], in_shape[2]];
                    conv_forward(p, activation, kernel, stride, s, &x, rows)
                }
                LayerSpec::Gru { .. } => {
                    let h = hidden.unwrap().data().to_vec();
                    let (y, c) = gru_forward(p, x, h, rows);
                    new_hidden = Some(Tensor::new(vec![rows, y.len() / rows], y.clone())?);
                    (y, c)
                }
            };
            caches.push(c);
            x = y;
            in_shape = self.shapes[i].clone();
        }
        let out_len = self.output_len();
        Ok(Forward {
            output: Tensor::new(vec![rows, out_len], x)?,
            hidden: new_hidden,
            cache: Cache {
                net_id: self.id,
                generation: self.generation,
                rows,
                layers: caches,
            },
        })
    }

    /// Gradients of a scalar loss given `dL/doutput` (and optionally
    /// `dL/dnew_hidden` for recurrent nets). Includes the input gradient.
    pub fn backward(
        &self,
        cache: &Cache<T>,
        output_grad: &Tensor<T>,
        hidden_grad: Option<&Tensor<T>>,
    ) -> Result<Gradients<T>, NnError> {
        self.backward_impl(cache, output_grad, hidden_grad, true)
    }

    /// Like [`Net::backward`] but skips the (unused) input gradient.
    pub fn backward_params(
        &self,
        cache: &Cache<T>,
        output_grad: &Tensor<T>,
        hidden_grad: Option<&Tensor<T>>,
    ) -> Result<Gradients<T>, NnError> {
        self.backward_impl(cache, output_grad, hidden_grad, false)
    }

    fn backward_impl(
        &self,
        cache: &Cache<T>,
        output_grad: &Tensor<T>,
        hidden_grad: Option<&Tensor<T>>,
        want_input: bool,
    ) -> Result<Gradients<T>, NnError> {
        if cache.net_id != self.id || cache.generation != self.generation {
            return Err(NnError::StaleCache(
                "cache comes from another network or from parameters since updated".into(),
            ));
        }
        let rows = cache.rows;
        if output_grad.rows() != rows || output_grad.row_len() != self.output_len() {
            return Err(NnError::Shape(format!(
                "output grad {:?} does not match [{rows}, {}]",
                output_grad.shape(),
                self.output_len()
            )));
        }
        if let Some(h) = hidden_grad {
            match self.spec.gru_hidden() {
                Some(hs) if h.rows() == rows && h.row_len() == hs => {}
                _ => {
                    return Err(NnError::Shape(
                        "hidden grad does not match the GRU state".into(),
                    ))
                }
            }
        }
        let mut grads = NetParams::zeros_for(&self.spec);
        let mut g = output_grad.data().to_vec();
        let mut hidden_in_grad = None;
        let mut input_grad = None;
        for i in (0..self.spec.layers.len()).rev() {
            let p = &self.params.layers[i];
            let want = want_input || i > 0;
            let next = match self.spec.layers[i] {
                LayerSpec::Dense { activation, .. } => dense_backward(
                    p,
                    activation,
                    &cache.layers[i],
                    g,
                    rows,
                    &mut grads.layers[i],
                    want,
                ),
                LayerSpec::Conv {
                    kernel,
                    stride,
                    activation,
                    ..
                } => conv_backward(
                    p,
                    activation,
                    kernel,
                    stride,
                    &cache.layers[i],
                    g,
                    rows,
                    &mut grads.layers[i],
                    want,
                ),
                LayerSpec::Gru { .. } => {
                    if let Some(h) = hidden_grad {
                        for (a, &b) in g.iter_mut().zip(h.data()) {
                            *a += b;
                        }
                    }
                    let (dx, dh) =
                        gru_backward(p, &cache.layers[i], &g, rows, &mut grads.layers[i], want);
                    hidden_in_grad = Some(Tensor::new(vec![rows, dh.len() / rows], dh)?);
                    dx
                }
            };
            match next {
                Some(dx) if i > 0 => g = dx,
                Some(dx) => {
                    let mut shape = vec![rows];
                    shape.extend_from_slice(&self.spec.input_shape);
                    input_grad = Some(Tensor::new(shape, dx)?);
                    g = Vec::new();
                }
                None => g = Vec::new(),
            }
        }
        Ok(Gradients {
            params: grads,
            input: input_grad,
            hidden: hidden_in_grad,
        })
    }

    /// One Adam update; non-finite gradients leave parameters untouched.
    pub fn apply_adam(
        &mut self,
        grads: &NetParams<T>,
        state: &mut AdamState<T>,
        cfg: &AdamConfig,
    ) -> Result<(), NnError> {
        adam_step(&mut self.params, grads, state, cfg)?;
        self.generation += 1;
        Ok(())
    }

    pub fn new_adam_state(&self) -> AdamState<T> {
        AdamState::new(&self.params)
    }
}

fn init_block<T: Real>(
    init: Init,
    shape: &[usize],
    gain: f64,
    seed: u64,
) -> Result<Tensor<T>, NnError> {
    match init {
        Init::Orthogonal => orthogonal_init(shape, gain, seed),
        Init::Uniform => uniform_init(shape, seed),
    }
}
