//! Central finite-difference oracle for `Net` gradients, including BPTT over
//! a sequence of GRU steps.

use mirlab::nn::{Activation, LayerSpec, Net, NetParams, NetSpec, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Problem {
    pub net: Net<f64>,
    /// `steps` inputs of shape `[rows, input_len]`.
    pub inputs: Vec<Tensor<f64>>,
    pub h0: Option<Tensor<f64>>,
    /// Per-step output weights; loss = sum_t <w_t, y_t> + <w_h, h_L>.
    pub out_weights: Vec<Vec<f64>>,
    pub hidden_weight: Option<Vec<f64>>,
}

impl Problem {
    pub fn loss(&self, net: &Net<f64>, inputs: &[Tensor<f64>], h0: Option<&Tensor<f64>>) -> f64 {
        let mut h = h0.cloned();
        let mut total = 0.0;
        for (x, w) in inputs.iter().zip(&self.out_weights) {
            let f = net.forward(x, h.as_ref()).unwrap();
            total += f
                .output
                .data()
                .iter()
                .zip(w)
                .map(|(a, b)| a * b)
                .sum::<f64>();
            h = f.hidden;
        }
        if let (Some(h), Some(w)) = (h, &self.hidden_weight) {
            total += h.data().iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
        }
        total
    }

    /// Analytic gradients: (params, per-step input grads, initial hidden grad).
    pub fn analytic(&self) -> (NetParams<f64>, Vec<Tensor<f64>>, Option<Tensor<f64>>) {
        let mut h = self.h0.clone();
        let mut caches = Vec::new();
        let mut out_shape = Vec::new();
        for x in &self.inputs {
            let f = self.net.forward(x, h.as_ref()).unwrap();
            out_shape = f.output.shape().to_vec();
            caches.push(f.cache);
            h = f.hidden;
        }
        let mut total = self.net.params().zeros_like();
        let mut dh = self
            .hidden_weight
            .as_ref()
            .map(|w| Tensor::new(h.as_ref().unwrap().shape().to_vec(), w.clone()).unwrap());
        let mut input_grads = vec![Tensor::zeros(vec![1]); self.inputs.len()];
        for t in (0..self.inputs.len()).rev() {
            let og = Tensor::new(out_shape.clone(), self.out_weights[t].clone()).unwrap();
            let g = self.net.backward(&caches[t], &og, dh.as_ref()).unwrap();
            total.add_assign(&g.params);
            input_grads[t] = g.input.unwrap();
            dh = g.hidden;
        }
        (total, input_grads, dh)
    }
}

pub fn random_problem(seed: u64, steps: usize) -> Problem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let acts = [
        Activation::Tanh,
        Activation::Sigmoid,
        Activation::Linear,
        Activation::Relu,
    ];
    let act = |rng: &mut ChaCha8Rng| acts[rng.random_range(0..acts.len())];
    let mut layers = Vec::new();
    let use_conv = rng.random_bool(0.6);
    let input_shape;
    let mut flat;
    if use_conv {
        let (h, w, c) = (
            rng.random_range(3..=5),
            rng.random_range(3..=5),
            rng.random_range(1..=3),
        );
        input_shape = vec![h, w, c];
        let k = rng.random_range(1..=h.min(w).min(3));
        let stride = rng.random_range(1..=2);
        let out = rng.random_range(1..=4);
        layers.push(LayerSpec::Conv {
            in_channels: c,
            out_channels: out,
            kernel: k,
            stride,
            activation: act(&mut rng),
        });
        flat = ((h - k) / stride + 1) * ((w - k) / stride + 1) * out;
    } else {
        flat = rng.random_range(2..=8);
        input_shape = vec![flat];
    }
    if rng.random_bool(0.5) {
        let o = rng.random_range(2..=8);
        layers.push(LayerSpec::Dense {
            inputs: flat,
            outputs: o,
            activation: act(&mut rng),
        });
        flat = o;
    }
    let recurrent = steps > 1 || rng.random_bool(0.5);
    if recurrent {
        let hs = rng.random_range(2..=6);
        layers.push(LayerSpec::Gru {
            inputs: flat,
            hidden: hs,
        });
        flat = hs;
    }
    let o = rng.random_range(1..=4);
    layers.push(LayerSpec::Dense {
        inputs: flat,
        outputs: o,
        activation: act(&mut rng),
    });
    let spec = NetSpec::new(input_shape, layers);
    let mut net: Net<f64> = Net::new(spec, rng.random()).unwrap();
    // Random biases so every bias gradient path is exercised.
    for t in net.params_mut().tensors_mut() {
        if t.shape().len() == 1 {
            t.data_mut()
                .iter_mut()
                .for_each(|b| *b = rng.random_range(-0.5..0.5));
        }
    }
    let rows = rng.random_range(1..=3);
    let in_len = net.spec().input_len();
    let inputs = (0..steps)
        .map(|_| Tensor::from_fn(vec![rows, in_len], |_| rng.random_range(-1.0..1.0)))
        .collect();
    let out_len = net.output_len();
    let out_weights = (0..steps)
        .map(|_| {
            (0..rows * out_len)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect()
        })
        .collect();
    let (h0, hidden_weight) = match net.hidden_len() {
        Some(h) => (
            Some(Tensor::from_fn(vec![rows, h], |_| {
                rng.random_range(-0.5..0.5)
            })),
            Some((0..rows * h).map(|_| rng.random_range(-1.0..1.0)).collect()),
        ),
        None => (None, None),
    };
    Problem {
        net,
        inputs,
        h0,
        out_weights,
        hidden_weight,
    }
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Largest relative error between analytic and finite-difference gradients
/// over every parameter, every input element and the initial hidden state.
pub fn max_relative_error(p: &Problem, h: f64) -> f64 {
    let (grads, in_grads, h_grad) = p.analytic();
    let mut worst: f64 = 0.0;
    let analytic = grads.flatten();
    let mut idx = 0;
    let n_tensors = p.net.params().tensors().count();
    for ti in 0..n_tensors {
        let len = p.net.params().tensors().nth(ti).unwrap().len();
        for k in 0..len {
            let eval = |delta: f64| {
                let mut net = p.net.clone();
                net.params_mut().tensors_mut().nth(ti).unwrap().data_mut()[k] += delta;
                p.loss(&net, &p.inputs, p.h0.as_ref())
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            worst = worst.max(rel_err(analytic[idx], fd));
            idx += 1;
        }
    }
    for (t, g) in in_grads.iter().enumerate() {
        for k in 0..g.len() {
            let eval = |delta: f64| {
                let mut xs = p.inputs.clone();
                xs[t].data_mut()[k] += delta;
                p.loss(&p.net, &xs, p.h0.as_ref())
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            worst = worst.max(rel_err(g.data()[k], fd));
        }
    }
    if let (Some(h0), Some(g)) = (&p.h0, &h_grad) {
        for k in 0..h0.len() {
            let eval = |delta: f64| {
                let mut hh = h0.clone();
                hh.data_mut()[k] += delta;
                p.loss(&p.net, &p.inputs, Some(&hh))
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            worst = worst.max(rel_err(g.data()[k], fd));
        }
    }
    worst
}
