//! Embedding and novelty models.
//!
//! [`DiscriminatorModel`] learns whether two frames are consecutive; its CNN
//! encoder yields the observation embedding `e_obs` and its GRU the
//! trajectory embedding `e_trj`. [`RndPair`] scores novelty of `e_trj` as the
//! distance between a frozen random network and a trained predictor.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{Observation, OBS_CHANNELS};
use crate::nn::{
    Activation, AdamConfig, AdamState, LayerSpec, Net, NetParams, NetSpec, NnError, Tensor,
};
use crate::rewards::EmbeddingPair;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NoveltyError {
    #[error("discriminator batch holds a single class; need positives and negatives")]
    SingleClass,
    #[error("empty batch")]
    EmptyBatch,
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Layer widths shared by the observation encoders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub conv1: usize,
    pub conv2: usize,
    /// Observation embedding size.
    pub embed: usize,
    /// GRU state size (trajectory embedding size).
    pub hidden: usize,
    pub head_hidden: usize,
    /// RND output size.
    pub rnd_out: usize,
    pub rnd_hidden: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        Self {
            conv1: 8,
            conv2: 16,
            embed: 32,
            hidden: 32,
            head_hidden: 32,
            rnd_out: 32,
            rnd_hidden: 64,
        }
    }
}

/// Input features of one observation: the view scaled to `[0, 1]`, HWC.
pub fn obs_features(obs: &Observation, out: &mut [f32]) {
    obs.write_features(out);
}

pub fn feature_len(view_size: usize) -> usize {
    view_size * view_size * OBS_CHANNELS
}

/// Two 3x3 convolutions and a dense projection. The final activation is
/// caller-chosen so the same stack serves embeddings and policies.
pub fn conv_encoder_layers(
    view_size: usize,
    dims: &ModelDims,
    out: usize,
    act: Activation,
) -> NetSpec {
    let after = view_size.saturating_sub(4).max(1);
    NetSpec::new(
        vec![view_size, view_size, OBS_CHANNELS],
        vec![
            LayerSpec::Conv {
                in_channels: OBS_CHANNELS,
                out_channels: dims.conv1,
                kernel: 3,
                stride: 1,
                activation: Activation::Relu,
            },
            LayerSpec::Conv {
                in_channels: dims.conv1,
                out_channels: dims.conv2,
                kernel: 3,
                stride: 1,
                activation: Activation::Relu,
            },
            LayerSpec::Dense {
                inputs: after * after * dims.conv2,
                outputs: out,
                activation: act,
            },
        ],
    )
}

fn to_f64(xs: &[f32]) -> Vec<f64> {
    xs.iter().map(|&x| f64::from(x)).collect()
}

/// Batched embeddings for `N` agents/steps.
#[derive(Debug, Clone)]
pub struct EncodedBatch {
    pub e_obs: Tensor<f32>,
    /// Trajectory embeddings; also the new GRU hidden states.
    pub e_trj: Tensor<f32>,
}

impl EncodedBatch {
    pub fn pair(&self, i: usize) -> EmbeddingPair {
        EmbeddingPair {
            e_obs: to_f64(self.e_obs.row(i)),
            e_trj: to_f64(self.e_trj.row(i)),
        }
    }
}

/// Positive/negative frame pairs for one discriminator update.
#[derive(Debug, Clone)]
pub struct DiscBatch {
    /// First frames `o_t`, `[N, features]`.
    pub obs_a: Tensor<f32>,
    /// Second frames, `o_{t+1}` for positives.
    pub obs_b: Tensor<f32>,
    /// GRU hidden before encoding `o_t`, `[N, hidden]`.
    pub hidden: Tensor<f32>,
    /// 1 for consecutive pairs, 0 otherwise.
    pub labels: Vec<f32>,
}

#[derive(Debug, Clone)]
pub struct DiscriminatorModel {
    pub obs_encoder: Net<f32>,
    pub trj_encoder: Net<f32>,
    pub head: Net<f32>,
    opt: [AdamState<f32>; 3],
    pub adam: AdamConfig,
    pub max_grad_norm: f64,
}

impl DiscriminatorModel {
    pub fn new(view_size: usize, dims: &ModelDims, seed: u64) -> Result<Self, NnError> {
        let obs_encoder = Net::new(
            conv_encoder_layers(view_size, dims, dims.embed, Activation::Tanh),
            seed,
        )?;
        let trj_encoder = Net::new(
            NetSpec::new(
                vec![dims.embed],
                vec![LayerSpec::Gru {
                    inputs: dims.embed,
                    hidden: dims.hidden,
                }],
            ),
            seed.wrapping_add(1),
        )?;
        let head = Net::new(
            NetSpec::new(
                vec![2 * dims.embed + dims.hidden],
                vec![
                    LayerSpec::Dense {
                        inputs: 2 * dims.embed + dims.hidden,
                        outputs: dims.head_hidden,
                        activation: Activation::Relu,
                    },
                    LayerSpec::Dense {
                        inputs: dims.head_hidden,
                        outputs: 1,
                        activation: Activation::Linear,
                    },
                ],
            ),
            seed.wrapping_add(2),
        )?;
        let opt = [
            obs_encoder.new_adam_state(),
            trj_encoder.new_adam_state(),
            head.new_adam_state(),
        ];
        Ok(Self {
            obs_encoder,
            trj_encoder,
            head,
            opt,
            adam: AdamConfig::default(),
            max_grad_norm: 0.5,
        })
    }

    pub fn hidden_len(&self) -> usize {
        self.trj_encoder.hidden_len().unwrap()
    }

    pub fn feature_len(&self) -> usize {
        self.obs_encoder.spec().input_len()
    }

    /// Embeds a batch of observations given each row's GRU state.
    pub fn encode_batch(
        &self,
        obs: &Tensor<f32>,
        hidden: &Tensor<f32>,
    ) -> Result<EncodedBatch, NnError> {
        let e_obs = self.obs_encoder.forward(obs, None)?.output;
        let e_trj = self.trj_encoder.forward(&e_obs, Some(hidden))?.output;
        Ok(EncodedBatch { e_obs, e_trj })
    }

    /// Single-observation convenience wrapper around [`Self::encode_batch`].
    pub fn encode(
        &self,
        obs: &Observation,
        hidden: &[f32],
    ) -> Result<(EmbeddingPair, Vec<f32>), NnError> {
        let mut x = vec![0.0; self.feature_len()];
        obs_features(obs, &mut x);
        let x = Tensor::new(vec![1, x.len()], x)?;
        let h = Tensor::new(vec![1, hidden.len()], hidden.to_vec())?;
        let enc = self.encode_batch(&x, &h)?;
        Ok((enc.pair(0), enc.e_trj.into_data()))
    }

    /// Logits and all caches for a batch.
    fn logits(&self, b: &DiscBatch) -> Result<DiscForward, NnError> {
        let fa = self.obs_encoder.forward(&b.obs_a, None)?;
        let fb = self.obs_encoder.forward(&b.obs_b, None)?;
        let ft = self.trj_encoder.forward(&fa.output, Some(&b.hidden))?;
        let n = b.labels.len();
        let (eo, et) = (fa.output.row_len(), ft.output.row_len());
        let mut joint = Vec::with_capacity(n * (2 * eo + et));
        for i in 0..n {
            joint.extend_from_slice(fa.output.row(i));
            joint.extend_from_slice(fb.output.row(i));
            joint.extend_from_slice(ft.output.row(i));
        }
        let joint = Tensor::new(vec![n, 2 * eo + et], joint)?;
        let fh = self.head.forward(&joint, None)?;
        Ok(DiscForward { fa, fb, ft, fh })
    }

    /// Probability that each pair is consecutive.
    pub fn predict(&self, b: &DiscBatch) -> Result<Vec<f32>, NnError> {
        Ok(self
            .logits(b)?
            .fh
            .output
            .data()
            .iter()
            .map(|&z| sigmoid(z))
            .collect())
    }

    /// Mean binary cross-entropy without updating.
    pub fn loss(&self, b: &DiscBatch) -> Result<f64, NnError> {
        let f = self.logits(b)?;
        Ok(bce(f.fh.output.data(), &b.labels))
    }

    /// One gradient step on binary cross-entropy; returns the pre-step loss.
    /// Gradients reach the CNN through both frames and through the GRU
    /// (truncated to one step from the stored hidden state).
    pub fn train_step(&mut self, b: &DiscBatch) -> Result<f64, NoveltyError> {
        let n = b.labels.len();
        if n == 0 {
            return Err(NoveltyError::EmptyBatch);
        }
        let pos = b.labels.iter().filter(|&&y| y > 0.5).count();
        if pos == 0 || pos == n {
            return Err(NoveltyError::SingleClass);
        }
        let f = self.logits(b)?;
        let z = f.fh.output.data();
        let loss = bce(z, &b.labels);
        let dz: Vec<f32> = z
            .iter()
            .zip(&b.labels)
            .map(|(&z, &y)| (sigmoid(z) - y) / n as f32)
            .collect();
        let gh = self
            .head
            .backward(&f.fh.cache, &Tensor::new(vec![n, 1], dz)?, None)?;
        let dj = gh.input.unwrap();
        let (eo, et) = (f.fa.output.row_len(), f.ft.output.row_len());
        let mut d_a = Vec::with_capacity(n * eo);
        let mut d_b = Vec::with_capacity(n * eo);
        let mut d_t = Vec::with_capacity(n * et);
        for i in 0..n {
            let r = dj.row(i);
            d_a.extend_from_slice(&r[..eo]);
            d_b.extend_from_slice(&r[eo..2 * eo]);
            d_t.extend_from_slice(&r[2 * eo..]);
        }
        let gt = self
            .trj_encoder
            .backward(&f.ft.cache, &Tensor::new(vec![n, et], d_t)?, None)?;
        for (a, g) in d_a.iter_mut().zip(gt.input.unwrap().data()) {
            *a += *g;
        }
        let mut g_obs = self
            .obs_encoder
            .backward_params(&f.fa.cache, &Tensor::new(vec![n, eo], d_a)?, None)?
            .params;
        g_obs.add_assign(
            &self
                .obs_encoder
                .backward_params(&f.fb.cache, &Tensor::new(vec![n, eo], d_b)?, None)?
                .params,
        );
        let mut grads = [g_obs, gt.params, gh.params];
        clip_joint(&mut grads, self.max_grad_norm);
        // Reject before touching any of the three nets so they stay in sync.
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(NnError::NonFinite {
                layer: i,
                tensor: 0,
            }
            .into());
        }
        let [g0, g1, g2] = &grads;
        let [o0, o1, o2] = &mut self.opt;
        self.obs_encoder.apply_adam(g0, o0, &self.adam)?;
        self.trj_encoder.apply_adam(g1, o1, &self.adam)?;
        self.head.apply_adam(g2, o2, &self.adam)?;
        Ok(loss)
    }

    pub fn fingerprint(&self) -> u64 {
        let mut h = self.obs_encoder.params().fingerprint();
        h = h.rotate_left(17) ^ self.trj_encoder.params().fingerprint();
        h.rotate_left(17) ^ self.head.params().fingerprint()
    }
}

struct DiscForward {
    fa: crate::nn::Forward<f32>,
    fb: crate::nn::Forward<f32>,
    ft: crate::nn::Forward<f32>,
    fh: crate::nn::Forward<f32>,
}

fn sigmoid(z: f32) -> f32 {
    1.0 / (1.0 + (-z).exp())
}

/// Numerically stable mean BCE on logits.
fn bce(logits: &[f32], labels: &[f32]) -> f64 {
    let sum: f64 = logits
        .iter()
        .zip(labels)
        .map(|(&z, &y)| {
            let z = f64::from(z);
            z.max(0.0) - z * f64::from(y) + (-z.abs()).exp().ln_1p()
        })
        .sum();
    sum / logits.len() as f64
}

/// Clips several parameter groups by their joint global norm.
pub(crate) fn clip_joint(grads: &mut [NetParams<f32>], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .map(|g| g.global_norm().powi(2))
        .sum::<f64>()
        .sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let k = (max_norm / norm) as f32;
        grads.iter_mut().for_each(|g| g.scale(k));
    }
    norm
}

/// Frozen random target and trainable predictor over trajectory embeddings.
#[derive(Debug, Clone)]
pub struct RndPair {
    fixed: Net<f32>,
    pub train: Net<f32>,
    opt: AdamState<f32>,
    pub adam: AdamConfig,
}

impl RndPair {
    pub fn new(dims: &ModelDims, seed: u64) -> Result<Self, NnError> {
        let spec = Self::spec(dims);
        let fixed = Net::new(spec.clone(), seed)?;
        let train = Net::new(spec, seed.wrapping_add(0x9e37_79b9))?;
        let opt = train.new_adam_state();
        Ok(Self {
            fixed,
            train,
            opt,
            adam: AdamConfig::default(),
        })
    }

    pub fn spec(dims: &ModelDims) -> NetSpec {
        NetSpec::new(
            vec![dims.hidden],
            vec![
                LayerSpec::Dense {
                    inputs: dims.hidden,
                    outputs: dims.rnd_hidden,
                    activation: Activation::Relu,
                },
                LayerSpec::Dense {
                    inputs: dims.rnd_hidden,
                    outputs: dims.rnd_out,
                    activation: Activation::Linear,
                },
            ],
        )
    }

    /// Builds a pair from explicit target parameters (tests, checkpoints).
    pub fn with_fixed(fixed: Net<f32>, train: Net<f32>) -> Self {
        let opt = train.new_adam_state();
        Self {
            fixed,
            train,
            opt,
            adam: AdamConfig::default(),
        }
    }

    pub fn fixed(&self) -> &Net<f32> {
        &self.fixed
    }

    /// `||phi_fixed(x) - phi_train(x)||` for every row of `e_trj`.
    pub fn novelty_batch(&self, e_trj: &Tensor<f32>) -> Result<Vec<f64>, NnError> {
        let a = self.fixed.forward(e_trj, None)?.output;
        let b = self.train.forward(e_trj, None)?.output;
        Ok((0..a.rows())
            .map(|i| {
                a.row(i)
                    .iter()
                    .zip(b.row(i))
                    .map(|(&x, &y)| f64::from(x - y).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect())
    }

    pub fn novelty(&self, e_trj: &[f64]) -> Result<f64, NnError> {
        let x = Tensor::new(
            vec![1, e_trj.len()],
            e_trj.iter().map(|&v| v as f32).collect(),
        )?;
        Ok(self.novelty_batch(&x)?[0])
    }

    /// One Adam step on the mean squared prediction error; returns the
    /// pre-step loss. The target network is never touched.
    pub fn train_step(&mut self, batch: &Tensor<f32>) -> Result<f64, NoveltyError> {
        if batch.is_empty() {
            return Err(NoveltyError::EmptyBatch);
        }
        let target = self.fixed.forward(batch, None)?.output;
        let f = self.train.forward(batch, None)?;
        let n = f.output.len() as f32;
        let mut loss = 0.0f64;
        let grad: Vec<f32> = f
            .output
            .data()
            .iter()
            .zip(target.data())
            .map(|(&p, &t)| {
                loss += f64::from(p - t).powi(2);
                2.0 * (p - t) / n
            })
            .collect();
        let g = self.train.backward_params(
            &f.cache,
            &Tensor::new(f.output.shape().to_vec(), grad)?,
            None,
        )?;
        self.train
            .apply_adam(&g.params, &mut self.opt, &self.adam)?;
        Ok(loss / f64::from(n))
    }
}

/// Per-agent embeddings of the current episode, indexed by step.
#[derive(Debug, Clone, Default)]
pub struct EpisodicMemory {
    entries: Vec<EmbeddingPair>,
}

impl EpisodicMemory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, pair: EmbeddingPair) {
        self.entries.push(pair);
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn as_slice(&self) -> &[EmbeddingPair] {
        &self.entries
    }
}
