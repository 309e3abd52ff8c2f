//! Per-agent recurrent actors and the centralised critic.

use rand::Rng;

use crate::env::Action;
use crate::nn::{
    Activation, AdamConfig, AdamState, Cache, LayerSpec, Net, NetParams, NetSpec, NnError, Tensor,
};
use crate::novelty::{conv_encoder_layers, ModelDims};

pub const NUM_ACTIONS: usize = Action::COUNT;

/// Convolutional encoder, GRU and a linear action head. Consumes one agent's
/// own observation and hidden state only.
#[derive(Debug, Clone)]
pub struct Actor {
    pub net: Net<f32>,
    pub(crate) opt: AdamState<f32>,
}

impl Actor {
    pub fn new(view_size: usize, dims: &ModelDims, seed: u64) -> Result<Self, NnError> {
        let mut spec = conv_encoder_layers(view_size, dims, dims.embed, Activation::Relu);
        spec.layers.push(LayerSpec::Gru {
            inputs: dims.embed,
            hidden: dims.hidden,
        });
        spec.layers.push(LayerSpec::Dense {
            inputs: dims.hidden,
            outputs: NUM_ACTIONS,
            activation: Activation::Linear,
        });
        let mut net = Net::new(spec, seed)?;
        // Near-uniform initial policy.
        let head = net.spec().layers.len() - 1;
        net.scale_layer_weights(head, 0.01);
        let opt = net.new_adam_state();
        Ok(Self { net, opt })
    }

    pub fn hidden_len(&self) -> usize {
        self.net.hidden_len().unwrap()
    }

    /// Logits `[N, 7]` and next hidden `[N, H]` for a batch of observations.
    pub fn act(
        &self,
        obs: &Tensor<f32>,
        hidden: &Tensor<f32>,
    ) -> Result<(Tensor<f32>, Tensor<f32>), NnError> {
        let f = self.net.forward(obs, Some(hidden))?;
        Ok((f.output, f.hidden.unwrap()))
    }

    pub fn apply(&mut self, grads: &NetParams<f32>, cfg: &AdamConfig) -> Result<(), NnError> {
        self.net.apply_adam(grads, &mut self.opt, cfg)
    }
}

/// Log-softmax of one row of logits.
pub fn log_softmax(logits: &[f32]) -> Vec<f32> {
    let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let lse = logits.iter().map(|&z| (z - max).exp()).sum::<f32>().ln() + max;
    logits.iter().map(|&z| z - lse).collect()
}

/// Samples an action index from logits; returns `(action, log_prob)`.
pub fn sample_action<R: Rng + ?Sized>(logits: &[f32], rng: &mut R) -> (usize, f32) {
    let lp = log_softmax(logits);
    let u: f32 = rng.random();
    let mut acc = 0.0;
    for (i, &l) in lp.iter().enumerate() {
        acc += l.exp();
        if u < acc {
            return (i, l);
        }
    }
    // Rounding left `u` above the cumulative sum; take the last action.
    let last = lp.len() - 1;
    (last, lp[last])
}

/// Value function over the whole team: a shared encoder embeds every
/// agent's observation, and the head sees all embeddings plus a one-hot id.
#[derive(Debug, Clone)]
pub struct Critic {
    pub encoder: Net<f32>,
    pub head: Net<f32>,
    pub num_agents: usize,
    pub(crate) opt: [AdamState<f32>; 2],
}

pub(crate) struct CriticForward {
    pub values: Vec<f32>,
    enc_cache: Cache<f32>,
    head_cache: Cache<f32>,
}

impl Critic {
    pub fn new(
        view_size: usize,
        dims: &ModelDims,
        num_agents: usize,
        width: usize,
        seed: u64,
    ) -> Result<Self, NnError> {
        let encoder = Net::new(
            conv_encoder_layers(view_size, dims, dims.embed, Activation::Relu),
            seed,
        )?;
        let inputs = num_agents * dims.embed + num_agents;
        let head = Net::new(
            NetSpec::new(
                vec![inputs],
                vec![
                    LayerSpec::Dense {
                        inputs,
                        outputs: width,
                        activation: Activation::Tanh,
                    },
                    LayerSpec::Dense {
                        inputs: width,
                        outputs: 1,
                        activation: Activation::Linear,
                    },
                ],
            ),
            seed.wrapping_add(1),
        )?;
        let opt = [encoder.new_adam_state(), head.new_adam_state()];
        Ok(Self {
            encoder,
            head,
            num_agents,
            opt,
        })
    }

    /// Normalised values for `M` joint observations laid out `[M * K, F]`
    /// (agent-minor). Output is agent-minor as well.
    pub fn values(&self, joint_obs: &Tensor<f32>) -> Result<Vec<f32>, NnError> {
        Ok(self.forward(joint_obs)?.values)
    }

    pub(crate) fn forward(&self, joint_obs: &Tensor<f32>) -> Result<CriticForward, NnError> {
        let k = self.num_agents;
        let fe = self.encoder.forward(joint_obs, None)?;
        let m = joint_obs.rows() / k;
        let d = fe.output.row_len();
        let width = k * d + k;
        let mut x = vec![0.0f32; m * k * width];
        for s in 0..m {
            let team = &fe.output.data()[s * k * d..(s + 1) * k * d];
            for a in 0..k {
                let row = &mut x[(s * k + a) * width..(s * k + a + 1) * width];
                row[..k * d].copy_from_slice(team);
                row[k * d + a] = 1.0;
            }
        }
        let fh = self
            .head
            .forward(&Tensor::new(vec![m * k, width], x)?, None)?;
        Ok(CriticForward {
            values: fh.output.into_data(),
            enc_cache: fe.cache,
            head_cache: fh.cache,
        })
    }

    /// Parameter gradients of `sum_i dv[i] * value_i`.
    pub(crate) fn backward(
        &self,
        f: &CriticForward,
        dv: Vec<f32>,
    ) -> Result<[NetParams<f32>; 2], NnError> {
        let k = self.num_agents;
        let n = dv.len();
        let gh = self
            .head
            .backward(&f.head_cache, &Tensor::new(vec![n, 1], dv)?, None)?;
        let dx = gh.input.unwrap();
        let width = dx.row_len();
        let d = (width - k) / k;
        let m = n / k;
        let mut denc = vec![0.0f32; n * d];
        for s in 0..m {
            let team = &mut denc[s * k * d..(s + 1) * k * d];
            for a in 0..k {
                for (t, &g) in team.iter_mut().zip(&dx.row(s * k + a)[..k * d]) {
                    *t += g;
                }
            }
        }
        let ge =
            self.encoder
                .backward_params(&f.enc_cache, &Tensor::new(vec![n, d], denc)?, None)?;
        Ok([ge.params, gh.params])
    }

    pub fn apply(&mut self, grads: &[NetParams<f32>; 2], cfg: &AdamConfig) -> Result<(), NnError> {
        let [o0, o1] = &mut self.opt;
        self.encoder.apply_adam(&grads[0], o0, cfg)?;
        self.head.apply_adam(&grads[1], o1, cfg)
    }
}

/// All actors plus the critic. With `shared` a single actor serves every agent.
#[derive(Debug, Clone)]
pub struct PolicySet {
    pub actors: Vec<Actor>,
    pub critic: Critic,
    pub num_agents: usize,
    pub shared: bool,
}

impl PolicySet {
    pub fn actor(&self, agent: usize) -> &Actor {
        &self.actors[self.actor_index(agent)]
    }

    pub fn actor_index(&self, agent: usize) -> usize {
        if self.shared {
            0
        } else {
            agent
        }
    }
}
