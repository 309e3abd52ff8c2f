//! MAPPO under centralised training with decentralised execution.
//!
//! Each agent owns a recurrent actor that sees only its own observation; a
//! centralised critic scores the joint observation. Rewards fed to PPO are
//! the composed per-agent totals from [`crate::rewards`].

mod policy;
mod ppo;
mod rollout;

pub use policy::{log_softmax, sample_action, Actor, Critic, PolicySet, NUM_ACTIONS};
pub use ppo::{compute_gae, standardize, surrogate, SurrogateTerms, ValueNorm};
pub use rollout::{EnvSlot, EpisodeRecord, RolloutBatch};

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{Action, EnvConfig, EnvError};
use crate::nn::{clip_global_norm, AdamConfig, Checkpoint, NetParams, NnError, Tensor};
use crate::novelty::{
    feature_len, DiscBatch, DiscriminatorModel, ModelDims, NoveltyError, RndPair,
};
use crate::rewards::{
    deir_intrinsic, deir_mutual, noveld_intrinsic, noveld_mutual, team_breakdown, EmbeddingPair,
    MomentumNormalizer, RewardBreakdown, RewardConfig, TeammateStep,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Novelty(#[from] NoveltyError),
    #[error("invalid training configuration: {0}")]
    Config(String),
}

/// Exploration bonus family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    NoModel,
    Rnd,
    Noveld,
    NoveldMir,
    Deir,
    DeirMir,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::NoModel,
        Method::Rnd,
        Method::Noveld,
        Method::NoveldMir,
        Method::Deir,
        Method::DeirMir,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::NoModel => "no_model",
            Method::Rnd => "rnd",
            Method::Noveld => "noveld",
            Method::NoveldMir => "noveld_mir",
            Method::Deir => "deir",
            Method::DeirMir => "deir_mir",
        }
    }

    /// Any intrinsic signal at all (needs the discriminator's embeddings).
    pub fn has_intrinsic(self) -> bool {
        self != Method::NoModel
    }

    pub fn uses_rnd(self) -> bool {
        matches!(self, Method::Rnd | Method::Noveld | Method::NoveldMir)
    }

    pub fn is_mir(self) -> bool {
        matches!(self, Method::NoveldMir | Method::DeirMir)
    }

    pub fn is_deir(self) -> bool {
        matches!(self, Method::Deir | Method::DeirMir)
    }

    /// Reward coefficients with this method's inactive terms switched off:
    /// `no_model` drops the supplementary reward and non-MIR methods drop
    /// the mutual term. MIR methods need `k_M > 0`.
    pub fn gate(self, rewards: &RewardConfig) -> Result<RewardConfig, TrainError> {
        let mut r = rewards.clone();
        if self == Method::NoModel {
            r.k_s = 0.0;
        }
        if !self.is_mir() {
            r.k_m = 0.0;
        } else if r.k_m <= 0.0 {
            return Err(TrainError::Config(format!("{self} needs k_M > 0")));
        }
        Ok(r)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| TrainError::Config(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub clip: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub ent_coef: f64,
    pub vf_coef: f64,
    pub max_grad_norm: f64,
    pub lr: f64,
    pub critic_lr: f64,
    pub horizon: usize,
    pub num_envs: usize,
    pub total_steps: u64,
    pub share_actor: bool,
    pub critic_width: usize,
    pub value_norm_beta: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lambda: 0.95,
            clip: 0.2,
            epochs: 4,
            minibatches: 4,
            ent_coef: 0.01,
            vf_coef: 1.0,
            max_grad_norm: 0.5,
            lr: 3e-4,
            critic_lr: 3e-4,
            horizon: 256,
            num_envs: 16,
            total_steps: 2_000_000,
            share_actor: false,
            critic_width: 64,
            value_norm_beta: 0.99999,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma must be in [0, 1], got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad(format!("lambda must be in [0, 1], got {}", self.lambda));
        }
        if !(self.clip > 0.0) {
            return bad(format!("clip must be > 0, got {}", self.clip));
        }
        if self.minibatches == 0 || self.horizon == 0 || self.num_envs == 0 {
            return bad("minibatches, horizon and num_envs must be positive".into());
        }
        if self.minibatches > self.horizon * self.num_envs {
            return bad("more minibatches than samples per rollout".into());
        }
        if !(0.0..1.0).contains(&self.value_norm_beta) {
            return bad(format!(
                "value_norm_beta must be in [0, 1), got {}",
                self.value_norm_beta
            ));
        }
        Ok(())
    }
}

/// Discriminator and RND training settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoveltyConfig {
    pub lr: f64,
    /// Positive pairs sampled per agent per update (each gets one negative).
    pub disc_pairs: usize,
    pub dims: ModelDims,
}

impl Default for NoveltyConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            disc_pairs: 1024,
            dims: ModelDims::default(),
        }
    }
}

/// Everything that defines one training run apart from its seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub env: EnvConfig,
    pub method: Method,
    pub rewards: RewardConfig,
    pub train: TrainConfig,
    pub novelty: NoveltyConfig,
}

impl TrainerConfig {
    pub fn new(env: EnvConfig, method: Method) -> Self {
        Self {
            env,
            method,
            rewards: RewardConfig::default(),
            train: TrainConfig::default(),
            novelty: NoveltyConfig::default(),
        }
    }
}

/// Losses and diagnostics of one update phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_frac: f64,
    pub disc_loss: f64,
    pub rnd_loss: f64,
    pub skipped_minibatches: usize,
}

pub struct Trainer {
    pub config: TrainerConfig,
    pub policies: PolicySet,
    pub discs: Vec<DiscriminatorModel>,
    pub rnds: Vec<RndPair>,
    pub int_norm: Vec<MomentumNormalizer>,
    pub mut_norm: Vec<MomentumNormalizer>,
    pub value_norm: ValueNorm,
    pub slots: Vec<EnvSlot>,
    rng: ChaCha8Rng,
    pub env_steps: u64,
    pub updates: u64,
    next_episode: u64,
}

impl Trainer {
    pub fn new(mut config: TrainerConfig, seed: u64) -> Result<Self, TrainError> {
        config.rewards = config.method.gate(&config.rewards)?;
        config.env.validate()?;
        config.train.validate()?;
        config
            .rewards
            .validate()
            .map_err(|e| TrainError::Config(e.to_string()))?;
        let k = config.env.num_agents;
        let view = config.env.view_size;
        let dims = config.novelty.dims;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_actors = if config.train.share_actor { 1 } else { k };
        let actors = (0..n_actors)
            .map(|_| Actor::new(view, &dims, rng.next_u64()))
            .collect::<Result<Vec<_>, _>>()?;
        let critic = Critic::new(view, &dims, k, config.train.critic_width, rng.next_u64())?;
        let policies = PolicySet {
            actors,
            critic,
            num_agents: k,
            shared: config.train.share_actor,
        };
        let nov_adam = AdamConfig {
            lr: config.novelty.lr,
            ..AdamConfig::default()
        };
        let mut discs = Vec::new();
        let mut rnds = Vec::new();
        if config.method.has_intrinsic() {
            for _ in 0..k {
                let mut d = DiscriminatorModel::new(view, &dims, rng.next_u64())?;
                d.adam = nov_adam;
                d.max_grad_norm = config.train.max_grad_norm;
                discs.push(d);
            }
        }
        if config.method.uses_rnd() {
            for _ in 0..k {
                let mut r = RndPair::new(&dims, rng.next_u64())?;
                r.adam = nov_adam;
                rnds.push(r);
            }
        }
        let momentum = config.rewards.norm_momentum;
        let mut trainer = Self {
            policies,
            discs,
            rnds,
            int_norm: vec![MomentumNormalizer::new(momentum); k],
            mut_norm: vec![MomentumNormalizer::new(momentum); k],
            value_norm: ValueNorm::new(config.train.value_norm_beta),
            slots: Vec::new(),
            rng,
            env_steps: 0,
            updates: 0,
            next_episode: 0,
            config,
        };
        for e in 0..trainer.config.train.num_envs {
            let id = trainer.next_episode;
            trainer.next_episode += 1;
            let slot = EnvSlot::new(&trainer.config.env, seed, e, id)?;
            trainer.slots.push(slot);
        }
        for e in 0..trainer.slots.len() {
            trainer.start_episode_state(e)?;
        }
        Ok(trainer)
    }

    fn num_agents(&self) -> usize {
        self.config.env.num_agents
    }

    fn disc_hidden_len(&self) -> usize {
        self.discs.first().map_or(0, |d| d.hidden_len())
    }

    /// Zeroes recurrent state and embeds the first observation of an episode.
    fn start_episode_state(&mut self, e: usize) -> Result<(), TrainError> {
        let k = self.num_agents();
        let ha = self.policies.actors[0].hidden_len();
        let hd = self.disc_hidden_len();
        let slot = &mut self.slots[e];
        slot.actor_h = vec![vec![0.0; ha]; k];
        slot.disc_h_prev = vec![vec![0.0; hd]; k];
        slot.current_trj = vec![Vec::new(); k];
        slot.current = vec![EmbeddingPair::default(); k];
        slot.novelty = vec![0.0; k];
        for a in 0..self.discs.len() {
            let x = Tensor::new(vec![1, slot.obs[a].len()], slot.obs[a].clone())?;
            let h = Tensor::zeros(vec![1, hd]);
            let enc = self.discs[a].encode_batch(&x, &h)?;
            slot.current[a] = enc.pair(0);
            if let Some(r) = self.rnds.get(a) {
                slot.novelty[a] = r.novelty_batch(&enc.e_trj)?[0];
            }
            slot.current_trj[a] = enc.e_trj.into_data();
        }
        Ok(())
    }

    /// Rows `[E, F]` of agent `k`'s current observations.
    fn agent_obs(&self, k: usize) -> Result<Tensor<f32>, NnError> {
        let rows: Vec<&[f32]> = self.slots.iter().map(|s| s.obs[k].as_slice()).collect();
        Tensor::stack_rows(&[rows[0].len()], &rows)
    }

    fn joint_obs(&self) -> Result<Tensor<f32>, NnError> {
        let rows: Vec<&[f32]> = self
            .slots
            .iter()
            .flat_map(|s| s.obs.iter().map(Vec::as_slice))
            .collect();
        Tensor::stack_rows(&[rows[0].len()], &rows)
    }

    fn critic_values(&self, joint: &Tensor<f32>) -> Result<Vec<f64>, NnError> {
        let v = self.policies.critic.values(joint)?;
        Ok(v.iter()
            .map(|&x| self.value_norm.denormalize(f64::from(x)))
            .collect())
    }

    /// Gathers `H` steps from every environment.
    pub fn collect_rollout(&mut self) -> Result<RolloutBatch, TrainError> {
        let (h, ne, k) = (
            self.config.train.horizon,
            self.slots.len(),
            self.num_agents(),
        );
        let feat = feature_len(self.config.env.view_size);
        let ha = self.policies.actors[0].hidden_len();
        let hd = self.disc_hidden_len();
        let mut batch = RolloutBatch::new(h, ne, k, feat, ha, hd);
        let method = self.config.method;
        let rcfg = self.config.rewards.clone();

        for _ in 0..h {
            // Decentralised action selection: agent k's actor sees only its
            // own observation and hidden state.
            let mut logits = vec![Vec::new(); k];
            let mut next_h = vec![Vec::new(); k];
            for a in 0..k {
                let obs = self.agent_obs(a)?;
                let hrows: Vec<&[f32]> =
                    self.slots.iter().map(|s| s.actor_h[a].as_slice()).collect();
                let hid = Tensor::stack_rows(&[ha], &hrows)?;
                let (l, nh) = self.policies.actor(a).act(&obs, &hid)?;
                logits[a] = l.into_data();
                next_h[a] = nh.into_data();
            }
            let joint = self.joint_obs()?;
            let values = self.critic_values(&joint)?;
            let mut joint_actions = vec![vec![Action::Noop; k]; ne];
            for (e, slot) in self.slots.iter_mut().enumerate() {
                batch.dones.push(false);
                batch.episode_ids.push(slot.episode_id);
                batch.episode_t.push(slot.state.t);
                for a in 0..k {
                    let row = &logits[a][e * NUM_ACTIONS..(e + 1) * NUM_ACTIONS];
                    let (act, lp) = sample_action(row, &mut slot.rng);
                    joint_actions[e][a] = Action::from_index(act).unwrap();
                    batch.obs.extend_from_slice(&slot.obs[a]);
                    batch.actor_h.extend_from_slice(&slot.actor_h[a]);
                    if hd > 0 {
                        batch.disc_h.extend_from_slice(&slot.disc_h_prev[a]);
                        batch.e_trj.extend_from_slice(&slot.current_trj[a]);
                    }
                    batch.actions.push(act as u8);
                    batch.logp.push(lp);
                    batch.values.push(values[e * k + a]);
                    batch.active.push(!slot.state.agents[a].done);
                    slot.actor_h[a].copy_from_slice(&next_h[a][e * ha..(e + 1) * ha]);
                }
            }

            let outcomes = self
                .slots
                .par_iter_mut()
                .zip(joint_actions.par_iter())
                .map(|(slot, acts)| slot.step(acts))
                .collect::<Result<Vec<_>, _>>()?;
            self.env_steps += ne as u64;

            let raw = self.intrinsic_step(method, &rcfg)?;
            for (e, out) in outcomes.iter().enumerate() {
                let (r_int, r_mut) = match &raw {
                    Some((ri, rm)) => {
                        let ri: Vec<f64> = (0..k)
                            .map(|a| self.int_norm[a].normalize(ri[e * k + a]))
                            .collect();
                        let rm: Option<Vec<f64>> = rm.as_ref().map(|rm| {
                            (0..k)
                                .map(|a| self.mut_norm[a].normalize(rm[e * k + a]))
                                .collect()
                        });
                        (ri, rm)
                    }
                    None => (vec![0.0; k], None),
                };
                batch.rewards.extend(team_breakdown(
                    out.team_reward,
                    &r_int,
                    r_mut.as_deref(),
                    &rcfg,
                ));
                let last = batch.dones.len() - ne + e;
                batch.dones[last] = out.terminated;
            }

            for (e, out) in outcomes.iter().enumerate() {
                if out.terminated {
                    let slot = &self.slots[e];
                    batch.episodes.push(EpisodeRecord {
                        id: slot.episode_id,
                        env: e,
                        reward: out.team_reward,
                        length: slot.state.t,
                        completed: out.completed,
                        replay: slot.replay(),
                    });
                    let id = self.next_episode;
                    self.next_episode += 1;
                    self.slots[e].reset(id)?;
                    self.start_episode_state(e)?;
                }
            }
        }
        let joint = self.joint_obs()?;
        batch.bootstrap = self.critic_values(&joint)?;
        Ok(batch)
    }

    /// Embeds the post-step observations, computes raw intrinsic (and
    /// mutual) rewards per `(e, k)`, and advances the per-slot embedding
    /// state. Returns `None` for methods without intrinsic rewards.
    #[allow(clippy::type_complexity)]
    fn intrinsic_step(
        &mut self,
        method: Method,
        rcfg: &RewardConfig,
    ) -> Result<Option<(Vec<f64>, Option<Vec<f64>>)>, TrainError> {
        if !method.has_intrinsic() {
            return Ok(None);
        }
        let (ne, k) = (self.slots.len(), self.num_agents());
        let hd = self.disc_hidden_len();
        let mut next_pairs = vec![vec![EmbeddingPair::default(); k]; ne];
        let mut next_trj = vec![vec![Vec::new(); k]; ne];
        let mut next_nov = vec![vec![0.0; k]; ne];
        for a in 0..k {
            let obs = self.agent_obs(a)?;
            let hrows: Vec<&[f32]> = self
                .slots
                .iter()
                .map(|s| s.current_trj[a].as_slice())
                .collect();
            let hid = Tensor::stack_rows(&[hd], &hrows)?;
            let enc = self.discs[a].encode_batch(&obs, &hid)?;
            let nov = match self.rnds.get(a) {
                Some(r) => Some(r.novelty_batch(&enc.e_trj)?),
                None => None,
            };
            for e in 0..ne {
                next_pairs[e][a] = enc.pair(e);
                next_trj[e][a] = enc.e_trj.row(e).to_vec();
                if let Some(n) = &nov {
                    next_nov[e][a] = n[e];
                }
            }
        }
        let mut r_int = vec![0.0; ne * k];
        let mut r_mut = method.is_mir().then(|| vec![0.0; ne * k]);
        for (e, slot) in self.slots.iter_mut().enumerate() {
            for a in 0..k {
                r_int[e * k + a] = match method {
                    Method::Deir | Method::DeirMir => deir_intrinsic(
                        slot.memory[a].as_slice(),
                        &next_pairs[e][a].e_obs,
                        &slot.current[a].e_trj,
                        rcfg.eps_m,
                    ),
                    Method::Noveld | Method::NoveldMir => {
                        noveld_intrinsic(next_nov[e][a], slot.novelty[a], rcfg.alpha)
                    }
                    Method::Rnd => next_nov[e][a],
                    Method::NoModel => 0.0,
                };
            }
            if let Some(rm) = r_mut.as_mut() {
                match method {
                    Method::DeirMir => {
                        let team: Vec<TeammateStep<'_>> = (0..k)
                            .map(|j| TeammateStep {
                                memory: slot.memory[j].as_slice(),
                                e_obs_t: &slot.current[j].e_obs,
                                e_obs_next: &next_pairs[e][j].e_obs,
                                e_trj_t: &slot.current[j].e_trj,
                            })
                            .collect();
                        for a in 0..k {
                            rm[e * k + a] =
                                deir_mutual(&team, a, rcfg.mutual_deir_variant, rcfg.eps_m);
                        }
                    }
                    Method::NoveldMir => {
                        for a in 0..k {
                            rm[e * k + a] =
                                noveld_mutual(&next_nov[e], &slot.novelty, rcfg.alpha, a);
                        }
                    }
                    _ => unreachable!("only MIR methods carry mutual rewards"),
                }
            }
            for a in 0..k {
                if method.is_deir() {
                    let done = std::mem::take(&mut slot.current[a]);
                    slot.memory[a].push(done);
                }
                slot.current[a] = std::mem::take(&mut next_pairs[e][a]);
                slot.disc_h_prev[a] = std::mem::replace(
                    &mut slot.current_trj[a],
                    std::mem::take(&mut next_trj[e][a]),
                );
                slot.novelty[a] = next_nov[e][a];
            }
        }
        Ok(Some((r_int, r_mut)))
    }

    /// Advantages and returns per `(t, e, k)` from composed rewards.
    pub fn advantages(&self, batch: &RolloutBatch) -> (Vec<f64>, Vec<f64>) {
        let (h, ne, k) = (batch.horizon, batch.num_envs, batch.num_agents);
        let mut adv = vec![0.0; batch.len()];
        let mut ret = vec![0.0; batch.len()];
        let tc = &self.config.train;
        for e in 0..ne {
            let dones: Vec<bool> = (0..h).map(|t| batch.dones[t * ne + e]).collect();
            for a in 0..k {
                let idx: Vec<usize> = (0..h).map(|t| batch.index(t, e, a)).collect();
                let r: Vec<f64> = idx.iter().map(|&i| batch.rewards[i].r_total).collect();
                let v: Vec<f64> = idx.iter().map(|&i| batch.values[i]).collect();
                let (ad, rt) = compute_gae(
                    &r,
                    &v,
                    &dones,
                    batch.bootstrap[e * k + a],
                    tc.gamma,
                    tc.lambda,
                );
                for (j, &i) in idx.iter().enumerate() {
                    adv[i] = ad[j];
                    ret[i] = rt[j];
                }
            }
        }
        (adv, ret)
    }

    /// Log-probabilities of the stored actions under the current actors,
    /// recomputed from stored observations and hidden snapshots.
    pub fn recompute_logp(&self, batch: &RolloutBatch) -> Result<Vec<f32>, NnError> {
        let mut out = vec![0.0; batch.len()];
        let k = batch.num_agents;
        for a in 0..k {
            let idx: Vec<usize> = (0..batch.len() / k).map(|s| s * k + a).collect();
            let (logits, _) = self.actor_forward(batch, a, &idx)?;
            for (r, &i) in idx.iter().enumerate() {
                let lp = log_softmax(&logits.data()[r * NUM_ACTIONS..(r + 1) * NUM_ACTIONS]);
                out[i] = lp[batch.actions[i] as usize];
            }
        }
        Ok(out)
    }

    fn actor_forward(
        &self,
        batch: &RolloutBatch,
        agent: usize,
        idx: &[usize],
    ) -> Result<(Tensor<f32>, crate::nn::Cache<f32>), NnError> {
        let obs: Vec<&[f32]> = idx.iter().map(|&i| batch.obs_row(i)).collect();
        let hid: Vec<&[f32]> = idx.iter().map(|&i| batch.actor_h_row(i)).collect();
        let obs = Tensor::stack_rows(&[batch.feat_len], &obs)?;
        let hid = Tensor::stack_rows(&[batch.actor_hidden_len], &hid)?;
        let f = self.policies.actor(agent).net.forward(&obs, Some(&hid))?;
        Ok((f.output, f.cache))
    }

    /// PPO epochs over the batch, then one discriminator and one RND epoch.
    pub fn update(&mut self, batch: &RolloutBatch) -> Result<UpdateStats, TrainError> {
        let (adv, ret) = self.advantages(batch);
        self.value_norm.update(&ret);
        let targets: Vec<f64> = ret.iter().map(|&r| self.value_norm.normalize(r)).collect();
        let tc = self.config.train.clone();
        let k = batch.num_agents;
        let samples = batch.len() / k;
        let mut order: Vec<usize> = (0..samples).collect();
        let mut stats = UpdateStats::default();
        let mut counted = 0usize;
        let actor_adam = AdamConfig {
            lr: tc.lr,
            ..AdamConfig::default()
        };
        let critic_adam = AdamConfig {
            lr: tc.critic_lr,
            ..AdamConfig::default()
        };
        for _ in 0..tc.epochs {
            order.shuffle(&mut self.rng);
            let size = samples.div_ceil(tc.minibatches);
            for chunk in order.chunks(size) {
                match self.minibatch(
                    batch,
                    chunk,
                    &adv,
                    &targets,
                    &tc,
                    &actor_adam,
                    &critic_adam,
                )? {
                    Some(s) => {
                        stats.policy_loss += s.policy_loss;
                        stats.value_loss += s.value_loss;
                        stats.entropy += s.entropy;
                        stats.clip_frac += s.clip_frac;
                        counted += 1;
                    }
                    None => stats.skipped_minibatches += 1,
                }
            }
        }
        if counted > 0 {
            let c = counted as f64;
            stats.policy_loss /= c;
            stats.value_loss /= c;
            stats.entropy /= c;
            stats.clip_frac /= c;
        }
        stats.disc_loss = self.train_discriminators(batch, tc.minibatches)?;
        stats.rnd_loss = self.train_rnd(batch, tc.minibatches)?;
        self.updates += 1;
        Ok(stats)
    }

    /// One minibatch step over samples `chunk` (indices of `(t, e)` pairs).
    /// Returns `None` when the loss is non-finite and the step was skipped.
    #[allow(clippy::too_many_arguments)]
    fn minibatch(
        &mut self,
        batch: &RolloutBatch,
        chunk: &[usize],
        adv: &[f64],
        targets: &[f64],
        tc: &TrainConfig,
        actor_adam: &AdamConfig,
        critic_adam: &AdamConfig,
    ) -> Result<Option<UpdateStats>, TrainError> {
        let k = batch.num_agents;
        let mut norm_adv: Vec<f64> = Vec::new();
        let mut active_idx = Vec::new();
        for &s in chunk {
            for a in 0..k {
                let i = s * k + a;
                if batch.active[i] {
                    active_idx.push(i);
                    norm_adv.push(adv[i]);
                }
            }
        }
        standardize(&mut norm_adv);
        let mut adv_of = vec![0.0; batch.len()];
        for (&i, &v) in active_idx.iter().zip(&norm_adv) {
            adv_of[i] = v;
        }
        let n_active = active_idx.len().max(1) as f64;

        let mut stats = UpdateStats::default();
        let mut actor_grads: Vec<Option<NetParams<f32>>> = vec![None; self.policies.actors.len()];
        for a in 0..k {
            let idx: Vec<usize> = chunk.iter().map(|&s| s * k + a).collect();
            let (logits, cache) = self.actor_forward(batch, a, &idx)?;
            let mut dlogits = vec![0.0f32; idx.len() * NUM_ACTIONS];
            for (r, &i) in idx.iter().enumerate() {
                if !batch.active[i] {
                    continue;
                }
                let row = &logits.data()[r * NUM_ACTIONS..(r + 1) * NUM_ACTIONS];
                let t = surrogate(
                    row,
                    batch.actions[i] as usize,
                    batch.logp[i],
                    adv_of[i],
                    tc.clip,
                    tc.ent_coef,
                    1.0 / n_active,
                );
                stats.policy_loss += t.loss / n_active;
                stats.entropy += t.entropy / n_active;
                stats.clip_frac += f64::from(u8::from(t.clipped)) / n_active;
                dlogits[r * NUM_ACTIONS..(r + 1) * NUM_ACTIONS].copy_from_slice(&t.dlogits);
            }
            let actor = self.policies.actor(a);
            let g = actor.net.backward_params(
                &cache,
                &Tensor::new(vec![idx.len(), NUM_ACTIONS], dlogits)?,
                None,
            )?;
            let slot = &mut actor_grads[self.policies.actor_index(a)];
            match slot {
                Some(acc) => acc.add_assign(&g.params),
                None => *slot = Some(g.params),
            }
        }

        let joint_rows: Vec<&[f32]> = chunk
            .iter()
            .flat_map(|&s| (0..k).map(move |a| s * k + a))
            .map(|i| batch.obs_row(i))
            .collect();
        let joint = Tensor::stack_rows(&[batch.feat_len], &joint_rows)?;
        let cf = self.policies.critic.forward(&joint)?;
        let n = cf.values.len() as f64;
        let mut dv = Vec::with_capacity(cf.values.len());
        for (j, &v) in cf.values.iter().enumerate() {
            let i = chunk[j / k] * k + j % k;
            let err = f64::from(v) - targets[i];
            stats.value_loss += 0.5 * err * err / n;
            dv.push((tc.vf_coef * err / n) as f32);
        }
        if !(stats.policy_loss.is_finite()
            && stats.value_loss.is_finite()
            && stats.entropy.is_finite())
        {
            log::warn!("non-finite PPO loss; minibatch skipped");
            return Ok(None);
        }
        let mut critic_grads = self.policies.critic.backward(&cf, dv)?;

        let actor_ok = actor_grads.iter().flatten().all(NetParams::is_finite);
        let critic_ok = critic_grads.iter().all(NetParams::is_finite);
        if !(actor_ok && critic_ok) {
            log::warn!("non-finite PPO gradient; minibatch skipped");
            return Ok(None);
        }
        for (actor, g) in self.policies.actors.iter_mut().zip(actor_grads) {
            if let Some(mut g) = g {
                clip_global_norm(&mut g, tc.max_grad_norm);
                actor.apply(&g, actor_adam)?;
            }
        }
        crate::novelty::clip_joint(&mut critic_grads, tc.max_grad_norm);
        self.policies.critic.apply(&critic_grads, critic_adam)?;
        Ok(Some(stats))
    }

    /// Builds balanced consecutive/non-consecutive pairs for agent `a`.
    pub fn discriminator_batch(
        &mut self,
        batch: &RolloutBatch,
        a: usize,
    ) -> Option<Vec<(usize, usize, f32)>> {
        let ne = batch.num_envs;
        let mut positives = Vec::new();
        for e in 0..ne {
            for (s, end) in batch.segments(e) {
                for t in s..end {
                    positives.push((e, t, s, end));
                }
            }
        }
        positives.shuffle(&mut self.rng);
        let mut pairs = Vec::new();
        for (e, t, s, end) in positives {
            if pairs.len() >= 2 * self.config.novelty.disc_pairs {
                break;
            }
            // Same-episode frames at least two steps away.
            let candidates: Vec<usize> = (s..=end).filter(|&j| j.abs_diff(t) >= 2).collect();
            let Some(&j) = candidates.get(self.rng.random_range(0..candidates.len().max(1))) else {
                continue;
            };
            let i = batch.index(t, e, a);
            pairs.push((i, batch.index(t + 1, e, a), 1.0));
            pairs.push((i, batch.index(j, e, a), 0.0));
        }
        (!pairs.is_empty()).then_some(pairs)
    }

    fn train_discriminators(
        &mut self,
        batch: &RolloutBatch,
        minibatches: usize,
    ) -> Result<f64, TrainError> {
        if self.discs.is_empty() {
            return Ok(0.0);
        }
        let mut total = 0.0;
        let mut count = 0usize;
        for a in 0..self.discs.len() {
            let Some(mut pairs) = self.discriminator_batch(batch, a) else {
                continue;
            };
            pairs.shuffle(&mut self.rng);
            let size = pairs.len().div_ceil(minibatches);
            for chunk in pairs.chunks(size) {
                let a_rows: Vec<&[f32]> = chunk.iter().map(|p| batch.obs_row(p.0)).collect();
                let b_rows: Vec<&[f32]> = chunk.iter().map(|p| batch.obs_row(p.1)).collect();
                let h_rows: Vec<&[f32]> = chunk.iter().map(|p| batch.disc_h_row(p.0)).collect();
                let db = DiscBatch {
                    obs_a: Tensor::stack_rows(&[batch.feat_len], &a_rows)?,
                    obs_b: Tensor::stack_rows(&[batch.feat_len], &b_rows)?,
                    hidden: Tensor::stack_rows(&[batch.disc_hidden_len], &h_rows)?,
                    labels: chunk.iter().map(|p| p.2).collect(),
                };
                match self.discs[a].train_step(&db) {
                    Ok(l) => {
                        total += l;
                        count += 1;
                    }
                    Err(NoveltyError::SingleClass) => {}
                    Err(NoveltyError::Nn(NnError::NonFinite { .. })) => {
                        log::warn!("non-finite discriminator gradient for agent {a}; step skipped");
                    }
                    Err(e) => return Err(e.into()),
                }
            }
        }
        Ok(if count > 0 { total / count as f64 } else { 0.0 })
    }

    fn train_rnd(&mut self, batch: &RolloutBatch, minibatches: usize) -> Result<f64, TrainError> {
        if self.rnds.is_empty() {
            return Ok(0.0);
        }
        let k = batch.num_agents;
        let mut total = 0.0;
        let mut count = 0usize;
        for a in 0..self.rnds.len() {
            let mut idx: Vec<usize> = (0..batch.len() / k).map(|s| s * k + a).collect();
            idx.shuffle(&mut self.rng);
            let size = idx.len().div_ceil(minibatches);
            for chunk in idx.chunks(size) {
                let rows: Vec<&[f32]> = chunk.iter().map(|&i| batch.e_trj_row(i)).collect();
                let x = Tensor::stack_rows(&[batch.disc_hidden_len], &rows)?;
                match self.rnds[a].train_step(&x) {
                    Ok(l) => {
                        total += l;
                        count += 1;
                    }
                    Err(NoveltyError::Nn(NnError::NonFinite { .. })) => {
                        log::warn!("non-finite RND gradient for agent {a}; step skipped");
                    }
                    Err(e) => return Err(e.into()),
                }
            }
        }
        Ok(if count > 0 { total / count as f64 } else { 0.0 })
    }

    /// All network parameters in checkpoint form.
    pub fn checkpoint(&self) -> Checkpoint<f32> {
        let mut ck = Checkpoint::new();
        for (i, a) in self.policies.actors.iter().enumerate() {
            ck.push(format!("actor_{i}"), &a.net);
        }
        ck.push("critic_encoder", &self.policies.critic.encoder);
        ck.push("critic_head", &self.policies.critic.head);
        for (i, d) in self.discs.iter().enumerate() {
            ck.push(format!("disc_{i}_obs"), &d.obs_encoder);
            ck.push(format!("disc_{i}_trj"), &d.trj_encoder);
            ck.push(format!("disc_{i}_head"), &d.head);
        }
        for (i, r) in self.rnds.iter().enumerate() {
            ck.push(format!("rnd_{i}_fixed"), r.fixed());
            ck.push(format!("rnd_{i}_train"), &r.train);
        }
        ck
    }
}

/// Mean of `r_int` and `r_mut` over a batch.
pub fn mean_intrinsic(rewards: &[RewardBreakdown]) -> (f64, f64) {
    if rewards.is_empty() {
        return (0.0, 0.0);
    }
    let n = rewards.len() as f64;
    (
        rewards.iter().map(|r| r.r_int).sum::<f64>() / n,
        rewards.iter().map(|r| r.r_mut).sum::<f64>() / n,
    )
}
