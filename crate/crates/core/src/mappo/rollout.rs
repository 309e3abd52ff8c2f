//! Environment slots and fixed-horizon rollout storage.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{
    generate_map, observe, Action, EnvConfig, EnvError, GridState, Replay, StepOutcome,
};
use crate::novelty::{feature_len, obs_features, EpisodicMemory};
use crate::rewards::{EmbeddingPair, RewardBreakdown};

/// One environment instance plus everything carried across its steps.
#[derive(Debug, Clone)]
pub struct EnvSlot {
    pub state: GridState,
    pub(crate) rng: ChaCha8Rng,
    pub episode_id: u64,
    /// Current observation features per agent.
    pub obs: Vec<Vec<f32>>,
    pub actor_h: Vec<Vec<f32>>,
    /// Discriminator GRU state that was fed together with the current observation.
    pub disc_h_prev: Vec<Vec<f32>>,
    /// Embeddings of the current observation; `e_trj` is also the GRU state.
    pub current: Vec<EmbeddingPair>,
    pub current_trj: Vec<Vec<f32>>,
    pub novelty: Vec<f64>,
    pub memory: Vec<EpisodicMemory>,
    pub actions: Vec<Vec<Action>>,
}

impl EnvSlot {
    /// Slot `index` draws maps and actions from its own stream of `seed`.
    pub fn new(
        template: &EnvConfig,
        seed: u64,
        index: usize,
        episode_id: u64,
    ) -> Result<Self, EnvError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index as u64 + 1);
        let cfg = template.with_seed(rng.next_u64());
        let state = generate_map(&cfg)?;
        let k = cfg.num_agents;
        let mut slot = Self {
            state,
            rng,
            episode_id,
            obs: vec![vec![0.0; feature_len(cfg.view_size)]; k],
            actor_h: Vec::new(),
            disc_h_prev: Vec::new(),
            current: vec![EmbeddingPair::default(); k],
            current_trj: Vec::new(),
            novelty: vec![0.0; k],
            memory: vec![EpisodicMemory::new(); k],
            actions: Vec::new(),
        };
        slot.refresh_obs();
        Ok(slot)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.state.config
    }

    pub(crate) fn refresh_obs(&mut self) {
        for k in 0..self.state.num_agents() {
            let o = observe(&self.state, k).expect("agent index in range");
            obs_features(&o, &mut self.obs[k]);
        }
    }

    /// Starts a fresh episode on a newly generated map.
    pub(crate) fn reset(&mut self, episode_id: u64) -> Result<(), EnvError> {
        let cfg = self.state.config.with_seed(self.rng.next_u64());
        self.state = generate_map(&cfg)?;
        self.episode_id = episode_id;
        self.actions.clear();
        self.memory.iter_mut().for_each(EpisodicMemory::clear);
        self.refresh_obs();
        Ok(())
    }

    pub(crate) fn step(&mut self, actions: &[Action]) -> Result<StepOutcome, EnvError> {
        let out = self.state.advance(actions)?;
        self.actions.push(actions.to_vec());
        // Terminal observations are still needed for the last intrinsic reward.
        self.refresh_obs();
        Ok(out)
    }

    pub fn replay(&self) -> Replay {
        let mut r = Replay::new(&self.state.config);
        r.steps = self.actions.clone();
        r
    }
}

/// A finished episode.
#[derive(Debug, Clone)]
pub struct EpisodeRecord {
    pub id: u64,
    pub env: usize,
    /// Team reward of the episode (non-zero only when completed).
    pub reward: f64,
    pub length: u32,
    pub completed: bool,
    pub replay: Replay,
}

/// Time-major storage of `H` steps of `E` environments with `K` agents.
/// Per-agent arrays are indexed `(t * E + e) * K + k`.
#[derive(Debug, Clone)]
pub struct RolloutBatch {
    pub horizon: usize,
    pub num_envs: usize,
    pub num_agents: usize,
    pub feat_len: usize,
    pub actor_hidden_len: usize,
    pub disc_hidden_len: usize,
    pub obs: Vec<f32>,
    pub actor_h: Vec<f32>,
    pub disc_h: Vec<f32>,
    pub e_trj: Vec<f32>,
    pub actions: Vec<u8>,
    pub logp: Vec<f32>,
    pub values: Vec<f64>,
    /// False for agents already frozen on a goal before the step.
    pub active: Vec<bool>,
    pub rewards: Vec<RewardBreakdown>,
    /// Per `(t, e)`: the episode ended with this step.
    pub dones: Vec<bool>,
    /// Per `(t, e)`: episode id and in-episode step index before the step.
    pub episode_ids: Vec<u64>,
    pub episode_t: Vec<u32>,
    /// Value of the state after the last step, per `(e, k)`.
    pub bootstrap: Vec<f64>,
    pub episodes: Vec<EpisodeRecord>,
}

impl RolloutBatch {
    pub(crate) fn new(h: usize, e: usize, k: usize, feat: usize, ha: usize, hd: usize) -> Self {
        let n = h * e * k;
        Self {
            horizon: h,
            num_envs: e,
            num_agents: k,
            feat_len: feat,
            actor_hidden_len: ha,
            disc_hidden_len: hd,
            obs: Vec::with_capacity(n * feat),
            actor_h: Vec::with_capacity(n * ha),
            disc_h: Vec::with_capacity(n * hd),
            e_trj: Vec::with_capacity(n * hd),
            actions: Vec::with_capacity(n),
            logp: Vec::with_capacity(n),
            values: Vec::with_capacity(n),
            active: Vec::with_capacity(n),
            rewards: Vec::with_capacity(n),
            dones: Vec::with_capacity(h * e),
            episode_ids: Vec::with_capacity(h * e),
            episode_t: Vec::with_capacity(h * e),
            bootstrap: Vec::with_capacity(e * k),
            episodes: Vec::new(),
        }
    }

    pub fn index(&self, t: usize, e: usize, k: usize) -> usize {
        (t * self.num_envs + e) * self.num_agents + k
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn obs_row(&self, i: usize) -> &[f32] {
        &self.obs[i * self.feat_len..(i + 1) * self.feat_len]
    }

    pub fn actor_h_row(&self, i: usize) -> &[f32] {
        &self.actor_h[i * self.actor_hidden_len..(i + 1) * self.actor_hidden_len]
    }

    pub fn disc_h_row(&self, i: usize) -> &[f32] {
        &self.disc_h[i * self.disc_hidden_len..(i + 1) * self.disc_hidden_len]
    }

    pub fn e_trj_row(&self, i: usize) -> &[f32] {
        &self.e_trj[i * self.disc_hidden_len..(i + 1) * self.disc_hidden_len]
    }

    /// Episode segments of env `e` as inclusive `(start, end)` step ranges.
    pub fn segments(&self, e: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut start = 0;
        for t in 0..self.horizon {
            if self.dones[t * self.num_envs + e] || t + 1 == self.horizon {
                out.push((start, t));
                start = t + 1;
            }
        }
        out
    }
}
