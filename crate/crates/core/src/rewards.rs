//! Reward arithmetic: episodic (DEIR-style) and novelty-difference
//! (NovelD-style) intrinsic rewards, their mutual counterparts computed from
//! teammates, softmax mixing, composition and momentum normalisation.
//!
//! Everything here is pure `f64` arithmetic except [`MomentumNormalizer`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RewardError {
    #[error("invalid reward configuration: {0}")]
    Config(String),
}

/// How the DEIR-based mutual reward reads a teammate's embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MutualDeirVariant {
    /// Squared change of the teammate's observation embedding between t and t+1.
    #[default]
    Literal,
    /// The teammate's own episodic ratio (same form as [`deir_intrinsic`]).
    EpisodicStyle,
}

impl std::str::FromStr for MutualDeirVariant {
    type Err = RewardError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "literal" => Ok(Self::Literal),
            "episodic_style" => Ok(Self::EpisodicStyle),
            other => Err(RewardError::Config(format!(
                "unknown mutual_deir_variant `{other}` (expected literal or episodic_style)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub k_e: f64,
    pub k_s: f64,
    pub k_i: f64,
    pub k_m: f64,
    /// Softmax temperature for mixing.
    pub tau: f64,
    /// Stabiliser in the episodic ratio's denominator.
    pub eps_m: f64,
    /// Weight of the previous novelty in novelty differences.
    pub alpha: f64,
    pub mutual_deir_variant: MutualDeirVariant,
    /// EMA momentum of the reward normalisers.
    pub norm_momentum: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            k_e: 1.0,
            k_s: 1.0,
            k_i: 1.0,
            k_m: 0.5,
            tau: 1.0,
            eps_m: 1e-5,
            alpha: 0.5,
            mutual_deir_variant: MutualDeirVariant::Literal,
            norm_momentum: 0.99,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), RewardError> {
        for (name, v) in [
            ("k_E", self.k_e),
            ("k_S", self.k_s),
            ("k_I", self.k_i),
            ("k_M", self.k_m),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(RewardError::Config(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(RewardError::Config(format!(
                "tau must be > 0, got {}",
                self.tau
            )));
        }
        if !(self.eps_m > 0.0 && self.eps_m.is_finite()) {
            return Err(RewardError::Config(format!(
                "eps_m must be > 0, got {}",
                self.eps_m
            )));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(RewardError::Config(format!(
                "alpha must be in [0, 1], got {}",
                self.alpha
            )));
        }
        if !(0.0..1.0).contains(&self.norm_momentum) {
            return Err(RewardError::Config(format!(
                "norm_momentum must be in [0, 1), got {}",
                self.norm_momentum
            )));
        }
        Ok(())
    }
}

/// Observation and trajectory embeddings of one agent at one step.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EmbeddingPair {
    pub e_obs: Vec<f64>,
    pub e_trj: Vec<f64>,
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    squared_distance(a, b).sqrt()
}

/// Episodic novelty of the next observation against this episode's memory:
/// `min_i dist²(e_obs_i, e_obs_next) / (dist(e_trj_i, e_trj_t) + eps_m)`.
/// An empty memory yields 0.
pub fn deir_intrinsic(
    memory: &[EmbeddingPair],
    e_obs_next: &[f64],
    e_trj_t: &[f64],
    eps_m: f64,
) -> f64 {
    memory
        .iter()
        .map(|m| squared_distance(&m.e_obs, e_obs_next) / (distance(&m.e_trj, e_trj_t) + eps_m))
        .reduce(f64::min)
        .unwrap_or(0.0)
}

/// `max(novelty_t - alpha * novelty_prev, 0)`.
pub fn noveld_intrinsic(novelty_t: f64, novelty_prev: f64, alpha: f64) -> f64 {
    (novelty_t - alpha * novelty_prev).max(0.0)
}

/// One teammate's view of step `t -> t+1` as consumed by [`deir_mutual`].
#[derive(Debug, Clone, Copy)]
pub struct TeammateStep<'a> {
    /// Episodic memory holding steps `[0, t)`.
    pub memory: &'a [EmbeddingPair],
    pub e_obs_t: &'a [f64],
    pub e_obs_next: &'a [f64],
    pub e_trj_t: &'a [f64],
}

/// Mutual reward for agent `k`: the largest change any teammate experienced.
///
/// `Literal` scores teammate `j` by `dist²(e_obs_{j,t}, e_obs_{j,t+1})` (the
/// minimum over memory indices is vacuous because the term does not depend
/// on the index). `EpisodicStyle` scores it by the teammate's episodic ratio.
/// Returns 0 without teammates.
pub fn deir_mutual(
    team: &[TeammateStep<'_>],
    k: usize,
    variant: MutualDeirVariant,
    eps_m: f64,
) -> f64 {
    team.iter()
        .enumerate()
        .filter(|&(j, _)| j != k)
        .map(|(_, m)| match variant {
            MutualDeirVariant::Literal => squared_distance(m.e_obs_t, m.e_obs_next),
            MutualDeirVariant::EpisodicStyle => {
                deir_intrinsic(m.memory, m.e_obs_next, m.e_trj_t, eps_m)
            }
        })
        .fold(0.0, f64::max)
}

/// Mutual novelty-difference reward for agent `k`. The teammate with the
/// highest current novelty is selected (lowest index on ties), then scored
/// as `max(novelty_t - alpha * novelty_prev, 0)`. Returns 0 without teammates.
pub fn noveld_mutual(novelty_t: &[f64], novelty_prev: &[f64], alpha: f64, k: usize) -> f64 {
    debug_assert_eq!(novelty_t.len(), novelty_prev.len());
    let mut best: Option<usize> = None;
    for j in (0..novelty_t.len()).filter(|&j| j != k) {
        if best.is_none_or(|b| novelty_t[j] > novelty_t[b]) {
            best = Some(j);
        }
    }
    best.map_or(0.0, |j| {
        noveld_intrinsic(novelty_t[j], novelty_prev[j], alpha)
    })
}

/// Softmax of the team's intrinsic rewards at temperature `tau`, computed
/// with max-subtraction.
pub fn mix_weights(team_r_i: &[f64], tau: f64) -> Vec<f64> {
    let max = team_r_i.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = team_r_i.iter().map(|r| ((r - max) / tau).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Agent `k`'s softmax weight times its mutual reward.
pub fn mix(team_r_i: &[f64], r_m_k: f64, tau: f64, k: usize) -> f64 {
    mix_weights(team_r_i, tau)[k] * r_m_k
}

/// Returns `(r_S, r_total)` with `r_S = k_I r_I + k_M mixed` and
/// `r_total = k_E r_E + k_S r_S`.
pub fn compose(r_e: f64, r_i: f64, mixed: f64, cfg: &RewardConfig) -> (f64, f64) {
    let r_s = cfg.k_i * r_i + cfg.k_m * mixed;
    (r_s, cfg.k_e * r_e + cfg.k_s * r_s)
}

/// Per-agent reward record for one step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_env: f64,
    pub r_int: f64,
    pub r_mut: f64,
    pub mix_w: f64,
    pub r_sup: f64,
    pub r_total: f64,
}

/// Assembles the team's breakdown from (already normalised) intrinsic and
/// mutual rewards. `r_mut` is `None` when mutual rewards are inactive, in
/// which case the mutual term and its weight are recorded as 0.
pub fn team_breakdown(
    r_env: f64,
    r_int: &[f64],
    r_mut: Option<&[f64]>,
    cfg: &RewardConfig,
) -> Vec<RewardBreakdown> {
    let weights = r_mut.map(|_| mix_weights(r_int, cfg.tau));
    (0..r_int.len())
        .map(|k| {
            let (r_m, w) = match (r_mut, &weights) {
                (Some(m), Some(w)) => (m[k], w[k]),
                _ => (0.0, 0.0),
            };
            let (r_sup, r_total) = compose(r_env, r_int[k], w * r_m, cfg);
            RewardBreakdown {
                r_env,
                r_int: r_int[k],
                r_mut: r_m,
                mix_w: w,
                r_sup,
                r_total,
            }
        })
        .collect()
}

/// Running mean/variance with exponential momentum. Each call normalises
/// with the current statistics, then folds the value in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentumNormalizer {
    pub mean: f64,
    pub var: f64,
    pub momentum: f64,
    pub floor: f64,
    pub count: u64,
}

impl MomentumNormalizer {
    pub fn new(momentum: f64) -> Self {
        Self {
            mean: 0.0,
            var: 1.0,
            momentum,
            floor: 1e-8,
            count: 0,
        }
    }

    pub fn std(&self) -> f64 {
        self.var.sqrt().max(self.floor)
    }

    pub fn normalize(&mut self, x: f64) -> f64 {
        let out = (x - self.mean) / self.std();
        self.update(x);
        out
    }

    pub fn update(&mut self, x: f64) {
        let m = self.momentum;
        let delta = x - self.mean;
        self.mean += (1.0 - m) * delta;
        self.var = m * (self.var + (1.0 - m) * delta * delta);
        self.count += 1;
    }
}
