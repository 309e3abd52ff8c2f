//! Flat `key = value` experiment files.
//!
//! One setting per line, `#` starts a comment. Keys are dotted
//! (`env.map_kind`, `rewards.k_M`); every key is optional and unknown or
//! repeated keys are errors. [`KEYS`] lists them all with their defaults.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::env::{default_max_steps, EnvConfig, MapKind};
use crate::mappo::{Method, NoveltyConfig, TrainConfig, TrainerConfig};
use crate::rewards::{MutualDeirVariant, RewardConfig};

/// Every accepted key with its default and a short description.
pub const KEYS: &[(&str, &str, &str)] = &[
    (
        "method",
        "no_model",
        "no_model | rnd | noveld | noveld_mir | deir | deir_mir",
    ),
    ("seeds", "1", "comma-separated run seeds"),
    (
        "output_dir",
        "runs",
        "artifacts go to <output_dir>/seed_<seed>",
    ),
    (
        "eval_window",
        "100",
        "episodes averaged per evaluation point",
    ),
    (
        "checkpoint_every",
        "50",
        "updates between checkpoints (0: final only)",
    ),
    (
        "log.reward_breakdown",
        "false",
        "write per-step rewards.csv",
    ),
    (
        "env.map_kind",
        "DoorKeyB",
        "DoorKeyB | DoorSwitchA | DoorSwitchB | DoorSwitchC | DoorSwitchD",
    ),
    ("env.grid_size", "6", "cells per side"),
    ("env.num_agents", "auto", "agent count (auto: the map's)"),
    (
        "env.max_steps",
        "auto",
        "episode limit T_max (auto: 4 * size^2)",
    ),
    ("env.view_size", "7", "egocentric window side, odd"),
    ("rewards.k_E", "1", "environment reward weight"),
    ("rewards.k_S", "1", "supplementary reward weight"),
    ("rewards.k_I", "1", "intrinsic reward weight"),
    ("rewards.k_M", "0.5", "mutual reward weight"),
    (
        "rewards.tau",
        "1",
        "softmax temperature of the mixing weights",
    ),
    ("rewards.eps_m", "1e-5", "episodic ratio stabiliser"),
    ("rewards.alpha", "0.5", "novelty-difference scaling"),
    (
        "rewards.mutual_deir_variant",
        "literal",
        "literal | episodic_style",
    ),
    (
        "rewards.norm_momentum",
        "0.99",
        "reward normaliser momentum",
    ),
    ("train.gamma", "0.99", "discount"),
    ("train.lambda", "0.95", "GAE parameter"),
    ("train.clip", "0.2", "PPO ratio clip"),
    ("train.epochs", "4", "PPO epochs per update"),
    ("train.minibatches", "4", "minibatches per epoch"),
    ("train.ent_coef", "0.01", "entropy bonus"),
    ("train.vf_coef", "1", "value loss weight"),
    ("train.max_grad_norm", "0.5", "global gradient norm clip"),
    ("train.lr", "3e-4", "actor learning rate"),
    ("train.critic_lr", "3e-4", "critic learning rate"),
    ("train.horizon", "256", "rollout steps per environment"),
    ("train.num_envs", "16", "parallel environments"),
    ("train.total_steps", "2000000", "environment step budget"),
    (
        "train.share_actor",
        "false",
        "one actor network for all agents",
    ),
    ("train.critic_width", "64", "critic hidden layer width"),
    (
        "train.value_norm_beta",
        "0.99999",
        "value normaliser EMA decay",
    ),
    ("novelty.lr", "3e-4", "discriminator and RND learning rate"),
    (
        "novelty.disc_pairs",
        "1024",
        "consecutive pairs per agent per update",
    ),
    ("model.conv1", "8", "first conv channels"),
    ("model.conv2", "16", "second conv channels"),
    ("model.embed", "32", "observation embedding size"),
    ("model.hidden", "32", "GRU state size"),
    ("model.head_hidden", "32", "hidden width of output heads"),
    ("model.rnd_out", "32", "RND output size"),
    ("model.rnd_hidden", "64", "RND hidden width"),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Map and agents; `env.seed` is replaced per run.
    pub env: EnvConfig,
    pub method: Method,
    pub rewards: RewardConfig,
    pub train: TrainConfig,
    pub novelty: NoveltyConfig,
    pub seeds: Vec<u64>,
    pub eval_window: usize,
    pub output_dir: PathBuf,
    pub checkpoint_every: u64,
    pub reward_breakdown: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            env: EnvConfig::new(MapKind::DoorKeyB, 6, 0),
            method: Method::NoModel,
            rewards: RewardConfig::default(),
            train: TrainConfig::default(),
            novelty: NoveltyConfig::default(),
            seeds: vec![1],
            eval_window: 100,
            output_dir: PathBuf::from("runs"),
            checkpoint_every: 50,
            reward_breakdown: false,
        }
    }
}

fn value<T: FromStr>(key: &str, v: &str) -> Result<T, String> {
    v.parse()
        .map_err(|_| format!("`{key}`: cannot parse `{v}`"))
}

fn boolean(key: &str, v: &str) -> Result<bool, String> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(format!("`{key}`: expected true or false, got `{v}`")),
    }
}

impl ExperimentConfig {
    /// Parses a config file; keys not given keep their defaults.
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut cfg = Self::default();
        let mut seen = HashSet::new();
        let (mut agents, mut max_steps) = (None, None);
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| HarnessError::Config {
                line: i + 1,
                message,
            };
            let (key, val) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            if !KEYS.iter().any(|(k, _, _)| *k == key) {
                return Err(err(format!("unknown key `{key}`")));
            }
            if !seen.insert(key.to_string()) {
                return Err(err(format!("`{key}` given twice")));
            }
            match key {
                "env.num_agents" if val != "auto" => agents = Some(value(key, val).map_err(err)?),
                "env.max_steps" if val != "auto" => max_steps = Some(value(key, val).map_err(err)?),
                "env.num_agents" | "env.max_steps" => {}
                _ => cfg.set(key, val).map_err(err)?,
            }
        }
        cfg.env.num_agents = agents.unwrap_or(cfg.env.map_kind.num_agents());
        cfg.env.max_steps = max_steps.unwrap_or(default_max_steps(cfg.env.grid_size));
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        let r = &mut self.rewards;
        let t = &mut self.train;
        let m = &mut self.novelty.dims;
        match key {
            "method" => {
                self.method = v
                    .parse()
                    .map_err(|e: crate::mappo::TrainError| e.to_string())?
            }
            "seeds" => {
                self.seeds = v
                    .split(',')
                    .map(|s| value(key, s.trim()))
                    .collect::<Result<_, _>>()?;
            }
            "output_dir" => self.output_dir = PathBuf::from(v),
            "eval_window" => self.eval_window = value(key, v)?,
            "checkpoint_every" => self.checkpoint_every = value(key, v)?,
            "log.reward_breakdown" => self.reward_breakdown = boolean(key, v)?,
            "env.map_kind" => {
                self.env.map_kind = v.parse().map_err(|e: crate::env::EnvError| e.to_string())?
            }
            "env.grid_size" => self.env.grid_size = value(key, v)?,
            "env.view_size" => self.env.view_size = value(key, v)?,
            "rewards.k_E" => r.k_e = value(key, v)?,
            "rewards.k_S" => r.k_s = value(key, v)?,
            "rewards.k_I" => r.k_i = value(key, v)?,
            "rewards.k_M" => r.k_m = value(key, v)?,
            "rewards.tau" => r.tau = value(key, v)?,
            "rewards.eps_m" => r.eps_m = value(key, v)?,
            "rewards.alpha" => r.alpha = value(key, v)?,
            "rewards.mutual_deir_variant" => {
                r.mutual_deir_variant =
                    v.parse::<MutualDeirVariant>().map_err(|e| e.to_string())?;
            }
            "rewards.norm_momentum" => r.norm_momentum = value(key, v)?,
            "train.gamma" => t.gamma = value(key, v)?,
            "train.lambda" => t.lambda = value(key, v)?,
            "train.clip" => t.clip = value(key, v)?,
            "train.epochs" => t.epochs = value(key, v)?,
            "train.minibatches" => t.minibatches = value(key, v)?,
            "train.ent_coef" => t.ent_coef = value(key, v)?,
            "train.vf_coef" => t.vf_coef = value(key, v)?,
            "train.max_grad_norm" => t.max_grad_norm = value(key, v)?,
            "train.lr" => t.lr = value(key, v)?,
            "train.critic_lr" => t.critic_lr = value(key, v)?,
            "train.horizon" => t.horizon = value(key, v)?,
            "train.num_envs" => t.num_envs = value(key, v)?,
            "train.total_steps" => {
                t.total_steps = value::<f64>(key, v).and_then(|x| whole(key, x))?
            }
            "train.share_actor" => t.share_actor = boolean(key, v)?,
            "train.critic_width" => t.critic_width = value(key, v)?,
            "train.value_norm_beta" => t.value_norm_beta = value(key, v)?,
            "novelty.lr" => self.novelty.lr = value(key, v)?,
            "novelty.disc_pairs" => self.novelty.disc_pairs = value(key, v)?,
            "model.conv1" => m.conv1 = value(key, v)?,
            "model.conv2" => m.conv2 = value(key, v)?,
            "model.embed" => m.embed = value(key, v)?,
            "model.hidden" => m.hidden = value(key, v)?,
            "model.head_hidden" => m.head_hidden = value(key, v)?,
            "model.rnd_out" => m.rnd_out = value(key, v)?,
            "model.rnd_hidden" => m.rnd_hidden = value(key, v)?,
            _ => unreachable!("key list and setter out of sync: {key}"),
        }
        Ok(())
    }

    /// Checks everything that can be checked before a run starts.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let invalid = |m: String| Err(HarnessError::Invalid(m));
        self.env
            .validate()
            .map_err(|e| HarnessError::Invalid(e.to_string()))?;
        self.rewards
            .validate()
            .map_err(|e| HarnessError::Invalid(e.to_string()))?;
        self.train
            .validate()
            .map_err(|e| HarnessError::Invalid(e.to_string()))?;
        self.method
            .gate(&self.rewards)
            .map_err(|e| HarnessError::Invalid(e.to_string()))?;
        if self.seeds.is_empty() {
            return invalid("at least one seed is required".into());
        }
        let mut uniq = self.seeds.clone();
        uniq.sort_unstable();
        uniq.dedup();
        if uniq.len() != self.seeds.len() {
            return invalid("seeds must be distinct".into());
        }
        if self.eval_window == 0 {
            return invalid("eval_window must be positive".into());
        }
        if !(self.novelty.lr > 0.0 && self.train.lr > 0.0 && self.train.critic_lr > 0.0) {
            return invalid("learning rates must be positive".into());
        }
        let d = &self.novelty.dims;
        if [
            d.conv1,
            d.conv2,
            d.embed,
            d.hidden,
            d.head_hidden,
            d.rnd_out,
            d.rnd_hidden,
        ]
        .contains(&0)
        {
            return invalid("model widths must be positive".into());
        }
        Ok(())
    }

    /// The same experiment on another map, with that map's default agent
    /// count and episode limit.
    pub fn with_map(&self, kind: MapKind, size: usize) -> Self {
        let mut c = self.clone();
        c.env = EnvConfig {
            view_size: self.env.view_size,
            ..EnvConfig::new(kind, size, 0)
        };
        c
    }

    pub fn trainer_config(&self) -> TrainerConfig {
        TrainerConfig {
            env: self.env.clone(),
            method: self.method,
            rewards: self.rewards.clone(),
            train: self.train.clone(),
            novelty: self.novelty.clone(),
        }
    }

    /// Renders every key, so that `parse(to_text())` is the identity.
    pub fn to_text(&self) -> String {
        let (r, t, n, m) = (
            &self.rewards,
            &self.train,
            &self.novelty,
            &self.novelty.dims,
        );
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        let variant = match r.mutual_deir_variant {
            MutualDeirVariant::Literal => "literal",
            MutualDeirVariant::EpisodicStyle => "episodic_style",
        };
        let values: Vec<String> = vec![
            self.method.to_string(),
            seeds.join(","),
            self.output_dir.display().to_string(),
            self.eval_window.to_string(),
            self.checkpoint_every.to_string(),
            self.reward_breakdown.to_string(),
            self.env.map_kind.to_string(),
            self.env.grid_size.to_string(),
            self.env.num_agents.to_string(),
            self.env.max_steps.to_string(),
            self.env.view_size.to_string(),
            r.k_e.to_string(),
            r.k_s.to_string(),
            r.k_i.to_string(),
            r.k_m.to_string(),
            r.tau.to_string(),
            r.eps_m.to_string(),
            r.alpha.to_string(),
            variant.to_string(),
            r.norm_momentum.to_string(),
            t.gamma.to_string(),
            t.lambda.to_string(),
            t.clip.to_string(),
            t.epochs.to_string(),
            t.minibatches.to_string(),
            t.ent_coef.to_string(),
            t.vf_coef.to_string(),
            t.max_grad_norm.to_string(),
            t.lr.to_string(),
            t.critic_lr.to_string(),
            t.horizon.to_string(),
            t.num_envs.to_string(),
            t.total_steps.to_string(),
            t.share_actor.to_string(),
            t.critic_width.to_string(),
            t.value_norm_beta.to_string(),
            n.lr.to_string(),
            n.disc_pairs.to_string(),
            m.conv1.to_string(),
            m.conv2.to_string(),
            m.embed.to_string(),
            m.hidden.to_string(),
            m.head_hidden.to_string(),
            m.rnd_out.to_string(),
            m.rnd_hidden.to_string(),
        ];
        debug_assert_eq!(values.len(), KEYS.len());
        let mut out = String::new();
        for ((key, _, _), v) in KEYS.iter().zip(values) {
            let _ = writeln!(out, "{key} = {v}");
        }
        out
    }
}

fn whole(key: &str, x: f64) -> Result<u64, String> {
    if x >= 0.0 && x.fract() == 0.0 && x < u64::MAX as f64 {
        Ok(x as u64)
    } else {
        Err(format!(
            "`{key}` must be a non-negative whole number, got {x}"
        ))
    }
}

/// Commented listing of all keys and defaults, itself a valid config file.
pub fn default_config_text() -> String {
    let mut out = String::new();
    for (key, default, help) in KEYS {
        let _ = writeln!(out, "# {help}\n{key} = {default}");
    }
    out
}
