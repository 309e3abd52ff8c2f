//! Training runs, multi-seed experiments and method × map sweeps.

use std::collections::VecDeque;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::metric::{MetricTable, RunLog};
use super::HarnessError;
use crate::env::{map_name, MapKind};
use crate::mappo::{mean_intrinsic, EpisodeRecord, Method, RolloutBatch, Trainer};

pub const TRAIN_LOG_HEADER: &str =
    "update,env_steps,mean_ep_reward,mean_ep_len,policy_loss,value_loss,entropy,clip_frac,mean_r_int,mean_r_mut";
pub const REWARDS_HEADER: &str = "run,episode,t,agent,r_env,r_int,r_mut,mix_w,r_sup,r_total";

/// Worker pool for independent runs, sized by `MIRLAB_THREADS` when set.
pub fn worker_pool() -> Result<rayon::ThreadPool, HarnessError> {
    let threads = match std::env::var("MIRLAB_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| {
                HarnessError::Invalid(format!(
                    "MIRLAB_THREADS must be a positive integer, got `{v}`"
                ))
            })?,
        Err(_) => std::thread::available_parallelism().map_or(1, usize::from),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| HarnessError::Invalid(e.to_string()))
}

pub fn seed_dir(root: &Path, seed: u64) -> PathBuf {
    root.join(format!("seed_{seed}"))
}

struct Window {
    size: usize,
    recent: VecDeque<(f64, u32)>,
    total: u64,
}

impl Window {
    fn push(&mut self, ep: &EpisodeRecord) {
        if self.recent.len() == self.size {
            self.recent.pop_front();
        }
        self.recent.push_back((ep.reward, ep.length));
        self.total += 1;
    }

    fn means(&self) -> Option<(f64, f64)> {
        let n = self.recent.len();
        (n > 0).then(|| {
            let r: f64 = self.recent.iter().map(|e| e.0).sum();
            let l: f64 = self.recent.iter().map(|e| f64::from(e.1)).sum();
            (r / n as f64, l / n as f64)
        })
    }

    fn full(&self) -> bool {
        self.recent.len() == self.size
    }
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> HarnessError + '_ {
    move |e| HarnessError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

fn write_rewards(out: &mut impl Write, seed: u64, b: &RolloutBatch) -> std::io::Result<()> {
    for t in 0..b.horizon {
        for e in 0..b.num_envs {
            let s = t * b.num_envs + e;
            for k in 0..b.num_agents {
                let r = &b.rewards[b.index(t, e, k)];
                writeln!(
                    out,
                    "{seed},{},{},{k},{},{},{},{},{},{}",
                    b.episode_ids[s],
                    b.episode_t[s],
                    r.r_env,
                    r.r_int,
                    r.r_mut,
                    r.mix_w,
                    r.r_sup,
                    r.r_total
                )?;
            }
        }
    }
    Ok(())
}

/// Trains one seed to the step budget and writes its artifacts under `dir`:
/// `config.txt`, `train_log.csv`, optionally `rewards.csv`, `checkpoints/`,
/// `best_episode.replay` and `summary.json`.
///
/// The budget is rounded up to whole rollouts. An evaluation point is
/// recorded after every update once `eval_window` episodes have finished;
/// a run that never fills the window gets one final point over all its
/// episodes.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64, dir: &Path) -> Result<RunLog, HarnessError> {
    fs::create_dir_all(dir).map_err(io(dir))?;
    let mut own = cfg.clone();
    own.seeds = vec![seed];
    let cfg_path = dir.join("config.txt");
    fs::write(&cfg_path, own.to_text()).map_err(io(&cfg_path))?;
    let summary_path = dir.join("summary.json");
    if summary_path.exists() {
        fs::remove_file(&summary_path).map_err(io(&summary_path))?;
    }

    let log_path = dir.join("train_log.csv");
    let mut log = BufWriter::new(File::create(&log_path).map_err(io(&log_path))?);
    writeln!(log, "{TRAIN_LOG_HEADER}").map_err(io(&log_path))?;
    let rew_path = dir.join("rewards.csv");
    let mut rewards = if cfg.reward_breakdown {
        let mut w = BufWriter::new(File::create(&rew_path).map_err(io(&rew_path))?);
        writeln!(w, "{REWARDS_HEADER}").map_err(io(&rew_path))?;
        Some(w)
    } else {
        None
    };
    let ck_dir = dir.join("checkpoints");
    fs::create_dir_all(&ck_dir).map_err(io(&ck_dir))?;

    let mut trainer = Trainer::new(cfg.trainer_config(), seed)?;
    let mut window = Window {
        size: cfg.eval_window,
        recent: VecDeque::with_capacity(cfg.eval_window),
        total: 0,
    };
    let mut run = RunLog {
        map: map_name(cfg.env.map_kind, cfg.env.grid_size),
        method: cfg.method,
        seed,
        completed: false,
        env_steps: 0,
        episodes: 0,
        points: Vec::new(),
        best_episode_reward: 0.0,
    };
    let mut best: Option<EpisodeRecord> = None;

    while trainer.env_steps < cfg.train.total_steps {
        let batch = trainer.collect_rollout()?;
        let stats = trainer.update(&batch)?;
        for ep in &batch.episodes {
            window.push(ep);
            if best.as_ref().is_none_or(|b| ep.reward > b.reward) {
                best = Some(ep.clone());
            }
        }
        if let Some(w) = rewards.as_mut() {
            write_rewards(w, seed, &batch).map_err(io(&rew_path))?;
        }
        if window.full() {
            run.push_point(
                trainer.updates,
                trainer.env_steps,
                window.total,
                window.means().unwrap().0,
            );
        }
        let means = window.means();
        let (r_int, r_mut) = mean_intrinsic(&batch.rewards);
        writeln!(
            log,
            "{},{},{},{},{},{},{},{},{},{}",
            trainer.updates,
            trainer.env_steps,
            fmt_opt(means.map(|m| m.0)),
            fmt_opt(means.map(|m| m.1)),
            stats.policy_loss,
            stats.value_loss,
            stats.entropy,
            stats.clip_frac,
            r_int,
            r_mut
        )
        .map_err(io(&log_path))?;
        // Flushed every update so progress is visible during long runs.
        log.flush().map_err(io(&log_path))?;
        if cfg.checkpoint_every > 0 && trainer.updates % cfg.checkpoint_every == 0 {
            let p = ck_dir.join(format!("update_{}.ckpt", trainer.updates));
            trainer.checkpoint().save(&p).map_err(io(&p))?;
        }
        log::debug!(
            "seed {seed}: update {} at {} steps",
            trainer.updates,
            trainer.env_steps
        );
    }
    if run.points.is_empty() {
        if let Some((mean, _)) = window.means() {
            run.push_point(trainer.updates, trainer.env_steps, window.total, mean);
        }
    }
    log.flush().map_err(io(&log_path))?;
    if let Some(mut w) = rewards {
        w.flush().map_err(io(&rew_path))?;
    }
    let p = ck_dir.join("final.ckpt");
    trainer.checkpoint().save(&p).map_err(io(&p))?;
    if let Some(b) = &best {
        let p = dir.join("best_episode.replay");
        fs::write(&p, b.replay.to_text()).map_err(io(&p))?;
        run.best_episode_reward = b.reward;
    }
    run.env_steps = trainer.env_steps;
    run.episodes = window.total;
    run.completed = true;
    let json =
        serde_json::to_string_pretty(&run).map_err(|e| HarnessError::Invalid(e.to_string()))?;
    fs::write(&summary_path, json).map_err(io(&summary_path))?;
    Ok(run)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedFailure {
    pub map: String,
    pub method: Method,
    pub seed: u64,
    pub error: String,
}

/// Completed runs plus the seeds that failed.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentReport {
    pub runs: Vec<RunLog>,
    pub failures: Vec<SeedFailure>,
}

impl ExperimentReport {
    pub fn is_success(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn metrics(&self) -> MetricTable {
        MetricTable::from_runs(&self.runs, &self.failures)
    }
}

fn run_jobs(jobs: Vec<(ExperimentConfig, u64, PathBuf)>) -> Result<ExperimentReport, HarnessError> {
    let pool = worker_pool()?;
    let results: Vec<_> = pool.install(|| {
        jobs.par_iter()
            .map(|(cfg, seed, dir)| {
                let r = run_seed(cfg, *seed, dir);
                if let Err(e) = &r {
                    log::error!(
                        "{} {} seed {seed} failed: {e}",
                        map_name(cfg.env.map_kind, cfg.env.grid_size),
                        cfg.method
                    );
                }
                (cfg, *seed, r)
            })
            .collect()
    });
    let mut report = ExperimentReport::default();
    for (cfg, seed, r) in results {
        match r {
            Ok(run) => report.runs.push(run),
            Err(e) => report.failures.push(SeedFailure {
                map: map_name(cfg.env.map_kind, cfg.env.grid_size),
                method: cfg.method,
                seed,
                error: e.to_string(),
            }),
        }
    }
    Ok(report)
}

/// Runs every seed of `cfg` into `<output_dir>/seed_<seed>`. A failing
/// seed is reported without stopping the others; an invalid config stops
/// everything before the first run.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    cfg.validate()?;
    let jobs = cfg
        .seeds
        .iter()
        .map(|&s| (cfg.clone(), s, seed_dir(&cfg.output_dir, s)))
        .collect();
    run_jobs(jobs)
}

/// Every (map, method, seed) combination as an independent job, written to
/// `<output_dir>/<map>/<method>/seed_<seed>`, followed by `metric.csv`.
pub fn sweep(
    base: &ExperimentConfig,
    methods: &[Method],
    maps: &[(MapKind, usize)],
) -> Result<ExperimentReport, HarnessError> {
    if methods.is_empty() || maps.is_empty() {
        return Err(HarnessError::Invalid(
            "a sweep needs at least one method and one map".into(),
        ));
    }
    let mut jobs = Vec::new();
    for &(kind, size) in maps {
        for &method in methods {
            let mut cfg = base.with_map(kind, size);
            cfg.method = method;
            cfg.output_dir = base
                .output_dir
                .join(map_name(kind, size))
                .join(method.name());
            cfg.validate()?;
            for &s in &cfg.seeds {
                jobs.push((cfg.clone(), s, seed_dir(&cfg.output_dir, s)));
            }
        }
    }
    let report = run_jobs(jobs)?;
    let path = base.output_dir.join("metric.csv");
    fs::write(&path, report.metrics().to_csv()).map_err(io(&path))?;
    Ok(report)
}
