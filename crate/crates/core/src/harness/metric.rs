//! Mean best episode reward and the map × method result grid.
//!
//! A seed's best is the largest windowed mean episode reward it reached
//! during training (0 if it never reached more). The metric of a cell is the
//! mean of its seeds' bests; seeds without a completed run are listed as
//! missing and never imputed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::run::SeedFailure;
use super::HarnessError;
use crate::env::{map_name, parse_map_name};
use crate::mappo::Method;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub update: u64,
    pub env_steps: u64,
    /// Episodes finished so far.
    pub episodes: u64,
    /// Mean reward of the most recent `eval_window` episodes.
    pub mean_reward: f64,
}

/// Per-seed training record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub map: String,
    pub method: Method,
    pub seed: u64,
    pub completed: bool,
    pub env_steps: u64,
    pub episodes: u64,
    pub points: Vec<EvalPoint>,
    /// Highest single-episode team reward seen.
    pub best_episode_reward: f64,
}

impl RunLog {
    pub(crate) fn push_point(
        &mut self,
        update: u64,
        env_steps: u64,
        episodes: u64,
        mean_reward: f64,
    ) {
        self.points.push(EvalPoint {
            update,
            env_steps,
            episodes,
            mean_reward,
        });
    }

    /// Best windowed mean, floored at 0.
    pub fn best(&self) -> f64 {
        self.points
            .iter()
            .map(|p| p.mean_reward)
            .fold(0.0, f64::max)
    }
}

/// Mean over seeds of each seed's best windowed mean episode reward.
pub fn mean_best_episode_reward(logs: &[RunLog]) -> Result<f64, HarnessError> {
    if logs.is_empty() {
        return Err(HarnessError::Usage(
            "mean best episode reward needs at least one run".into(),
        ));
    }
    Ok(logs.iter().map(RunLog::best).sum::<f64>() / logs.len() as f64)
}

/// Windowed means of an episode-reward stream: entry `i` averages the
/// `window` episodes ending at `i + window - 1`.
pub fn windowed_means(rewards: &[f64], window: usize) -> Vec<f64> {
    if window == 0 || rewards.len() < window {
        return Vec::new();
    }
    let mut sum: f64 = rewards[..window].iter().sum();
    let mut out = vec![sum / window as f64];
    for i in window..rewards.len() {
        sum += rewards[i] - rewards[i - window];
        out.push(sum / window as f64);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub map: String,
    pub method: Method,
    /// `None` when no seed completed.
    pub mean_best: Option<f64>,
    pub seed_bests: Vec<(u64, f64)>,
    pub missing: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricTable {
    pub rows: Vec<MetricRow>,
}

type Cells = BTreeMap<(String, Method), (Vec<(u64, f64)>, Vec<u64>)>;

impl MetricTable {
    pub fn from_runs(runs: &[RunLog], failures: &[SeedFailure]) -> Self {
        let mut cells = Cells::new();
        for r in runs {
            let cell = cells.entry((r.map.clone(), r.method)).or_default();
            if r.completed {
                cell.0.push((r.seed, r.best()));
            } else {
                cell.1.push(r.seed);
            }
        }
        for f in failures {
            cells
                .entry((f.map.clone(), f.method))
                .or_default()
                .1
                .push(f.seed);
        }
        Self::from_cells(cells)
    }

    fn from_cells(cells: Cells) -> Self {
        let rows = cells
            .into_iter()
            .map(|((map, method), (mut bests, mut missing))| {
                bests.sort_by_key(|b| b.0);
                missing.sort_unstable();
                let mean_best = (!bests.is_empty())
                    .then(|| bests.iter().map(|b| b.1).sum::<f64>() / bests.len() as f64);
                MetricRow {
                    map,
                    method,
                    mean_best,
                    seed_bests: bests,
                    missing,
                }
            })
            .collect();
        Self { rows }
    }

    /// Scans `dir` recursively for `seed_*` run directories. A run counts
    /// once its `summary.json` says it completed; otherwise it is missing.
    pub fn from_dir(dir: &Path) -> Result<Self, HarnessError> {
        let mut cells = Cells::new();
        let mut stack = vec![dir.to_path_buf()];
        let read_err = |p: &Path, e: std::io::Error| HarnessError::Io {
            path: p.to_path_buf(),
            message: e.to_string(),
        };
        while let Some(d) = stack.pop() {
            let entries = fs::read_dir(&d).map_err(|e| read_err(&d, e))?;
            for entry in entries {
                let p = entry.map_err(|e| read_err(&d, e))?.path();
                if !p.is_dir() {
                    continue;
                }
                let is_seed = p
                    .file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("seed_"));
                if !is_seed {
                    stack.push(p);
                    continue;
                }
                let summary = p.join("summary.json");
                let run: Option<RunLog> = fs::read_to_string(&summary)
                    .ok()
                    .map(|s| serde_json::from_str(&s))
                    .transpose()
                    .map_err(|e| HarnessError::Invalid(format!("{}: {e}", summary.display())))?;
                match run {
                    Some(r) if r.completed => {
                        cells
                            .entry((r.map.clone(), r.method))
                            .or_default()
                            .0
                            .push((r.seed, r.best()));
                    }
                    _ => {
                        let cfg_path = p.join("config.txt");
                        let Ok(text) = fs::read_to_string(&cfg_path) else {
                            log::warn!(
                                "{} has neither a summary nor a config; skipped",
                                p.display()
                            );
                            continue;
                        };
                        let cfg = ExperimentConfig::parse(&text).map_err(|e| {
                            HarnessError::Invalid(format!("{}: {e}", cfg_path.display()))
                        })?;
                        let key = (map_name(cfg.env.map_kind, cfg.env.grid_size), cfg.method);
                        cells.entry(key).or_default().1.extend(cfg.seeds);
                    }
                }
            }
        }
        Ok(Self::from_cells(cells))
    }

    pub fn get(&self, map: &str, method: Method) -> Option<&MetricRow> {
        self.rows
            .iter()
            .find(|r| r.map == map && r.method == method)
    }

    /// One row per map, one column per method; empty cells were not run or
    /// have no completed seed.
    pub fn to_csv(&self) -> String {
        let mut maps: Vec<&str> = self.rows.iter().map(|r| r.map.as_str()).collect();
        maps.sort_by_key(|m| parse_map_name(m).ok());
        maps.dedup();
        let mut out = String::from("map");
        for m in Method::ALL {
            let _ = write!(out, ",{m}");
        }
        out.push('\n');
        for map in maps {
            out.push_str(map);
            for m in Method::ALL {
                let cell = self.get(map, m).and_then(|r| r.mean_best);
                let _ = write!(
                    out,
                    ",{}",
                    cell.map_or_else(String::new, |v| format!("{v:.4}"))
                );
            }
            out.push('\n');
        }
        out
    }

    /// Long form: one line per (map, method, seed) with its status.
    pub fn details_csv(&self) -> String {
        let mut out = String::from("map,method,seed,best,status\n");
        for r in &self.rows {
            for (s, b) in &r.seed_bests {
                let _ = writeln!(out, "{},{},{s},{b:.4},completed", r.map, r.method);
            }
            for s in &r.missing {
                let _ = writeln!(out, "{},{},{s},,missing", r.map, r.method);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(seed: u64, means: &[f64]) -> RunLog {
        let mut r = RunLog {
            map: "DoorKeyB6x6".into(),
            method: Method::NoModel,
            seed,
            completed: true,
            env_steps: 0,
            episodes: 0,
            points: Vec::new(),
            best_episode_reward: 0.0,
        };
        for (i, &m) in means.iter().enumerate() {
            r.push_point(i as u64, 0, 0, m);
        }
        r
    }

    #[test]
    fn metric_examples() {
        assert_eq!(
            mean_best_episode_reward(&[run(1, &[0.2, 1.0]), run(2, &[2.0, 0.5])]).unwrap(),
            1.5
        );
        assert_eq!(mean_best_episode_reward(&[run(1, &[0.8])]).unwrap(), 0.8);
        assert_eq!(
            mean_best_episode_reward(&[run(1, &[0.0, 0.0]), run(2, &[])]).unwrap(),
            0.0
        );
        assert!(mean_best_episode_reward(&[]).is_err());
    }

    #[test]
    fn windowed_means_slide() {
        assert_eq!(
            windowed_means(&[1.0, 2.0, 3.0, 4.0], 2),
            vec![1.5, 2.5, 3.5]
        );
        assert!(windowed_means(&[1.0], 2).is_empty());
    }

    #[test]
    fn table_reports_missing_seeds() {
        let mut a = run(1, &[1.0]);
        a.method = Method::Deir;
        let fail = SeedFailure {
            map: "DoorKeyB6x6".into(),
            method: Method::Deir,
            seed: 2,
            error: "disk full".into(),
        };
        let t = MetricTable::from_runs(&[a, run(3, &[0.5])], &[fail]);
        let deir = t.get("DoorKeyB6x6", Method::Deir).unwrap();
        assert_eq!(deir.mean_best, Some(1.0));
        assert_eq!(deir.missing, vec![2]);
        let csv = t.to_csv();
        assert_eq!(
            csv.lines().next().unwrap(),
            "map,no_model,rnd,noveld,noveld_mir,deir,deir_mir"
        );
        assert_eq!(csv.lines().nth(1).unwrap(), "DoorKeyB6x6,0.5000,,,,1.0000,");
        assert!(t.details_csv().contains("DoorKeyB6x6,deir,2,,missing"));
    }
}
