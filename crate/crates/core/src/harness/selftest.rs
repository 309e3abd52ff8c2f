//! Fast runtime checks of the core invariants, for `mirlab selftest`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{generate_map, team_reward, Action, EnvConfig, MapKind, Replay};
use crate::mappo::{compute_gae, Method, Trainer, TrainerConfig};
use crate::nn::{Activation, LayerSpec, Net, NetSpec, Tensor};
use crate::rewards::mix_weights;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    /// `Err` holds the first violation found.
    pub outcome: Result<(), String>,
}

type Check = fn() -> Result<(), String>;

const CHECKS: &[(&str, Check)] = &[
    ("team reward formula", team_reward_formula),
    ("mixing weights", mixing_weights),
    ("gae against direct sums", gae_direct_sums),
    ("gradient against finite differences", gradient_check),
    ("replay determinism", replay_determinism),
    ("no_model reward gating", no_model_gating),
];

pub fn run_selftest() -> Vec<CheckResult> {
    CHECKS
        .iter()
        .map(|&(name, f)| CheckResult { name, outcome: f() })
        .collect()
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn team_reward_formula() -> Result<(), String> {
    for t_max in [1u32, 7, 144, 1024] {
        for t in 1..=t_max {
            let r = team_reward(true, t, t_max).map_err(|e| e.to_string())?;
            ensure(r == 2.0 - f64::from(t) / f64::from(t_max), || {
                format!("t={t} T={t_max}: {r}")
            })?;
            ensure(team_reward(false, t, t_max) == Ok(0.0), || {
                format!("t={t}: nonzero without completion")
            })?;
        }
    }
    Ok(())
}

fn mixing_weights() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..2000 {
        let k = [1, 2, 3, 8][rng.random_range(0..4)];
        let r: Vec<f64> = (0..k).map(|_| rng.random_range(-5.0..5.0)).collect();
        let c = rng.random_range(-50.0..50.0);
        let w = mix_weights(&r, 1.0);
        let shifted: Vec<f64> = r.iter().map(|x| x + c).collect();
        let ws = mix_weights(&shifted, 1.0);
        ensure((w.iter().sum::<f64>() - 1.0).abs() < 1e-9, || {
            format!("weights {w:?} do not sum to 1")
        })?;
        ensure(w.iter().zip(&ws).all(|(a, b)| (a - b).abs() < 1e-9), || {
            format!("shift by {c} changed {w:?} to {ws:?}")
        })?;
    }
    Ok(())
}

fn gae_direct_sums() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..200 {
        let n = rng.random_range(5..=20);
        let r: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let d: Vec<bool> = (0..n).map(|_| rng.random_bool(0.2)).collect();
        let (boot, g, l) = (rng.random_range(-1.0..1.0), 0.99, 0.95);
        let (adv, _) = compute_gae(&r, &v, &d, boot, g, l);
        for t in 0..n {
            // A_t = sum_l (g l)^l delta_{t+l}, stopping after the first done.
            let mut want = 0.0;
            for j in t..n {
                let next = if d[j] {
                    0.0
                } else if j + 1 < n {
                    v[j + 1]
                } else {
                    boot
                };
                let delta = r[j] + g * next - v[j];
                want += (g * l).powi((j - t) as i32) * delta;
                if d[j] {
                    break;
                }
            }
            ensure((adv[t] - want).abs() < 1e-10, || {
                format!("step {t}: {} vs {want}", adv[t])
            })?;
        }
    }
    Ok(())
}

fn gradient_check() -> Result<(), String> {
    let spec = NetSpec::new(
        vec![4],
        vec![
            LayerSpec::Dense {
                inputs: 4,
                outputs: 5,
                activation: Activation::Tanh,
            },
            LayerSpec::Gru {
                inputs: 5,
                hidden: 3,
            },
            LayerSpec::Dense {
                inputs: 3,
                outputs: 2,
                activation: Activation::Linear,
            },
        ],
    );
    let mut net = Net::<f64>::new(spec, 5).map_err(|e| e.to_string())?;
    let x = Tensor::from_fn(vec![2, 4], |i| ((i * 7) % 5) as f64 * 0.3 - 0.6);
    let h = Tensor::from_fn(vec![2, 3], |i| 0.1 * i as f64 - 0.2);
    let w = [0.7, -1.1, 0.4, 0.9];
    let loss = |n: &Net<f64>| -> f64 {
        let f = n.forward(&x, Some(&h)).unwrap();
        f.output.data().iter().zip(&w).map(|(a, b)| a * b).sum()
    };
    let f = net.forward(&x, Some(&h)).map_err(|e| e.to_string())?;
    let og = Tensor::new(vec![2, 2], w.to_vec()).map_err(|e| e.to_string())?;
    let g = net
        .backward(&f.cache, &og, None)
        .map_err(|e| e.to_string())?
        .params
        .flatten();
    let n = g.len();
    for i in 0..n {
        let eps = 1e-6;
        let orig = net.params().flatten()[i];
        set_flat(&mut net, i, orig + eps);
        let up = loss(&net);
        set_flat(&mut net, i, orig - eps);
        let down = loss(&net);
        set_flat(&mut net, i, orig);
        let num = (up - down) / (2.0 * eps);
        let rel = (g[i] - num).abs() / g[i].abs().max(num.abs()).max(1e-6);
        ensure(rel < 1e-4, || {
            format!("parameter {i}: analytic {} numeric {num}", g[i])
        })?;
    }
    Ok(())
}

fn set_flat(net: &mut Net<f64>, mut i: usize, v: f64) {
    for t in net.params_mut().tensors_mut() {
        if i < t.len() {
            t.data_mut()[i] = v;
            return;
        }
        i -= t.len();
    }
}

fn replay_determinism() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for kind in MapKind::ALL {
        for _ in 0..10 {
            let cfg = EnvConfig::new(kind, kind.smallest_size(), rng.random());
            let mut state = generate_map(&cfg).map_err(|e| e.to_string())?;
            let mut replay = Replay::new(&cfg);
            while !state.is_terminated() && replay.steps.len() < 60 {
                let acts: Vec<Action> = (0..cfg.num_agents)
                    .map(|_| Action::ALL[rng.random_range(0..Action::COUNT)])
                    .collect();
                state.advance(&acts).map_err(|e| e.to_string())?;
                replay.steps.push(acts);
            }
            let parsed = Replay::parse(&replay.to_text()).map_err(|e| e.to_string())?;
            let frames = parsed.simulate(cfg.view_size).map_err(|e| e.to_string())?;
            ensure(frames.last().is_some_and(|f| f.state == state), || {
                format!("{kind} seed {}: replay diverged", cfg.seed)
            })?;
        }
    }
    Ok(())
}

fn no_model_gating() -> Result<(), String> {
    let mut c = TrainerConfig::new(EnvConfig::new(MapKind::DoorKeyB, 6, 0), Method::NoModel);
    c.train.horizon = 32;
    c.train.num_envs = 2;
    let mut t = Trainer::new(c, 1).map_err(|e| e.to_string())?;
    let b = t.collect_rollout().map_err(|e| e.to_string())?;
    ensure(
        b.rewards.iter().all(|r| r.r_int == 0.0 && r.r_mut == 0.0),
        || "no_model rollout has intrinsic rewards".into(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_check_passes() {
        for r in run_selftest() {
            assert!(r.outcome.is_ok(), "{}: {:?}", r.name, r.outcome);
        }
    }
}
