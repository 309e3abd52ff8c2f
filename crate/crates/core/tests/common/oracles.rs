//! Direct evaluations of the reward and advantage definitions, written
//! without sharing code with the library.

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        let d = a[i] - b[i];
        s += d * d;
    }
    s
}

/// min over memory index i of dist²(obs_i, obs_next) / (dist(trj_i, trj_t) + eps).
pub fn deir_ratio(
    mem_obs: &[Vec<f64>],
    mem_trj: &[Vec<f64>],
    obs_next: &[f64],
    trj_t: &[f64],
    eps: f64,
) -> f64 {
    let mut best: Option<f64> = None;
    for i in 0..mem_obs.len() {
        let v = sq_dist(&mem_obs[i], obs_next) / (sq_dist(&mem_trj[i], trj_t).sqrt() + eps);
        best = Some(match best {
            Some(b) if b <= v => b,
            _ => v,
        });
    }
    best.unwrap_or(0.0)
}

pub fn novelty_difference(now: f64, prev: f64, alpha: f64) -> f64 {
    let d = now - alpha * prev;
    if d > 0.0 {
        d
    } else {
        0.0
    }
}

/// Teammate with the largest current novelty (first on ties), scored by its
/// novelty difference.
pub fn noveld_mutual(now: &[f64], prev: &[f64], alpha: f64, k: usize) -> f64 {
    let mut pick = None;
    for j in 0..now.len() {
        if j == k {
            continue;
        }
        match pick {
            None => pick = Some(j),
            Some(p) if now[j] > now[p] => pick = Some(j),
            _ => {}
        }
    }
    match pick {
        Some(j) => novelty_difference(now[j], prev[j], alpha),
        None => 0.0,
    }
}

/// Plain softmax, no shifting.
pub fn softmax(xs: &[f64], tau: f64) -> Vec<f64> {
    let e: Vec<f64> = xs.iter().map(|x| (x / tau).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|v| v / z).collect()
}

/// A_t = sum_{l >= 0} (gamma lambda)^l delta_{t+l}, truncated after the first
/// terminal step; delta uses a zero next value at terminals and `bootstrap`
/// after the last step.
pub fn gae_double_sum(
    r: &[f64],
    v: &[f64],
    done: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> Vec<f64> {
    let n = r.len();
    let mut out = Vec::with_capacity(n);
    for t in 0..n {
        let mut total = 0.0;
        let mut l = 0;
        loop {
            let s = t + l;
            let next = if done[s] {
                0.0
            } else if s + 1 < n {
                v[s + 1]
            } else {
                bootstrap
            };
            let delta = r[s] + gamma * next - v[s];
            total += (gamma * lambda).powi(l as i32) * delta;
            if done[s] || s + 1 == n {
                break;
            }
            l += 1;
        }
        out.push(total);
    }
    out
}
