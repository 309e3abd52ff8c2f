//! Advantage estimation, value normalisation and the clipped PPO objective.

use serde::{Deserialize, Serialize};

use super::policy::{log_softmax, NUM_ACTIONS};

/// Generalised advantage estimates for one agent's trajectory.
///
/// `dones[t]` marks that the episode ended after step `t`; the value after
/// the last step is `bootstrap`. Returns `(advantages, returns)`.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    assert!(
        values.len() == n && dones.len() == n,
        "gae inputs differ in length"
    );
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let next_v = if t + 1 < n { values[t + 1] } else { bootstrap };
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_v * live - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        adv[t] = next_adv;
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, ret)
}

/// Running value-target statistics with debiased exponential averages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueNorm {
    pub beta: f64,
    pub running_mean: f64,
    pub running_mean_sq: f64,
    pub debiasing: f64,
    pub min_var: f64,
}

impl ValueNorm {
    pub fn new(beta: f64) -> Self {
        Self {
            beta,
            running_mean: 0.0,
            running_mean_sq: 0.0,
            debiasing: 0.0,
            min_var: 1e-2,
        }
    }

    /// Debiased `(mean, var)`; identity statistics before the first update.
    pub fn stats(&self) -> (f64, f64) {
        if self.debiasing <= 0.0 {
            return (0.0, 1.0);
        }
        let mean = self.running_mean / self.debiasing;
        let mean_sq = self.running_mean_sq / self.debiasing;
        (mean, (mean_sq - mean * mean).max(self.min_var))
    }

    pub fn update(&mut self, batch: &[f64]) {
        if batch.is_empty() {
            return;
        }
        let n = batch.len() as f64;
        let mean = batch.iter().sum::<f64>() / n;
        let mean_sq = batch.iter().map(|x| x * x).sum::<f64>() / n;
        let b = self.beta;
        self.running_mean = b * self.running_mean + (1.0 - b) * mean;
        self.running_mean_sq = b * self.running_mean_sq + (1.0 - b) * mean_sq;
        self.debiasing = b * self.debiasing + (1.0 - b);
    }

    pub fn normalize(&self, x: f64) -> f64 {
        let (m, v) = self.stats();
        (x - m) / v.sqrt()
    }

    pub fn denormalize(&self, x: f64) -> f64 {
        let (m, v) = self.stats();
        x * v.sqrt() + m
    }
}

/// Per-sample pieces of the clipped surrogate.
#[derive(Debug, Clone, Copy)]
pub struct SurrogateTerms {
    /// `-min(rho A, clip(rho) A)`.
    pub loss: f64,
    pub entropy: f64,
    pub ratio: f64,
    pub clipped: bool,
    pub dlogits: [f32; NUM_ACTIONS],
}

/// Gradient of `weight * (surrogate_loss - ent_coef * entropy)` with respect
/// to the logits of one sample.
pub fn surrogate(
    logits: &[f32],
    action: usize,
    old_logp: f32,
    adv: f64,
    clip: f64,
    ent_coef: f64,
    weight: f64,
) -> SurrogateTerms {
    let lp = log_softmax(logits);
    let p: Vec<f64> = lp.iter().map(|&l| f64::from(l).exp()).collect();
    let entropy: f64 = -p
        .iter()
        .zip(&lp)
        .map(|(&p, &l)| if p > 0.0 { p * f64::from(l) } else { 0.0 })
        .sum::<f64>();
    let ratio = (f64::from(lp[action]) - f64::from(old_logp)).exp();
    let clipped_ratio = ratio.clamp(1.0 - clip, 1.0 + clip);
    let loss = -(ratio * adv).min(clipped_ratio * adv);
    // The unclipped branch carries gradient unless the min picked a clipped,
    // constant value.
    let active = if adv >= 0.0 {
        ratio <= 1.0 + clip
    } else {
        ratio >= 1.0 - clip
    };
    let dlogp = if active { -ratio * adv } else { 0.0 };
    let mut dlogits = [0.0f32; NUM_ACTIONS];
    for i in 0..NUM_ACTIONS {
        let onehot = if i == action { 1.0 } else { 0.0 };
        let lpi = f64::from(lp[i]);
        // d(-entropy)/dz_i = p_i (log p_i + H)
        let dneg_ent = if p[i] > 0.0 {
            p[i] * (lpi + entropy)
        } else {
            0.0
        };
        dlogits[i] = (weight * (dlogp * (onehot - p[i]) + ent_coef * dneg_ent)) as f32;
    }
    SurrogateTerms {
        loss,
        entropy,
        ratio,
        clipped: (ratio - 1.0).abs() > clip,
        dlogits,
    }
}

/// Shifts and scales `xs` in place to mean 0 and standard deviation 1.
pub fn standardize(xs: &mut [f64]) {
    if xs.is_empty() {
        return;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt().max(1e-8);
    xs.iter_mut().for_each(|x| *x = (*x - mean) / std);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gae_lambda_zero_is_td_error() {
        let r = [1.0, 0.0, 2.0];
        let v = [0.5, 0.2, 0.1];
        let (a, ret) = compute_gae(&r, &v, &[false, false, false], 0.7, 0.9, 0.0);
        assert!((a[0] - (1.0 + 0.9 * 0.2 - 0.5)).abs() < 1e-15);
        assert!((a[2] - (2.0 + 0.9 * 0.7 - 0.1)).abs() < 1e-15);
        assert!((ret[1] - (a[1] + 0.2)).abs() < 1e-15);
    }

    #[test]
    fn gae_monte_carlo_limit() {
        let r = [1.0, 2.0, 3.0, 4.0];
        let (a, _) = compute_gae(&r, &[0.0; 4], &[false, true, false, false], 5.0, 1.0, 1.0);
        assert_eq!(a, vec![3.0, 2.0, 12.0, 9.0]);
    }

    #[test]
    fn value_norm_round_trip_and_constant_targets() {
        let mut vn = ValueNorm::new(0.99);
        vn.update(&[1.0, 3.0, 8.0]);
        for x in [-3.0, 0.0, 2.5, 100.0] {
            assert!((vn.denormalize(vn.normalize(x)) - x).abs() < 1e-9);
        }
        let mut c = ValueNorm::new(0.99);
        for _ in 0..50 {
            c.update(&[4.0; 8]);
        }
        assert!(c.normalize(4.0).abs() < 1e-9);
    }

    #[test]
    fn value_norm_matches_recurrence() {
        let beta = 0.9;
        let mut vn = ValueNorm::new(beta);
        let batches = [vec![1.0, 2.0], vec![5.0], vec![-1.0, 0.0, 4.0]];
        let (mut m, mut s, mut d) = (0.0, 0.0, 0.0);
        for b in &batches {
            vn.update(b);
            let n = b.len() as f64;
            m = beta * m + (1.0 - beta) * b.iter().sum::<f64>() / n;
            s = beta * s + (1.0 - beta) * b.iter().map(|x| x * x).sum::<f64>() / n;
            d = beta * d + (1.0 - beta);
        }
        let (mean, var) = vn.stats();
        assert!((mean - m / d).abs() < 1e-12);
        assert!((var - (s / d - (m / d).powi(2))).abs() < 1e-12);
    }

    #[test]
    fn fresh_policy_ratio_is_one_and_unclipped() {
        let logits = [0.1, -0.3, 0.7, 0.0, 0.2, 0.0, -1.0];
        let lp = log_softmax(&logits);
        let t = surrogate(&logits, 2, lp[2], 1.3, 0.2, 0.0, 1.0);
        assert!((t.ratio - 1.0).abs() < 1e-6);
        assert!(!t.clipped);
        assert!((t.loss + 1.3).abs() < 1e-5);
    }

    #[test]
    fn fully_clipped_samples_have_no_policy_gradient() {
        let logits = [0.1, -0.3, 0.7, 0.0, 0.2, 0.0, -1.0];
        let lp = log_softmax(&logits);
        let old = lp[4] - std::f32::consts::LN_2;
        let t = surrogate(&logits, 4, old, 2.0, 0.2, 0.0, 1.0);
        assert!((t.ratio - 2.0).abs() < 1e-5);
        assert!(t.clipped);
        assert!(t.dlogits.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn surrogate_gradient_matches_finite_differences() {
        let logits = [0.1f32, -0.3, 0.7, 0.0, 0.2, 0.0, -1.0];
        let lp = log_softmax(&logits);
        let old = lp[1] + 0.05;
        let obj = |z: &[f32]| {
            let t = surrogate(z, 1, old, -0.8, 0.2, 0.03, 1.0);
            t.loss - 0.03 * t.entropy
        };
        let t = surrogate(&logits, 1, old, -0.8, 0.2, 0.03, 1.0);
        for i in 0..NUM_ACTIONS {
            let h = 1e-3;
            let mut up = logits;
            up[i] += h;
            let mut dn = logits;
            dn[i] -= h;
            let fd = (obj(&up) - obj(&dn)) / (2.0 * f64::from(h));
            assert!(
                (fd - f64::from(t.dlogits[i])).abs() < 1e-3,
                "{i}: {fd} vs {}",
                t.dlogits[i]
            );
        }
    }

    #[test]
    fn standardize_centres_and_scales() {
        let mut xs = vec![1.0, 2.0, 3.0, 4.0];
        standardize(&mut xs);
        assert!(xs.iter().sum::<f64>().abs() < 1e-12);
        assert!((xs.iter().map(|x| x * x).sum::<f64>() / 4.0 - 1.0).abs() < 1e-12);
    }
}
