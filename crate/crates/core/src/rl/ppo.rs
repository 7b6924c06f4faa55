//! Clipped-surrogate policy optimisation over the joint impulse policy.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::net::{clip_grad_norm, Adam};
use super::obs::LIQUIDATION_FEE;
use super::policy::{entropy_grad, log_prob_grad, ActionMask, OutputGrad, PolicyParams};
use super::RlError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub clip: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    pub sil_weight: f64,
    pub sil_value_coef: f64,
    pub sil_batches: usize,
    pub sil_capacity: usize,
    /// Cost per intervention, in currency.
    pub c_int: f64,
    pub fee: f64,
    /// Rewards are multiplied by this before advantage estimation.
    pub reward_scale: f64,
    /// Episodes collected per update.
    pub episodes_per_update: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip: 0.2,
            gamma: 0.99,
            lambda: 0.95,
            learning_rate: 3e-4,
            epochs: 4,
            minibatch: 256,
            entropy_coef: 0.01,
            value_coef: 0.5,
            max_grad_norm: 0.5,
            sil_weight: 1.0,
            sil_value_coef: 0.01,
            sil_batches: 4,
            sil_capacity: 50_000,
            // 1e-5 of a 10.00 notional unit
            c_int: 1e-4,
            fee: LIQUIDATION_FEE,
            reward_scale: 100.0,
            episodes_per_update: 4,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), RlError> {
        let bad = |m: &str| Err(RlError::Config(m.to_string()));
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return bad("clip must lie in (0, 1)");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) || !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return bad("gamma and lambda must lie in (0, 1]");
        }
        if self.fee != LIQUIDATION_FEE {
            return bad("liquidation fee is fixed at 1 bps");
        }
        if self.epochs == 0 || self.minibatch == 0 || self.episodes_per_update == 0 {
            return bad("epochs, minibatch and episodes_per_update must be positive");
        }
        if !(self.learning_rate > 0.0) || !(self.reward_scale > 0.0) {
            return bad("learning rate and reward scale must be positive");
        }
        Ok(())
    }
}

/// One decision point of a rollout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub input: Vec<f64>,
    pub mask: ActionMask,
    pub intervene: bool,
    pub action: usize,
    pub log_prob: f64,
    pub value: f64,
    pub reward: f64,
    pub done: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<Step>,
}

impl Trajectory {
    pub fn episode_return(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    pub fn validate(&self) -> Result<(), RlError> {
        if self.steps.iter().any(|s| !s.reward.is_finite() || !s.value.is_finite() || !s.log_prob.is_finite()) {
            return Err(RlError::NonFinite("trajectory"));
        }
        Ok(())
    }

    /// Discounted reward-to-go at every step, with rewards scaled by `scale`.
    pub fn returns(&self, gamma: f64, scale: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.steps.len()];
        let mut acc = 0.0;
        for (i, s) in self.steps.iter().enumerate().rev() {
            if s.done {
                acc = 0.0;
            }
            acc = s.reward * scale + gamma * acc;
            out[i] = acc;
        }
        out
    }
}

/// Generalised advantage estimation. Returns `(advantages, returns)`; a
/// `done` step does not bootstrap.
pub fn gae(rewards: &[f64], values: &[f64], dones: &[bool], gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let (next_v, carry) = if dones[t] || t + 1 == n { (0.0, 0.0) } else { (values[t + 1], next_adv) };
        let delta = rewards[t] + gamma * next_v - values[t];
        adv[t] = delta + gamma * lambda * carry;
        next_adv = adv[t];
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, ret)
}

/// `min(r·A, clip(r, 1−ε, 1+ε)·A)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, eps: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - eps, 1.0 + eps) * advantage)
}

/// A training sample with its advantage target.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: Vec<f64>,
    pub mask: ActionMask,
    pub intervene: bool,
    pub action: usize,
    pub old_log_prob: f64,
    pub advantage: f64,
    pub ret: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub total: f64,
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub ratio_sum: f64,
    pub clipped: usize,
    pub n: usize,
}

impl LossParts {
    fn add(mut self, o: LossParts) -> Self {
        self.total += o.total;
        self.policy += o.policy;
        self.value += o.value;
        self.entropy += o.entropy;
        self.ratio_sum += o.ratio_sum;
        self.clipped += o.clipped;
        self.n += o.n;
        self
    }
}

const CHUNK: usize = 32;

/// Mean PPO loss over `batch` and its gradient w.r.t. `params`.
pub fn ppo_loss_and_grad(policy: &PolicyParams, params: &[f64], batch: &[Sample], cfg: &PpoConfig) -> (LossParts, Vec<f64>) {
    let n = batch.len().max(1) as f64;
    let parts: Vec<(LossParts, Vec<f64>)> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut grad = vec![0.0; params.len()];
            let mut lp = LossParts::default();
            for s in chunk {
                let fwd = policy.forward_with(params, &s.input, &s.mask);
                let e = &fwd.eval;
                let logp = e.log_prob(s.intervene, s.action);
                let ratio = (logp - s.old_log_prob).exp();
                let unclipped = ratio * s.advantage;
                let clipped = ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip) * s.advantage;
                let surrogate = unclipped.min(clipped);
                let ent = e.entropy();
                let verr = e.value - s.ret;
                let loss = -surrogate + cfg.value_coef * 0.5 * verr * verr - cfg.entropy_coef * ent;
                lp = lp.add(LossParts {
                    total: loss / n,
                    policy: -surrogate / n,
                    value: 0.5 * verr * verr / n,
                    entropy: ent / n,
                    ratio_sum: ratio,
                    clipped: usize::from((ratio - 1.0).abs() > cfg.clip),
                    n: 1,
                });
                let dlogp = if unclipped <= clipped { -s.advantage * ratio } else { 0.0 };
                let gl = log_prob_grad(e, s.intervene, s.action, &s.mask);
                let ge = entropy_grad(e, &s.mask);
                let mut g = OutputGrad {
                    intervene_logit: dlogp * gl.intervene_logit - cfg.entropy_coef * ge.intervene_logit,
                    logits: [0.0; 5],
                    value: cfg.value_coef * verr,
                };
                for k in 0..5 {
                    g.logits[k] = dlogp * gl.logits[k] - cfg.entropy_coef * ge.logits[k];
                }
                g.intervene_logit /= n;
                g.logits.iter_mut().for_each(|v| *v /= n);
                g.value /= n;
                policy.backward_with(params, &fwd, &g, &mut grad);
            }
            (lp, grad)
        })
        .collect();
    let mut grad = vec![0.0; params.len()];
    let mut total = LossParts::default();
    for (lp, g) in parts {
        total = total.add(lp);
        grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
    }
    (total, grad)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PpoStats {
    pub samples: usize,
    pub mean_ratio: f64,
    pub clip_fraction: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub grad_norm: f64,
}

/// Flattens trajectories into samples with GAE targets (scaled rewards) and
/// normalised advantages.
pub fn build_samples(trajectories: &[Trajectory], cfg: &PpoConfig) -> Vec<Sample> {
    let mut out = Vec::new();
    for tr in trajectories {
        let rewards: Vec<f64> = tr.steps.iter().map(|s| s.reward * cfg.reward_scale).collect();
        let values: Vec<f64> = tr.steps.iter().map(|s| s.value).collect();
        let dones: Vec<bool> = tr.steps.iter().map(|s| s.done).collect();
        let (adv, ret) = gae(&rewards, &values, &dones, cfg.gamma, cfg.lambda);
        for (i, s) in tr.steps.iter().enumerate() {
            out.push(Sample {
                input: s.input.clone(),
                mask: s.mask,
                intervene: s.intervene,
                action: s.action,
                old_log_prob: s.log_prob,
                advantage: adv[i],
                ret: ret[i],
            });
        }
    }
    let n = out.len() as f64;
    if out.len() > 1 {
        let m = out.iter().map(|s| s.advantage).sum::<f64>() / n;
        let sd = (out.iter().map(|s| (s.advantage - m).powi(2)).sum::<f64>() / n).sqrt();
        // degenerate advantages: leave them as they are
        if sd > 1e-8 {
            out.iter_mut().for_each(|s| s.advantage = (s.advantage - m) / sd);
        }
    }
    out
}

/// Runs the configured epochs of minibatch updates.
pub fn ppo_update<R: Rng + ?Sized>(
    policy: &mut PolicyParams,
    adam: &mut Adam,
    trajectories: &[Trajectory],
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<PpoStats, RlError> {
    if trajectories.is_empty() || trajectories.iter().all(|t| t.steps.is_empty()) {
        return Err(RlError::Config("ppo_update needs at least one non-empty trajectory".into()));
    }
    for t in trajectories {
        t.validate()?;
    }
    let samples = build_samples(trajectories, cfg);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut acc = LossParts::default();
    let mut batches = 0usize;
    let mut norm_sum = 0.0;
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for idx in order.chunks(cfg.minibatch) {
            let batch: Vec<Sample> = idx.iter().map(|&i| samples[i].clone()).collect();
            let (lp, mut grad) = ppo_loss_and_grad(policy, &policy.params, &batch, cfg);
            if !lp.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(RlError::NonFinite("ppo loss"));
            }
            norm_sum += clip_grad_norm(&mut grad, cfg.max_grad_norm);
            adam.step(&mut policy.params, &grad);
            acc = acc.add(lp);
            batches += 1;
        }
    }
    let b = batches.max(1) as f64;
    Ok(PpoStats {
        samples: samples.len(),
        mean_ratio: acc.ratio_sum / acc.n.max(1) as f64,
        clip_fraction: acc.clipped as f64 / acc.n.max(1) as f64,
        policy_loss: acc.policy / b,
        value_loss: acc.value / b,
        entropy: acc.entropy / b,
        grad_norm: norm_sum / b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rl::obs::ObsNorm;
    use crate::rl::policy::Architecture;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn surrogate_hand_cases() {
        assert_eq!(clipped_surrogate(1.0, 0.7, 0.2), 0.7);
        assert_eq!(clipped_surrogate(1.0, -2.5, 0.2), -2.5);
        assert_eq!(clipped_surrogate(1.5, 1.0, 0.2), 1.2);
        // negative advantage keeps the pessimistic unclipped branch
        assert_eq!(clipped_surrogate(1.5, -1.0, 0.2), -1.5);
    }

    #[test]
    fn gae_matches_hand_recursion() {
        let r = [1.0, 0.0, 2.0];
        let v = [0.5, 0.2, 0.1];
        let d = [false, false, true];
        let (g, l) = (0.9, 0.8);
        let (adv, ret) = gae(&r, &v, &d, g, l);
        let d2 = 2.0 - 0.1;
        let d1 = 0.0 + g * 0.1 - 0.2;
        let d0 = 1.0 + g * 0.2 - 0.5;
        let a1 = d1 + g * l * d2;
        let a0 = d0 + g * l * a1;
        assert!((adv[2] - d2).abs() < 1e-12 && (adv[1] - a1).abs() < 1e-12 && (adv[0] - a0).abs() < 1e-12);
        assert!((ret[0] - (a0 + 0.5)).abs() < 1e-12);
    }

    #[test]
    fn lambda_one_gives_monte_carlo_returns() {
        let r = [1.0, -1.0, 3.0];
        let (_, ret) = gae(&r, &[0.3, 0.7, -0.2], &[false, false, true], 0.5, 1.0);
        assert!((ret[0] - (1.0 - 0.5 + 0.75)).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(PpoConfig::default().validate().is_ok());
        assert!(PpoConfig { clip: 1.0, ..Default::default() }.validate().is_err());
        assert!(PpoConfig { gamma: 0.0, ..Default::default() }.validate().is_err());
        assert!(PpoConfig { fee: 2e-4, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn update_moves_towards_rewarded_action() {
        // one state; intervening with action 0 pays, everything else costs
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut pol = PolicyParams::init(Architecture::new(3, vec![8]), ObsNorm::default(), false, &mut rng);
        let mut adam = Adam::new(pol.len(), 1e-2);
        let cfg = PpoConfig { minibatch: 64, reward_scale: 1.0, entropy_coef: 0.0, ..Default::default() };
        let x = vec![0.5, -0.5, 1.0];
        let mask = [true; 5];
        let before = pol.evaluate(&x, &mask).unwrap();
        for _ in 0..30 {
            let mut steps = Vec::new();
            for _ in 0..128 {
                let e = pol.evaluate(&x, &mask).unwrap();
                let (d, a) = super::super::policy::sample_action(&e, &mut rng);
                let reward = if d && a == 0 { 1.0 } else { -0.1 };
                steps.push(Step { input: x.clone(), mask, intervene: d, action: a, log_prob: e.log_prob(d, a), value: e.value, reward, done: true });
            }
            ppo_update(&mut pol, &mut adam, &[Trajectory { steps }], &cfg, &mut rng).unwrap();
        }
        let after = pol.evaluate(&x, &mask).unwrap();
        assert!(after.p_intervene * after.probs[0] > before.p_intervene * before.probs[0] + 0.3, "{before:?} {after:?}");
    }
}
