//! Self-imitation: replay past decisions whose return beat the value estimate.

use std::collections::BTreeMap;

use ordered_float::OrderedFloat;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::net::{clip_grad_norm, Adam};
use super::policy::{log_prob_grad, ActionMask, OutputGrad, PolicyParams};
use super::ppo::{PpoConfig, Trajectory};
use super::RlError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SilEntry {
    pub input: Vec<f64>,
    pub mask: ActionMask,
    pub intervene: bool,
    pub action: usize,
    /// Discounted return (scaled units).
    pub ret: f64,
    pub value_at_insert: f64,
}

impl SilEntry {
    pub fn priority(&self) -> f64 {
        (self.ret - self.value_at_insert).max(0.0)
    }
}

/// Capacity-bounded store ordered by priority `(R − V)₊`; the lowest priority
/// is evicted first.
#[derive(Debug, Clone, Default)]
pub struct SilBuffer {
    capacity: usize,
    entries: BTreeMap<(OrderedFloat<f64>, u64), SilEntry>,
    seq: u64,
}

impl SilBuffer {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, entries: BTreeMap::new(), seq: 0 }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn min_priority(&self) -> Option<f64> {
        self.entries.keys().next().map(|k| k.0 .0)
    }

    pub fn entries(&self) -> impl Iterator<Item = &SilEntry> {
        self.entries.values()
    }

    /// Admits the entry iff `R > V` and it outranks the weakest entry of a
    /// full buffer. Returns whether it was stored.
    pub fn insert(&mut self, entry: SilEntry) -> bool {
        if !(entry.ret > entry.value_at_insert) || self.capacity == 0 || !entry.ret.is_finite() {
            return false;
        }
        let pr = entry.priority();
        if self.entries.len() >= self.capacity {
            match self.min_priority() {
                Some(min) if pr > min => {
                    self.entries.pop_first();
                }
                _ => return false,
            }
        }
        assert!(entry.ret > entry.value_at_insert, "self-imitation admission invariant");
        self.seq += 1;
        self.entries.insert((OrderedFloat(pr), self.seq), entry);
        true
    }

    /// Offers every step of a finished rollout; returns how many were admitted.
    pub fn add_trajectory(&mut self, tr: &Trajectory, gamma: f64, scale: f64) -> usize {
        let rets = tr.returns(gamma, scale);
        tr.steps
            .iter()
            .zip(rets)
            .filter(|(s, r)| {
                self.insert(SilEntry {
                    input: s.input.clone(),
                    mask: s.mask,
                    intervene: s.intervene,
                    action: s.action,
                    ret: *r,
                    value_at_insert: s.value,
                })
            })
            .count()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SilStats {
    pub batches: usize,
    /// Sampled entries whose current `(R − V)₊` was positive.
    pub contributing: usize,
    pub loss: f64,
}

/// SIL objective with the policy-term weights held fixed:
/// `mean(−w·log π + c_v · ½ (R − V)₊²)`. Used as a finite-difference oracle.
pub fn sil_objective(policy: &PolicyParams, params: &[f64], batch: &[&SilEntry], fixed_weights: &[f64], cfg: &PpoConfig) -> f64 {
    let n = batch.len().max(1) as f64;
    batch
        .iter()
        .zip(fixed_weights)
        .map(|(e, w)| {
            let f = policy.forward_with(params, &e.input, &e.mask);
            let adv = (e.ret - f.eval.value).max(0.0);
            -w * f.eval.log_prob(e.intervene, e.action) + cfg.sil_value_coef * 0.5 * adv * adv
        })
        .sum::<f64>()
        * cfg.sil_weight
        / n
}

/// Loss, gradient and the per-entry clipped advantages `(R − V)₊`.
pub fn sil_loss_and_grad(policy: &PolicyParams, params: &[f64], batch: &[&SilEntry], cfg: &PpoConfig) -> (f64, Vec<f64>, Vec<f64>) {
    let n = batch.len().max(1) as f64;
    let parts: Vec<(f64, Vec<f64>, Vec<f64>)> = batch
        .par_chunks(32)
        .map(|chunk| {
            let mut grad = vec![0.0; params.len()];
            let mut loss = 0.0;
            let mut advs = Vec::with_capacity(chunk.len());
            for e in chunk {
                let fwd = policy.forward_with(params, &e.input, &e.mask);
                let adv = (e.ret - fwd.eval.value).max(0.0);
                advs.push(adv);
                if adv == 0.0 {
                    continue;
                }
                let logp = fwd.eval.log_prob(e.intervene, e.action);
                loss += (-adv * logp + cfg.sil_value_coef * 0.5 * adv * adv) * cfg.sil_weight / n;
                let gl = log_prob_grad(&fwd.eval, e.intervene, e.action, &e.mask);
                let s = cfg.sil_weight / n;
                let mut g = OutputGrad { intervene_logit: -adv * gl.intervene_logit * s, logits: [0.0; 5], value: -cfg.sil_value_coef * adv * s };
                for k in 0..5 {
                    g.logits[k] = -adv * gl.logits[k] * s;
                }
                policy.backward_with(params, &fwd, &g, &mut grad);
            }
            (loss, grad, advs)
        })
        .collect();
    let mut grad = vec![0.0; params.len()];
    let mut loss = 0.0;
    let mut advs = Vec::with_capacity(batch.len());
    for (l, g, a) in parts {
        loss += l;
        grad.iter_mut().zip(g).for_each(|(x, y)| *x += y);
        advs.extend(a);
    }
    (loss, grad, advs)
}

/// A few minibatch steps on uniformly sampled buffer entries. Empty buffer: no-op.
pub fn sil_update<R: Rng + ?Sized>(
    policy: &mut PolicyParams,
    adam: &mut Adam,
    buffer: &SilBuffer,
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<SilStats, RlError> {
    let mut stats = SilStats::default();
    if buffer.is_empty() || cfg.sil_weight == 0.0 {
        return Ok(stats);
    }
    let all: Vec<&SilEntry> = buffer.entries().collect();
    for _ in 0..cfg.sil_batches {
        let batch: Vec<&SilEntry> = (0..cfg.minibatch.min(all.len())).map(|_| all[rng.random_range(0..all.len())]).collect();
        let (loss, mut grad, advs) = sil_loss_and_grad(policy, &policy.params, &batch, cfg);
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(RlError::NonFinite("sil loss"));
        }
        stats.contributing += advs.iter().filter(|a| **a > 0.0).count();
        stats.loss += loss;
        stats.batches += 1;
        if grad.iter().any(|g| *g != 0.0) {
            clip_grad_norm(&mut grad, cfg.max_grad_norm);
            adam.step(&mut policy.params, &grad);
        }
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(ret: f64, v: f64) -> SilEntry {
        SilEntry { input: vec![0.0], mask: [true; 5], intervene: false, action: 4, ret, value_at_insert: v }
    }

    #[test]
    fn rejects_non_improving_entries() {
        let mut b = SilBuffer::new(4);
        assert!(!b.insert(entry(1.0, 1.0)));
        assert!(!b.insert(entry(0.5, 1.0)));
        assert!(b.insert(entry(1.5, 1.0)));
        assert_eq!(b.len(), 1);
    }

    #[test]
    fn full_buffer_evicts_lowest_priority() {
        let mut b = SilBuffer::new(2);
        assert!(b.insert(entry(2.0, 1.0)));
        assert!(b.insert(entry(4.0, 1.0)));
        assert!(!b.insert(entry(1.5, 1.0)));
        assert!(b.insert(entry(3.0, 1.0)));
        let mut pr: Vec<f64> = b.entries().map(SilEntry::priority).collect();
        pr.sort_by(f64::total_cmp);
        assert_eq!(pr, vec![2.0, 3.0]);
    }
}
