//! Impulse-control policy: an intervention gate `d_θ` plus an action network
//! `u_φ` whose trunk also carries the value head.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::net::{head_backward, head_forward, init_dense, Dense, Mlp, MlpCache};
use super::obs::ObsNorm;

pub const N_ACTIONS: usize = 5;

/// Restricted top-of-book action set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RlAction {
    PlaceBid = 0,
    PlaceAsk = 1,
    CancelBid = 2,
    CancelAsk = 3,
    Skip = 4,
}

impl RlAction {
    pub const ALL: [RlAction; N_ACTIONS] = [Self::PlaceBid, Self::PlaceAsk, Self::CancelBid, Self::CancelAsk, Self::Skip];

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i]
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Feasibility mask over [`RlAction::ALL`]; skip is always allowed.
pub type ActionMask = [bool; N_ACTIONS];

pub const ALL_ALLOWED: ActionMask = [true; N_ACTIONS];

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("input has {got} features, network expects {want}")]
    Shape { got: usize, want: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub obs_dim: usize,
    pub hidden: Vec<usize>,
    pub n_actions: usize,
}

impl Architecture {
    pub fn new(obs_dim: usize, hidden: Vec<usize>) -> Self {
        Self { obs_dim, hidden, n_actions: N_ACTIONS }
    }

    /// Every dense layer as `(input, output)`, in parameter order.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let l = PolicyLayout::new(self);
        l.decision
            .layers
            .iter()
            .chain(l.trunk.layers.iter())
            .chain([&l.action_head, &l.value_head])
            .map(|d| (d.input, d.output))
            .collect()
    }
}

/// Where each sub-network lives in the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyLayout {
    pub decision: Mlp,
    pub trunk: Mlp,
    pub action_head: Dense,
    pub value_head: Dense,
    pub total: usize,
}

impl PolicyLayout {
    pub fn new(arch: &Architecture) -> Self {
        let mut sizes = vec![arch.obs_dim];
        sizes.extend(&arch.hidden);
        let mut dec_sizes = sizes.clone();
        dec_sizes.push(1);
        let decision = Mlp::new(&dec_sizes, 0, false);
        let trunk = Mlp::new(&sizes, decision.end_offset(), true);
        let h = *sizes.last().expect("obs dim present");
        let action_head = Dense { input: h, output: arch.n_actions, offset: trunk.end_offset().max(decision.end_offset()) };
        let value_head = Dense { input: h, output: 1, offset: action_head.offset + action_head.param_count() };
        let total = value_head.offset + value_head.param_count();
        Self { decision, trunk, action_head, value_head, total }
    }
}

/// Network weights plus everything needed to interpret them.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub arch: Architecture,
    pub norm: ObsNorm,
    pub rho_aware: bool,
    pub params: Vec<f64>,
    layout: PolicyLayout,
}

/// Output of one policy evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyEval {
    pub intervene_logit: f64,
    pub p_intervene: f64,
    pub probs: [f64; N_ACTIONS],
    pub value: f64,
}

impl PolicyEval {
    /// `log p(d) + d · log p(a)`.
    pub fn log_prob(&self, intervene: bool, action: usize) -> f64 {
        if intervene {
            log_sigmoid(self.intervene_logit) + self.probs[action].ln()
        } else {
            log_sigmoid(-self.intervene_logit)
        }
    }

    /// Entropy of the joint impulse distribution.
    pub fn entropy(&self) -> f64 {
        bernoulli_entropy(self.intervene_logit) + self.p_intervene * categorical_entropy(&self.probs)
    }
}

/// Cached activations of one sample, for backprop.
#[derive(Debug, Clone)]
pub struct Forward {
    pub eval: PolicyEval,
    pub logits: [f64; N_ACTIONS],
    dec: MlpCache,
    trunk: MlpCache,
}

/// Gradient of a scalar loss w.r.t. the three network outputs.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct OutputGrad {
    pub intervene_logit: f64,
    pub logits: [f64; N_ACTIONS],
    pub value: f64,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln σ(x)` without overflow.
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

fn bernoulli_entropy(logit: f64) -> f64 {
    let p = sigmoid(logit);
    -(p * log_sigmoid(logit) + (1.0 - p) * log_sigmoid(-logit))
}

fn categorical_entropy(probs: &[f64]) -> f64 {
    -probs.iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum::<f64>()
}

/// Softmax restricted to allowed entries; masked entries get probability 0.
pub fn masked_softmax(logits: &[f64; N_ACTIONS], mask: &ActionMask) -> [f64; N_ACTIONS] {
    let m = logits.iter().zip(mask).filter(|(_, ok)| **ok).map(|(l, _)| *l).fold(f64::NEG_INFINITY, f64::max);
    let mut out = [0.0; N_ACTIONS];
    let mut z = 0.0;
    for i in 0..N_ACTIONS {
        if mask[i] {
            out[i] = (logits[i] - m).exp();
            z += out[i];
        }
    }
    out.iter_mut().for_each(|p| *p /= z);
    out
}

impl PolicyParams {
    /// All-zero parameters (uniform actions, intervene probability 0.5).
    pub fn zeros(arch: Architecture, norm: ObsNorm, rho_aware: bool) -> Self {
        let layout = PolicyLayout::new(&arch);
        Self { params: vec![0.0; layout.total], arch, norm, rho_aware, layout }
    }

    /// Glorot-initialised weights; output heads start small so the initial
    /// policy is close to uniform.
    pub fn init<R: Rng + ?Sized>(arch: Architecture, norm: ObsNorm, rho_aware: bool, rng: &mut R) -> Self {
        let mut p = Self::zeros(arch, norm, rho_aware);
        let layout = p.layout.clone();
        let n_dec = layout.decision.layers.len();
        for (i, l) in layout.decision.layers.iter().enumerate() {
            init_dense(l, &mut p.params, if i + 1 == n_dec { 0.01 } else { 1.0 }, rng);
        }
        for l in &layout.trunk.layers {
            init_dense(l, &mut p.params, 1.0, rng);
        }
        init_dense(&layout.action_head, &mut p.params, 0.01, rng);
        init_dense(&layout.value_head, &mut p.params, 1.0, rng);
        p
    }

    /// Rebuilds from a flat vector; fails on length mismatch.
    pub fn from_flat(arch: Architecture, norm: ObsNorm, rho_aware: bool, params: Vec<f64>) -> Result<Self, PolicyError> {
        let layout = PolicyLayout::new(&arch);
        if params.len() != layout.total {
            return Err(PolicyError::Shape { got: params.len(), want: layout.total });
        }
        Ok(Self { arch, norm, rho_aware, params, layout })
    }

    pub fn layout(&self) -> &PolicyLayout {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    fn check_input(&self, input: &[f64]) -> Result<(), PolicyError> {
        if input.len() != self.arch.obs_dim {
            return Err(PolicyError::Shape { got: input.len(), want: self.arch.obs_dim });
        }
        if input.iter().any(|v| !v.is_finite()) {
            return Err(PolicyError::NonFinite("observation"));
        }
        Ok(())
    }

    /// Intervention probability from `d_θ`.
    pub fn decision_forward(&self, input: &[f64]) -> Result<f64, PolicyError> {
        self.check_input(input)?;
        let logit = self.layout.decision.forward(&self.params, input).output()[0];
        if !logit.is_finite() {
            return Err(PolicyError::NonFinite("decision logit"));
        }
        Ok(sigmoid(logit))
    }

    /// Masked action distribution from `u_φ`.
    pub fn action_forward(&self, input: &[f64], mask: &ActionMask) -> Result<[f64; N_ACTIONS], PolicyError> {
        Ok(self.forward(input, mask)?.eval.probs)
    }

    pub fn evaluate(&self, input: &[f64], mask: &ActionMask) -> Result<PolicyEval, PolicyError> {
        Ok(self.forward(input, mask)?.eval)
    }

    pub fn forward(&self, input: &[f64], mask: &ActionMask) -> Result<Forward, PolicyError> {
        self.check_input(input)?;
        Ok(self.forward_with(&self.params, input, mask))
    }

    /// Forward pass with an explicit parameter vector (same layout).
    pub fn forward_with(&self, params: &[f64], input: &[f64], mask: &ActionMask) -> Forward {
        let dec = self.layout.decision.forward(params, input);
        let trunk = self.layout.trunk.forward(params, input);
        let h = trunk.output();
        let raw = head_forward(&self.layout.action_head, params, h);
        let mut logits = [0.0; N_ACTIONS];
        logits.copy_from_slice(&raw);
        let value = head_forward(&self.layout.value_head, params, h)[0];
        let intervene_logit = dec.output()[0];
        let eval = PolicyEval { intervene_logit, p_intervene: sigmoid(intervene_logit), probs: masked_softmax(&logits, mask), value };
        Forward { eval, logits, dec, trunk }
    }

    /// Accumulates `∂L/∂params` into `grad` given output gradients.
    pub fn backward_with(&self, params: &[f64], fwd: &Forward, g: &OutputGrad, grad: &mut [f64]) {
        if g.intervene_logit != 0.0 {
            self.layout.decision.backward(params, &fwd.dec, &[g.intervene_logit], grad);
        }
        let h = fwd.trunk.output();
        let mut gh = head_backward(&self.layout.action_head, params, h, &g.logits, grad);
        let gv = head_backward(&self.layout.value_head, params, h, &[g.value], grad);
        gh.iter_mut().zip(gv).for_each(|(a, b)| *a += b);
        self.layout.trunk.backward(params, &fwd.trunk, &gh, grad);
    }
}

/// Gradient helpers for the joint log-probability and entropy, w.r.t. the
/// intervene logit and the action logits.
pub fn log_prob_grad(eval: &PolicyEval, intervene: bool, action: usize, mask: &ActionMask) -> OutputGrad {
    let mut g = OutputGrad::default();
    if intervene {
        g.intervene_logit = 1.0 - eval.p_intervene;
        for k in 0..N_ACTIONS {
            if mask[k] {
                g.logits[k] = f64::from(u8::from(k == action)) - eval.probs[k];
            }
        }
    } else {
        g.intervene_logit = -eval.p_intervene;
    }
    g
}

pub fn entropy_grad(eval: &PolicyEval, mask: &ActionMask) -> OutputGrad {
    let p = eval.p_intervene;
    let h_a = categorical_entropy(&eval.probs);
    let dp = p * (1.0 - p);
    let mut g = OutputGrad { intervene_logit: -eval.intervene_logit * dp + dp * h_a, ..Default::default() };
    for k in 0..N_ACTIONS {
        if mask[k] && eval.probs[k] > 0.0 {
            g.logits[k] = -p * eval.probs[k] * (eval.probs[k].ln() + h_a);
        }
    }
    g
}

/// Draw `(intervene, action)` from the joint policy. Non-intervention maps to skip.
pub fn sample_action<R: Rng + ?Sized>(eval: &PolicyEval, rng: &mut R) -> (bool, usize) {
    let intervene = rng.random::<f64>() < eval.p_intervene;
    if !intervene {
        return (false, RlAction::Skip.index());
    }
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = RlAction::Skip.index();
    for (k, p) in eval.probs.iter().enumerate() {
        if *p > 0.0 {
            acc += p;
            last = k;
            if u < acc {
                return (true, k);
            }
        }
    }
    (true, last)
}
