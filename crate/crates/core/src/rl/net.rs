//! Dense tanh networks over a flat parameter vector, with manual backprop
//! and an Adam optimizer.

use serde::{Deserialize, Serialize};

/// Affine layer stored row-major: `out * input` weights followed by `out` biases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dense {
    pub input: usize,
    pub output: usize,
    pub offset: usize,
}

impl Dense {
    pub fn param_count(&self) -> usize {
        self.input * self.output + self.output
    }

    fn forward(&self, params: &[f64], x: &[f64], y: &mut Vec<f64>) {
        debug_assert_eq!(x.len(), self.input);
        let w = &params[self.offset..self.offset + self.input * self.output];
        let b = &params[self.offset + self.input * self.output..self.offset + self.param_count()];
        y.clear();
        for o in 0..self.output {
            let row = &w[o * self.input..(o + 1) * self.input];
            let s: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum();
            y.push(s + b[o]);
        }
    }

    /// Accumulates parameter gradients and returns the input gradient.
    fn backward(&self, params: &[f64], x: &[f64], gy: &[f64], grad: &mut [f64], want_input: bool) -> Vec<f64> {
        let n_w = self.input * self.output;
        let mut gx = if want_input { vec![0.0; self.input] } else { Vec::new() };
        for o in 0..self.output {
            let g = gy[o];
            if g == 0.0 {
                continue;
            }
            let gw = &mut grad[self.offset + o * self.input..self.offset + (o + 1) * self.input];
            for (gwi, xi) in gw.iter_mut().zip(x) {
                *gwi += g * xi;
            }
            grad[self.offset + n_w + o] += g;
            if want_input {
                let row = &params[self.offset + o * self.input..self.offset + (o + 1) * self.input];
                for (gxi, w) in gx.iter_mut().zip(row) {
                    *gxi += g * w;
                }
            }
        }
        gx
    }
}

/// Stack of dense layers with tanh between them. `tanh_output` also applies
/// tanh after the last layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub tanh_output: bool,
}

/// Activations kept for backprop: `acts[0]` is the input, `acts[l + 1]` the
/// output of layer `l`.
#[derive(Debug, Clone, Default)]
pub struct MlpCache {
    pub acts: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("forward was run")
    }
}

impl Mlp {
    /// Lays out layers of the given sizes starting at `offset`.
    pub fn new(sizes: &[usize], offset: usize, tanh_output: bool) -> Self {
        let mut off = offset;
        let layers = sizes
            .windows(2)
            .map(|w| {
                let d = Dense { input: w[0], output: w[1], offset: off };
                off += d.param_count();
                d
            })
            .collect();
        Self { layers, tanh_output }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    pub fn end_offset(&self) -> usize {
        self.layers.last().map(|l| l.offset + l.param_count()).unwrap_or(0)
    }

    fn activated(&self, layer: usize) -> bool {
        layer + 1 < self.layers.len() || self.tanh_output
    }

    pub fn forward(&self, params: &[f64], x: &[f64]) -> MlpCache {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        for (l, layer) in self.layers.iter().enumerate() {
            let mut y = Vec::with_capacity(layer.output);
            layer.forward(params, acts.last().expect("input present"), &mut y);
            if self.activated(l) {
                y.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(y);
        }
        MlpCache { acts }
    }

    /// Backprop of `grad_out` (gradient w.r.t. the network output). Returns the
    /// gradient w.r.t. the input.
    pub fn backward(&self, params: &[f64], cache: &MlpCache, grad_out: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let mut g = grad_out.to_vec();
        for l in (0..self.layers.len()).rev() {
            if self.activated(l) {
                for (gi, y) in g.iter_mut().zip(&cache.acts[l + 1]) {
                    *gi *= 1.0 - y * y;
                }
            }
            g = self.layers[l].backward(params, &cache.acts[l], &g, grad, true);
        }
        g
    }
}

/// Single dense layer used as a head on a shared trunk.
pub fn head_forward(layer: &Dense, params: &[f64], x: &[f64]) -> Vec<f64> {
    let mut y = Vec::with_capacity(layer.output);
    layer.forward(params, x, &mut y);
    y
}

pub fn head_backward(layer: &Dense, params: &[f64], x: &[f64], gy: &[f64], grad: &mut [f64]) -> Vec<f64> {
    layer.backward(params, x, gy, grad, true)
}

/// Scaled uniform initialisation (Glorot) for weights, zero biases.
pub fn init_dense<R: rand::Rng + ?Sized>(layer: &Dense, params: &mut [f64], gain: f64, rng: &mut R) {
    let bound = gain * (6.0 / (layer.input + layer.output) as f64).sqrt();
    let n_w = layer.input * layer.output;
    for p in &mut params[layer.offset..layer.offset + n_w] {
        *p = rng.random_range(-bound..bound);
    }
    for p in &mut params[layer.offset + n_w..layer.offset + layer.param_count()] {
        *p = 0.0;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    /// Descends along `grad`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / bc1;
            let vh = self.v[i] / bc2;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

/// Rescales `grad` so its L2 norm is at most `max_norm`; returns the original norm.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}
