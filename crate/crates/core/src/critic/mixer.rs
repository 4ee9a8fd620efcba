//! Monotonic mixers and per-agent critics over continuous actions.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::LabRng;
use crate::topology::AgentTopology;

/// Aggregates per-agent values into a joint value, non-decreasing in each.
pub trait Mixer {
    fn n_agents(&self) -> usize;

    /// Joint value for shared features `x` and local values `q`.
    fn mix(&self, x: &[f64], q: &[f64]) -> f64;

    /// `∂ mix / ∂ q_i` for every agent.
    fn dq(&self, x: &[f64], q: &[f64]) -> Vec<f64>;
}

/// Local values of agent `i`'s coalition: out-of-coalition entries are
/// replaced by literal zeros.
pub fn coalition_mask(topology: &AgentTopology, i: usize, q: &[f64]) -> Vec<f64> {
    q.iter().enumerate().map(|(j, &v)| if topology.has_edge(i, j) { v } else { 0.0 }).collect()
}

/// `Σ_i |raw_i| q_i + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMixer {
    pub raw: Vec<f64>,
    pub bias: f64,
}

impl LinearMixer {
    pub fn new(raw: Vec<f64>, bias: f64) -> Self {
        Self { raw, bias }
    }
}

impl Mixer for LinearMixer {
    fn n_agents(&self) -> usize {
        self.raw.len()
    }

    fn mix(&self, _x: &[f64], q: &[f64]) -> f64 {
        self.raw.iter().zip(q).map(|(r, q)| r.abs() * q).sum::<f64>() + self.bias
    }

    fn dq(&self, _x: &[f64], _q: &[f64]) -> Vec<f64> {
        self.raw.iter().map(|r| r.abs()).collect()
    }
}

fn elu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        z.exp_m1()
    }
}

fn elu_grad(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        z.exp()
    }
}

/// One hidden layer with absolute-valued weights:
/// `Σ_h |w2_h| elu(Σ_i |w1_hi| q_i + b1_h) + u · x`.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicMixer {
    n_agents: usize,
    hidden: usize,
    feature_dim: usize,
    /// Layout: `w1` (hidden × n, row-major), `b1`, `w2`, `u`.
    params: Vec<f64>,
}

impl MonotonicMixer {
    pub fn new(n_agents: usize, hidden: usize, feature_dim: usize, rng: &mut LabRng) -> Self {
        let len = hidden * n_agents + 2 * hidden + feature_dim;
        let mut params: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
        // Keep hidden units away from zero weight so every agent matters.
        for p in &mut params[..hidden * n_agents] {
            *p = p.signum() * (0.2 + 0.8 * p.abs());
        }
        Self { n_agents, hidden, feature_dim, params }
    }

    /// Rebuilds a mixer from a stored parameter vector.
    pub fn from_params(n_agents: usize, hidden: usize, feature_dim: usize, params: Vec<f64>) -> Result<Self> {
        let len = hidden * n_agents + 2 * hidden + feature_dim;
        if params.len() != len {
            return Err(Error::Contract(format!("mixer expects {len} parameters, got {}", params.len())));
        }
        Ok(Self { n_agents, hidden, feature_dim, params })
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn w1(&self, h: usize, i: usize) -> f64 {
        self.params[h * self.n_agents + i]
    }

    fn b1(&self, h: usize) -> f64 {
        self.params[self.hidden * self.n_agents + h]
    }

    fn w2(&self, h: usize) -> f64 {
        self.params[self.hidden * (self.n_agents + 1) + h]
    }

    fn u_offset(&self) -> usize {
        self.hidden * (self.n_agents + 2)
    }

    fn pre_activation(&self, q: &[f64]) -> Vec<f64> {
        (0..self.hidden)
            .map(|h| (0..self.n_agents).map(|i| self.w1(h, i).abs() * q[i]).sum::<f64>() + self.b1(h))
            .collect()
    }

    /// `∂ mix / ∂ params`.
    pub fn param_gradient(&self, x: &[f64], q: &[f64]) -> Vec<f64> {
        let z = self.pre_activation(q);
        let mut g = vec![0.0; self.params.len()];
        for h in 0..self.hidden {
            let w2 = self.w2(h);
            let upstream = w2.abs() * elu_grad(z[h]);
            for i in 0..self.n_agents {
                let w1 = self.w1(h, i);
                g[h * self.n_agents + i] = upstream * sign(w1) * q[i];
            }
            g[self.hidden * self.n_agents + h] = upstream;
            g[self.hidden * (self.n_agents + 1) + h] = sign(w2) * elu(z[h]);
        }
        let off = self.u_offset();
        g[off..off + self.feature_dim].copy_from_slice(&x[..self.feature_dim]);
        g
    }
}

fn sign(v: f64) -> f64 {
    if v < 0.0 {
        -1.0
    } else {
        1.0
    }
}

impl Mixer for MonotonicMixer {
    fn n_agents(&self) -> usize {
        self.n_agents
    }

    fn mix(&self, x: &[f64], q: &[f64]) -> f64 {
        let z = self.pre_activation(q);
        let hidden: f64 = (0..self.hidden).map(|h| self.w2(h).abs() * elu(z[h])).sum();
        let off = self.u_offset();
        let linear: f64 = self.params[off..off + self.feature_dim].iter().zip(x).map(|(u, x)| u * x).sum();
        hidden + linear
    }

    fn dq(&self, _x: &[f64], q: &[f64]) -> Vec<f64> {
        let z = self.pre_activation(q);
        (0..self.n_agents)
            .map(|i| (0..self.hidden).map(|h| self.w2(h).abs() * elu_grad(z[h]) * self.w1(h, i).abs()).sum())
            .collect()
    }
}

/// Number of coefficients of [`QuadraticCritic`].
pub const QUADRATIC_DIM: usize = 5;

/// `Q(x, a) = θ · [1, g, a, a g, a^2]` for features `x = [1, g]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticCritic {
    pub theta: [f64; QUADRATIC_DIM],
}

impl QuadraticCritic {
    pub fn zeros() -> Self {
        Self { theta: [0.0; QUADRATIC_DIM] }
    }

    pub fn basis(x: &[f64], a: f64) -> [f64; QUADRATIC_DIM] {
        let g = x[1];
        [1.0, g, a, a * g, a * a]
    }

    pub fn value(&self, x: &[f64], a: f64) -> f64 {
        self.theta.iter().zip(Self::basis(x, a)).map(|(t, b)| t * b).sum()
    }

    pub fn action_gradient(&self, x: &[f64], a: f64) -> f64 {
        self.theta[2] + self.theta[3] * x[1] + 2.0 * self.theta[4] * a
    }
}

/// Piecewise-constant local value over action bins; not differentiable.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedCritic {
    pub low: f64,
    pub high: f64,
    pub values: Vec<f64>,
}

impl BinnedCritic {
    pub fn value(&self, a: f64) -> f64 {
        let n = self.values.len();
        let t = ((a - self.low) / (self.high - self.low)).clamp(0.0, 1.0);
        self.values[((t * n as f64) as usize).min(n - 1)]
    }
}

/// A per-agent critic over one continuous action.
#[derive(Debug, Clone, PartialEq)]
pub enum ContinuousLocalCritic {
    Quadratic(QuadraticCritic),
    Binned(BinnedCritic),
}

impl ContinuousLocalCritic {
    pub fn value(&self, x: &[f64], a: f64) -> f64 {
        match self {
            ContinuousLocalCritic::Quadratic(c) => c.value(x, a),
            ContinuousLocalCritic::Binned(c) => c.value(a),
        }
    }

    /// `∂Q/∂a`, or `None` when the critic class has no action gradient.
    pub fn action_gradient(&self, x: &[f64], a: f64) -> Option<f64> {
        match self {
            ContinuousLocalCritic::Quadratic(c) => Some(c.action_gradient(x, a)),
            ContinuousLocalCritic::Binned(_) => None,
        }
    }
}
