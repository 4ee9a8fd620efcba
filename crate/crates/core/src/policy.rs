//! Tabular stochastic policies, their additive updates, and linear
//! deterministic policies.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::LabRng;

/// How a tabular policy stores its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameterization {
    /// Parameters are the probabilities themselves; updates are projected
    /// back onto the simplex.
    #[default]
    Simplex,
    /// Parameters are logits.
    Softmax,
}

/// Per-observation-key action distribution of one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy {
    n_actions: usize,
    param: Parameterization,
    table: BTreeMap<u64, Vec<f64>>,
}

impl TabularPolicy {
    pub fn new(n_actions: usize, param: Parameterization) -> Self {
        assert!(n_actions >= 1);
        Self { n_actions, param, table: BTreeMap::new() }
    }

    pub fn uniform(n_actions: usize) -> Self {
        Self::new(n_actions, Parameterization::Simplex)
    }

    /// Simplex policy with the given probabilities at one key.
    pub fn with_probs(key: u64, probs: Vec<f64>) -> Result<Self> {
        let mut p = Self::uniform(probs.len());
        p.set_probs(key, probs)?;
        Ok(p)
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn parameterization(&self) -> Parameterization {
        self.param
    }

    /// Stored keys and raw parameters (probabilities or logits).
    pub fn params(&self) -> &BTreeMap<u64, Vec<f64>> {
        &self.table
    }

    pub fn set_params(&mut self, key: u64, params: Vec<f64>) -> Result<()> {
        if params.len() != self.n_actions || params.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract(format!("invalid parameters for key {key}")));
        }
        if self.param == Parameterization::Simplex {
            check_distribution(&params)?;
        }
        self.table.insert(key, params);
        Ok(())
    }

    /// Sets the action probabilities at `key`.
    pub fn set_probs(&mut self, key: u64, probs: Vec<f64>) -> Result<()> {
        check_distribution(&probs)?;
        let params = match self.param {
            Parameterization::Simplex => probs,
            Parameterization::Softmax => probs.iter().map(|p| p.max(1e-300).ln()).collect(),
        };
        self.table.insert(key, params);
        Ok(())
    }

    /// π(·|key); unknown keys are uniform.
    pub fn probs(&self, key: u64) -> Vec<f64> {
        match (self.table.get(&key), self.param) {
            (None, _) => vec![1.0 / self.n_actions as f64; self.n_actions],
            (Some(theta), Parameterization::Simplex) => theta.clone(),
            (Some(logits), Parameterization::Softmax) => softmax(logits),
        }
    }

    /// `(1 - ε) π(·|key) + ε / |A|`.
    pub fn distribution(&self, key: u64, epsilon: f64) -> Vec<f64> {
        let u = epsilon / self.n_actions as f64;
        self.probs(key).into_iter().map(|p| (1.0 - epsilon) * p + u).collect()
    }

    pub fn sample(&self, key: u64, epsilon: f64, rng: &mut LabRng) -> (usize, f64) {
        let dist = self.distribution(key, epsilon);
        let a = sample_index(&dist, rng);
        (a, dist[a])
    }

    /// Most probable action, lowest index on ties.
    pub fn greedy(&self, key: u64) -> usize {
        argmax(&self.probs(key))
    }

    /// Applies `θ ← project(θ + δβ)` (simplex) or `θ ← θ + δβ` (logits).
    pub fn apply_update(&mut self, update: &PolicyUpdate) -> Result<()> {
        for (&key, beta) in &update.steps {
            if beta.len() != self.n_actions {
                return Err(Error::Contract(format!(
                    "step at key {key} has {} entries, expected {}",
                    beta.len(),
                    self.n_actions
                )));
            }
            let theta = match self.table.get(&key) {
                Some(t) => t.clone(),
                None => match self.param {
                    Parameterization::Simplex => vec![1.0 / self.n_actions as f64; self.n_actions],
                    Parameterization::Softmax => vec![0.0; self.n_actions],
                },
            };
            let moved: Vec<f64> = theta.iter().zip(beta).map(|(t, b)| t + update.delta * b).collect();
            if moved.iter().any(|v| !v.is_finite()) {
                return Err(Error::Contract(format!("non-finite update at key {key}")));
            }
            let next = match self.param {
                Parameterization::Simplex => {
                    let p = project_to_simplex(&moved);
                    // Huge steps lose the projection to cancellation.
                    if check_distribution(&p).is_err() {
                        let scale = beta.iter().fold(0.0f64, |m, b| m.max((update.delta * b).abs()));
                        return Err(Error::Contract(format!(
                            "update at key {key} of size {scale:e} cannot be projected onto the simplex; \
                             the critic has likely diverged"
                        )));
                    }
                    p
                }
                Parameterization::Softmax => moved,
            };
            self.table.insert(key, next);
        }
        Ok(())
    }
}

/// Per-key stepsizes `β` scaled by `δ`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PolicyUpdate {
    pub delta: f64,
    pub steps: BTreeMap<u64, Vec<f64>>,
}

impl PolicyUpdate {
    pub fn new(delta: f64) -> Self {
        Self { delta, steps: BTreeMap::new() }
    }

    /// Every step sums to zero within `tol`.
    pub fn is_tangent(&self, tol: f64) -> bool {
        self.steps.values().all(|b| b.iter().sum::<f64>().abs() <= tol)
    }

    pub fn is_zero(&self) -> bool {
        self.delta == 0.0 || self.steps.values().all(|b| b.iter().all(|&x| x == 0.0))
    }

    pub fn negated(&self) -> Self {
        Self {
            delta: self.delta,
            steps: self.steps.iter().map(|(&k, b)| (k, b.iter().map(|x| -x).collect())).collect(),
        }
    }
}

/// Euclidean projection onto the probability simplex (sort-based).
///
/// Points already on the simplex are returned unchanged.
pub fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let sum: f64 = v.iter().sum();
    if v.iter().all(|&x| x >= 0.0) && (sum - 1.0).abs() <= 1e-12 {
        return v.to_vec();
    }
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut threshold = 0.0;
    for (k, &x) in u.iter().enumerate() {
        cumulative += x;
        let t = (cumulative - 1.0) / (k + 1) as f64;
        if x - t > 0.0 {
            threshold = t;
        }
    }
    v.iter().map(|&x| (x - threshold).max(0.0)).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&l| (l - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

pub fn sample_index(dist: &[f64], rng: &mut LabRng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in dist.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding left a sliver of mass; fall back to the last supported action.
    dist.iter().rposition(|&p| p > 0.0).unwrap_or(dist.len() - 1)
}

fn check_distribution(p: &[f64]) -> Result<()> {
    let sum: f64 = p.iter().sum();
    if p.iter().any(|&x| x.is_nan() || x < 0.0) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Contract(format!("{p:?} is not a probability vector")));
    }
    Ok(())
}

/// `a = w · x` for a feature vector `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearDeterministicPolicy {
    pub weights: Vec<f64>,
}

impl LinearDeterministicPolicy {
    pub fn zeros(dim: usize) -> Self {
        Self { weights: vec![0.0; dim] }
    }

    pub fn act(&self, features: &[f64]) -> f64 {
        self.weights.iter().zip(features).map(|(w, x)| w * x).sum()
    }

    pub fn step(&mut self, gradient: &[f64], lr: f64) {
        for (w, g) in self.weights.iter_mut().zip(gradient) {
            *w += lr * g;
        }
    }
}
