use rand::Rng;

use super::{DiscreteEnv, Observation, StepResult};
use crate::error::{Error, Result};
use crate::rng::LabRng;

/// One-step cooperative game with a shared payoff over joint actions.
///
/// Payoffs are stored row-major with agent 0 as the most significant index.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixGame {
    action_counts: Vec<usize>,
    payoff: Vec<f64>,
}

impl MatrixGame {
    pub fn new(action_counts: Vec<usize>, payoff: Vec<f64>) -> Result<Self> {
        if action_counts.len() < 2 {
            return Err(Error::Config("a matrix game needs at least 2 agents".into()));
        }
        if action_counts.contains(&0) {
            return Err(Error::Config("every agent needs at least one action".into()));
        }
        let size: usize = action_counts.iter().product();
        if payoff.len() != size {
            return Err(Error::Config(format!(
                "payoff has {} entries, the joint action space has {size}",
                payoff.len()
            )));
        }
        if payoff.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("payoff entries must be finite".into()));
        }
        Ok(Self { action_counts, payoff })
    }

    /// The 2×2 game used to motivate coalitions.
    pub fn intro() -> Self {
        Self::new(vec![2, 2], vec![2.0, -4.0, -1.0, 0.0]).unwrap()
    }

    /// 3×3 game whose optimum at `(a0, a0)` is guarded by a penalty for agent 0
    /// choosing `a0` alone.
    pub fn penalty_game(penalty: f64, local_optimum: f64) -> Self {
        #[rustfmt::skip]
        let payoff = vec![
            4.0, penalty, penalty,
            -1.0, local_optimum, 0.0,
            -1.0, 0.0, 0.0,
        ];
        Self::new(vec![3, 3], payoff).unwrap()
    }

    pub fn easy() -> Self {
        Self::penalty_game(-8.0, 0.0)
    }

    pub fn medium() -> Self {
        Self::penalty_game(-16.0, 0.0)
    }

    pub fn hard(local_optimum: f64) -> Self {
        Self::penalty_game(-16.0, local_optimum)
    }

    /// Payoffs drawn uniformly from `[-scale, scale]`.
    pub fn random(action_counts: Vec<usize>, scale: f64, rng: &mut LabRng) -> Self {
        let size = action_counts.iter().product();
        let payoff = (0..size).map(|_| rng.random_range(-scale..=scale)).collect();
        Self::new(action_counts, payoff).unwrap()
    }

    pub fn action_counts(&self) -> &[usize] {
        &self.action_counts
    }

    pub fn n_joint(&self) -> usize {
        self.payoff.len()
    }

    pub fn payoffs(&self) -> &[f64] {
        &self.payoff
    }

    pub fn joint_index(&self, actions: &[usize]) -> Result<usize> {
        if actions.len() != self.action_counts.len() {
            return Err(Error::Contract(format!(
                "expected {} actions, got {}",
                self.action_counts.len(),
                actions.len()
            )));
        }
        let mut idx = 0;
        for (i, (&a, &c)) in actions.iter().zip(&self.action_counts).enumerate() {
            if a >= c {
                return Err(Error::Contract(format!("agent {i} action {a} is outside 0..{c}")));
            }
            idx = idx * c + a;
        }
        Ok(idx)
    }

    pub fn joint_actions(&self, mut index: usize) -> Vec<usize> {
        let mut actions = vec![0; self.action_counts.len()];
        for (slot, &c) in actions.iter_mut().zip(&self.action_counts).rev() {
            *slot = index % c;
            index /= c;
        }
        actions
    }

    pub fn payoff(&self, actions: &[usize]) -> Result<f64> {
        Ok(self.payoff[self.joint_index(actions)?])
    }

    pub fn optimum(&self) -> f64 {
        self.payoff.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Probability of each joint action under independent per-agent policies.
    pub fn joint_probability(&self, policies: &[Vec<f64>], actions: &[usize]) -> f64 {
        actions.iter().enumerate().map(|(i, &a)| policies[i][a]).product()
    }

    /// Exact `J(π) = Σ_a Π_i π_i(a_i) R(a)`.
    pub fn expected_payoff(&self, policies: &[Vec<f64>]) -> f64 {
        (0..self.n_joint())
            .map(|k| {
                let a = self.joint_actions(k);
                self.joint_probability(policies, &a) * self.payoff[k]
            })
            .sum()
    }

    /// `Q_i^π(a) = E_{a_-i ~ π_-i} R(a, a_-i)` for every action of agent `i`.
    pub fn local_values(&self, agent: usize, policies: &[Vec<f64>]) -> Vec<f64> {
        let mut q = vec![0.0; self.action_counts[agent]];
        for k in 0..self.n_joint() {
            let a = self.joint_actions(k);
            let others: f64 =
                a.iter().enumerate().filter(|&(j, _)| j != agent).map(|(j, &aj)| policies[j][aj]).product();
            q[a[agent]] += others * self.payoff[k];
        }
        q
    }
}

impl DiscreteEnv for MatrixGame {
    fn n_agents(&self) -> usize {
        self.action_counts.len()
    }

    fn action_counts(&self) -> &[usize] {
        &self.action_counts
    }

    fn horizon(&self) -> usize {
        1
    }

    fn reset(&mut self) -> Observation {
        Observation { state_key: 0, agent_keys: vec![0; self.action_counts.len()] }
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepResult> {
        let reward = self.payoff(actions)?;
        Ok(StepResult { observation: self.reset(), reward, done: true })
    }
}
