use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::LabRng;

/// Parameters of the one-step continuous coordination task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadraticConfig {
    pub n_agents: usize,
    /// Centre of the goal distribution.
    pub goal: f64,
    /// Goals are drawn uniformly from `goal ± goal_spread`.
    pub goal_spread: f64,
    /// Weight of the neighbour-disagreement penalty.
    pub coupling: f64,
}

impl Default for QuadraticConfig {
    fn default() -> Self {
        Self { n_agents: 3, goal: 1.0, goal_spread: 0.5, coupling: 0.1 }
    }
}

/// Agents pick scalar actions and receive
/// `-(Σ a_i - g)^2 - c Σ_i (a_i - a_{i+1})^2`.
///
/// Each agent observes the feature vector `[1, g]`.
#[derive(Debug, Clone)]
pub struct ContinuousQuadratic {
    config: QuadraticConfig,
    goal: f64,
    rng: LabRng,
}

pub const FEATURE_DIM: usize = 2;

impl ContinuousQuadratic {
    pub fn new(config: QuadraticConfig, rng: LabRng) -> Result<Self> {
        if config.n_agents < 2 {
            return Err(Error::Config("n_agents must be at least 2".into()));
        }
        if !(config.goal_spread >= 0.0 && config.coupling >= 0.0) {
            return Err(Error::Config("goal_spread and coupling must be non-negative".into()));
        }
        Ok(Self { goal: config.goal, config, rng })
    }

    pub fn config(&self) -> &QuadraticConfig {
        &self.config
    }

    pub fn n_agents(&self) -> usize {
        self.config.n_agents
    }

    /// Draws a new goal and returns the shared features.
    pub fn reset(&mut self) -> [f64; FEATURE_DIM] {
        let s = self.config.goal_spread;
        self.goal = if s > 0.0 { self.config.goal + self.rng.random_range(-s..=s) } else { self.config.goal };
        features(self.goal)
    }

    pub fn goal(&self) -> f64 {
        self.goal
    }

    pub fn reward(&self, actions: &[f64]) -> f64 {
        reward(&self.config, self.goal, actions)
    }

    /// Best achievable reward for the current goal.
    pub fn optimum(&self) -> f64 {
        0.0
    }
}

pub fn features(goal: f64) -> [f64; FEATURE_DIM] {
    [1.0, goal]
}

pub fn reward(config: &QuadraticConfig, goal: f64, actions: &[f64]) -> f64 {
    let total: f64 = actions.iter().sum();
    let disagreement: f64 = actions.windows(2).map(|w| (w[0] - w[1]).powi(2)).sum();
    -(total - goal).powi(2) - config.coupling * disagreement
}
