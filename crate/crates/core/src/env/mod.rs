//! Cooperative environments: one-step matrix games, a foraging gridworld and
//! a continuous one-step coordination task.

mod continuous;
mod foraging;
mod matrix;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use continuous::{features, reward as quadratic_reward, ContinuousQuadratic, QuadraticConfig, FEATURE_DIM};
pub use foraging::{Food, ForagingConfig, ForagingWorld, DOWN, LEFT, LOAD, NOOP, N_ACTIONS, RIGHT, UP};
pub use matrix::MatrixGame;

use crate::error::{Error, Result};
use crate::rng::LabRng;

/// What the learners see after a reset or step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation {
    /// Global state identifier used by the mixing weights and bias.
    pub state_key: u64,
    /// Per-agent local observation keys.
    pub agent_keys: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
}

/// An environment with discrete per-agent actions.
pub trait DiscreteEnv: Send {
    fn n_agents(&self) -> usize;
    fn action_counts(&self) -> &[usize];
    fn horizon(&self) -> usize;
    fn reset(&mut self) -> Observation;
    fn step(&mut self, actions: &[usize]) -> Result<StepResult>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    IntroGame,
    Easy,
    Medium,
    Hard,
    Foraging,
    ContinuousQuadratic,
}

impl EnvKind {
    pub const ALL: [EnvKind; 6] = [
        EnvKind::IntroGame,
        EnvKind::Easy,
        EnvKind::Medium,
        EnvKind::Hard,
        EnvKind::Foraging,
        EnvKind::ContinuousQuadratic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EnvKind::IntroGame => "intro_game",
            EnvKind::Easy => "easy",
            EnvKind::Medium => "medium",
            EnvKind::Hard => "hard",
            EnvKind::Foraging => "foraging",
            EnvKind::ContinuousQuadratic => "continuous_quadratic",
        }
    }

    pub fn is_matrix_game(self) -> bool {
        matches!(self, EnvKind::IntroGame | EnvKind::Easy | EnvKind::Medium | EnvKind::Hard)
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        EnvKind::ALL
            .into_iter()
            .find(|k| k.name() == norm || (norm == "intro" && *k == EnvKind::IntroGame))
            .ok_or_else(|| Error::Config(format!("unknown environment kind {s:?}")))
    }
}

/// Everything needed to build an environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvDescriptor {
    pub kind: EnvKind,
    /// Replaces the built-in payoff table of a matrix game (row-major).
    pub payoff_override: Option<Vec<f64>>,
    /// Reward at `(a1, a1)` in the hard game.
    pub local_optimum: f64,
    pub foraging: ForagingConfig,
    pub quadratic: QuadraticConfig,
}

impl Default for EnvDescriptor {
    fn default() -> Self {
        Self {
            kind: EnvKind::Easy,
            payoff_override: None,
            local_optimum: 1.0,
            foraging: ForagingConfig::default(),
            quadratic: QuadraticConfig::default(),
        }
    }
}

impl EnvDescriptor {
    pub fn new(kind: EnvKind) -> Self {
        Self { kind, ..Self::default() }
    }

    pub fn n_agents(&self) -> usize {
        match self.kind {
            EnvKind::Foraging => self.foraging.n_agents,
            EnvKind::ContinuousQuadratic => self.quadratic.n_agents,
            _ => 2,
        }
    }

    /// Per-agent action counts; empty for continuous actions.
    pub fn action_counts(&self) -> Vec<usize> {
        match self.kind {
            EnvKind::IntroGame => vec![2, 2],
            EnvKind::Easy | EnvKind::Medium | EnvKind::Hard => vec![3, 3],
            EnvKind::Foraging => vec![N_ACTIONS; self.foraging.n_agents],
            EnvKind::ContinuousQuadratic => Vec::new(),
        }
    }

    pub fn horizon(&self) -> usize {
        match self.kind {
            EnvKind::Foraging => self.foraging.time_limit,
            _ => 1,
        }
    }

    pub fn matrix_game(&self) -> Result<MatrixGame> {
        let base = match self.kind {
            EnvKind::IntroGame => MatrixGame::intro(),
            EnvKind::Easy => MatrixGame::easy(),
            EnvKind::Medium => MatrixGame::medium(),
            EnvKind::Hard => MatrixGame::hard(self.local_optimum),
            other => return Err(Error::Config(format!("{other} is not a matrix game"))),
        };
        match &self.payoff_override {
            Some(p) => MatrixGame::new(base.action_counts().to_vec(), p.clone()),
            None => Ok(base),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            EnvKind::Foraging => self.foraging.validate(),
            EnvKind::ContinuousQuadratic => ContinuousQuadratic::new(self.quadratic, crate::rng::seeded(0)).map(|_| ()),
            _ => self.matrix_game().map(|_| ()),
        }
    }
}

/// A constructed environment instance.
pub enum Env {
    Discrete(Box<dyn DiscreteEnv>),
    Continuous(Box<ContinuousQuadratic>),
}

impl fmt::Debug for Env {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Env::Discrete(e) => write!(f, "Env::Discrete(n_agents={})", e.n_agents()),
            Env::Continuous(e) => write!(f, "Env::Continuous({:?})", e.config()),
        }
    }
}

impl Env {
    pub fn into_discrete(self) -> Result<Box<dyn DiscreteEnv>> {
        match self {
            Env::Discrete(e) => Ok(e),
            Env::Continuous(_) => Err(Error::Config("environment has continuous actions".into())),
        }
    }
}

/// Builds an environment whose randomness is drawn from `rng`.
pub fn make_env(d: &EnvDescriptor, rng: LabRng) -> Result<Env> {
    d.validate()?;
    Ok(match d.kind {
        EnvKind::Foraging => Env::Discrete(Box::new(ForagingWorld::new(d.foraging, rng)?)),
        EnvKind::ContinuousQuadratic => Env::Continuous(Box::new(ContinuousQuadratic::new(d.quadratic, rng)?)),
        _ => Env::Discrete(Box::new(d.matrix_game()?)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn intro_descriptor_shape() {
        let d = EnvDescriptor::new(EnvKind::IntroGame);
        assert_eq!((d.n_agents(), d.action_counts(), d.horizon()), (2, vec![2, 2], 1));
        let env = make_env(&d, seeded(0)).unwrap().into_discrete().unwrap();
        assert_eq!(env.action_counts(), &[2, 2]);
    }

    #[test]
    fn kinds_parse_by_name() {
        for k in EnvKind::ALL {
            assert_eq!(k.name().parse::<EnvKind>().unwrap(), k);
        }
        assert!(matches!("chess".parse::<EnvKind>(), Err(Error::Config(_))));
    }

    #[test]
    fn payoff_override_replaces_table() {
        let d = EnvDescriptor { payoff_override: Some(vec![1.0; 9]), ..EnvDescriptor::new(EnvKind::Easy) };
        assert_eq!(d.matrix_game().unwrap().payoff(&[0, 1]).unwrap(), 1.0);
        let bad = EnvDescriptor { payoff_override: Some(vec![1.0; 4]), ..EnvDescriptor::new(EnvKind::Easy) };
        assert!(make_env(&bad, seeded(0)).is_err());
    }
}
