//! Gradient estimators and the training loops that drive them.

mod deterministic;
pub mod gradient;
mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use deterministic::{
    coalition_q, deterministic_tape_gradient, soft_local_value, train_deterministic, ContinuousCritic,
    ContinuousSample, DeterministicOutcome,
};
pub use gradient::{
    agent_gradient, coalition_utility, coalition_weight, coma_gradient, counterfactual_weight, dop_gradient,
    individual_q_values, own_weight, stochastic_tape_gradient, to_update, PolicyGradient,
};
pub use train::{
    check_pairing, curve_csv, random_policy_return, train, CurvePoint, LearnedModel, TrainOutcome, CURVE_HEADER,
};

use crate::error::{Error, Result};
use crate::policy::Parameterization;
use crate::search::SearchConfig;
use crate::topology::{GraphKind, GraphModelConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Coalition-weighted stochastic gradient under a sampled topology.
    StochasticTape,
    /// Each agent weights by its own decomposed utility only.
    Dop,
    /// Counterfactual advantage from a centralised joint critic.
    Coma,
    /// Deterministic gradient through the coalition-masked mixer.
    DeterministicTape,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] =
        [Algorithm::StochasticTape, Algorithm::Dop, Algorithm::Coma, Algorithm::DeterministicTape];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::StochasticTape => "stochastic_tape",
            Algorithm::Dop => "dop",
            Algorithm::Coma => "coma",
            Algorithm::DeterministicTape => "deterministic_tape",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.to_ascii_lowercase().replace('-', "_");
        match s.as_str() {
            "tape" => return Ok(Algorithm::StochasticTape),
            "dtape" => return Ok(Algorithm::DeterministicTape),
            _ => {}
        }
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown algorithm {s:?}")))
    }
}

/// Linear decay of the exploration rate over a fraction of the episodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    /// Fraction of the episode budget over which ε moves from start to end.
    pub decay_fraction: f64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self { start: 1.0, end: 0.05, decay_fraction: 0.2 }
    }
}

impl EpsilonSchedule {
    pub fn at(&self, episode: usize, total: usize) -> f64 {
        let span = self.decay_fraction * total as f64;
        let t = if span > 0.0 { episode as f64 / span } else { 1.0 };
        if t >= 1.0 {
            self.end
        } else {
            self.start + (self.end - self.start) * t
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("start", self.start), ("end", self.end), ("decay_fraction", self.decay_fraction)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("epsilon {name} = {v} is outside [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerConfig {
    pub algorithm: Algorithm,
    /// Graph model for the sampled topologies. Ignored by DOP and COMA.
    pub topology: GraphModelConfig,
    pub epsilon: EpsilonSchedule,
    /// Weight of the off-policy term in the critic loss.
    pub kappa: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub critic_lr: f64,
    /// Rate for the mixing weights; `None` uses `critic_lr`.
    pub mixer_lr: Option<f64>,
    pub policy_lr: f64,
    /// Learner steps between target-critic refreshes.
    pub target_period: usize,
    /// Episodes rolled out per learner step.
    pub parallel_envs: usize,
    pub episodes: usize,
    /// Stop early once this many environment steps were taken.
    pub max_env_steps: Option<usize>,
    /// Trajectories kept in the replay buffer.
    pub buffer_capacity: usize,
    /// Trajectories sampled from the buffer for the off-policy loss.
    pub off_batch: usize,
    /// Tree-backup depth; `None` uses the rest of each trajectory.
    pub k_steps: Option<usize>,
    pub parameterization: Parameterization,
    /// Episodes between evaluation points.
    pub eval_every: usize,
    /// Episodes per evaluation of a multi-step environment.
    pub eval_episodes: usize,
    /// Training episodes averaged into the final metric.
    pub final_window: usize,
    /// Soft-value coefficient of deterministic TAPE.
    pub alpha: f64,
    /// Standard deviation of Gaussian exploration noise (deterministic TAPE).
    pub exploration_noise: f64,
    /// Hidden units of the monotonic mixer (deterministic TAPE).
    pub mixer_hidden: usize,
    pub search: SearchConfig,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::StochasticTape,
            topology: GraphModelConfig::erdos_renyi(0.3),
            epsilon: EpsilonSchedule::default(),
            kappa: 0.5,
            lambda: 0.8,
            gamma: 0.99,
            critic_lr: 1e-3,
            mixer_lr: None,
            policy_lr: 1e-3,
            target_period: 600,
            parallel_envs: 4,
            episodes: 10_000,
            max_env_steps: None,
            buffer_capacity: 5000,
            off_batch: 8,
            k_steps: None,
            parameterization: Parameterization::Simplex,
            eval_every: 100,
            eval_episodes: 20,
            final_window: 100,
            alpha: 0.0,
            exploration_noise: 0.1,
            mixer_hidden: 8,
            search: SearchConfig::default(),
        }
    }
}

impl LearnerConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        let mut cfg = Self { algorithm, ..Self::default() };
        if algorithm == Algorithm::DeterministicTape {
            cfg.topology = GraphModelConfig::erdos_renyi(0.5);
        }
        cfg
    }

    /// Settings shared by every algorithm in the matrix-game comparison:
    /// ER(0.7) topologies, no off-policy critic term, and mixing weights held
    /// at their initial value. With a single state the mixing weight and the
    /// local value scale are redundant, and learning both lets a weight
    /// collapse to zero, which freezes that agent's policy.
    pub fn matrix_game(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            topology: GraphModelConfig::erdos_renyi(0.7),
            kappa: 0.0,
            critic_lr: 0.01,
            mixer_lr: Some(0.0),
            policy_lr: 0.002,
            episodes: 10_000,
            ..Self::default()
        }
    }

    /// The edge probability reported with learning curves; 0 for estimators
    /// that use no topology.
    pub fn p(&self) -> f64 {
        if matches!(self.algorithm, Algorithm::Dop | Algorithm::Coma) {
            return 0.0;
        }
        match self.topology.kind {
            GraphKind::ErdosRenyi => self.topology.p,
            GraphKind::Edgeless => 0.0,
            GraphKind::FullyConnected => 1.0,
            _ => f64::NAN,
        }
    }

    pub fn validate(&self, n_agents: usize) -> Result<()> {
        self.topology.validate(n_agents)?;
        self.epsilon.validate()?;
        self.search.validate()?;
        for (name, v) in [("kappa", self.kappa), ("lambda", self.lambda), ("gamma", self.gamma)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} = {v} is outside [0, 1]")));
            }
        }
        for (name, v) in [("critic_lr", self.critic_lr), ("policy_lr", self.policy_lr)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} = {v} must be positive")));
            }
        }
        for (name, v) in [
            ("target_period", self.target_period),
            ("parallel_envs", self.parallel_envs),
            ("episodes", self.episodes),
            ("buffer_capacity", self.buffer_capacity),
            ("eval_every", self.eval_every),
            ("eval_episodes", self.eval_episodes),
            ("final_window", self.final_window),
            ("mixer_hidden", self.mixer_hidden),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if let Some(m) = self.mixer_lr {
            if !(m >= 0.0 && m.is_finite()) {
                return Err(Error::Config(format!("mixer_lr = {m} must be non-negative")));
            }
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha = {} must be non-negative", self.alpha)));
        }
        if !(self.exploration_noise > 0.0 && self.exploration_noise.is_finite()) {
            return Err(Error::Config("exploration_noise must be positive".into()));
        }
        if self.search.enabled && self.algorithm != Algorithm::StochasticTape {
            return Err(Error::Config("topology search requires stochastic_tape".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epsilon_decays_linearly_then_holds() {
        let s = EpsilonSchedule::default();
        assert_eq!(s.at(0, 1000), 1.0);
        assert!((s.at(100, 1000) - 0.525).abs() < 1e-12);
        assert_eq!(s.at(200, 1000), 0.05);
        assert_eq!(s.at(999, 1000), 0.05);
    }

    #[test]
    fn algorithm_names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert_eq!("TAPE".parse::<Algorithm>().unwrap(), Algorithm::StochasticTape);
        assert!("ppo".parse::<Algorithm>().is_err());
    }

    #[test]
    fn validation_rejects_bad_values() {
        let ok = LearnerConfig::default();
        assert!(ok.validate(2).is_ok());
        let bad_p = LearnerConfig { topology: GraphModelConfig::erdos_renyi(1.5), ..ok.clone() };
        assert!(matches!(bad_p.validate(2), Err(Error::Config(_))));
        let bad_lr = LearnerConfig { policy_lr: 0.0, ..ok.clone() };
        assert!(bad_lr.validate(2).is_err());
        let bad_period = LearnerConfig { target_period: 0, ..ok.clone() };
        assert!(bad_period.validate(2).is_err());
        let mut search_dop = LearnerConfig::new(Algorithm::Dop);
        search_dop.search.enabled = true;
        assert!(search_dop.validate(2).is_err());
    }

    #[test]
    fn matrix_game_preset_validates() {
        for a in [Algorithm::StochasticTape, Algorithm::Dop, Algorithm::Coma] {
            let cfg = LearnerConfig::matrix_game(a);
            assert!(cfg.validate(2).is_ok());
            assert_eq!(cfg.mixer_lr, Some(0.0));
        }
    }

    #[test]
    fn deterministic_default_p_is_half() {
        assert_eq!(LearnerConfig::new(Algorithm::DeterministicTape).p(), 0.5);
        assert_eq!(LearnerConfig::new(Algorithm::StochasticTape).p(), 0.3);
    }
}
