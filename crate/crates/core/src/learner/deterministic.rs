//! Deterministic coalition gradients through a masked monotonic mixer, and
//! the one-step continuous training loop that uses them.

use std::collections::VecDeque;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::train::CurvePoint;
use super::LearnerConfig;
use crate::critic::{coalition_mask, ContinuousLocalCritic, Mixer, MonotonicMixer, QuadraticCritic};
use crate::env::{features, quadratic_reward, ContinuousQuadratic, EnvDescriptor, FEATURE_DIM};
use crate::error::{Error, Result};
use crate::policy::LinearDeterministicPolicy;
use crate::rng::{stream, tag};
use crate::stats::{mean, std_population};
use crate::topology::{AgentTopology, TopologySampler};

/// One stored continuous-action step.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousSample {
    pub features: Vec<f64>,
    pub actions: Vec<f64>,
    pub reward: f64,
}

/// Per-agent local critics mixed by a monotonic network.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousCritic {
    pub locals: Vec<ContinuousLocalCritic>,
    pub mixer: MonotonicMixer,
}

impl ContinuousCritic {
    /// Zero quadratic locals and a randomly initialised mixer.
    pub fn new(n_agents: usize, hidden: usize, rng: &mut crate::rng::LabRng) -> Self {
        Self {
            locals: vec![ContinuousLocalCritic::Quadratic(QuadraticCritic::zeros()); n_agents],
            mixer: MonotonicMixer::new(n_agents, hidden, FEATURE_DIM, rng),
        }
    }

    pub fn local_values(&self, x: &[f64], actions: &[f64]) -> Vec<f64> {
        self.locals.iter().zip(actions).map(|(c, &a)| c.value(x, a)).collect()
    }

    pub fn q_tot(&self, x: &[f64], actions: &[f64]) -> f64 {
        self.mixer.mix(x, &self.local_values(x, actions))
    }

    /// One gradient step on the mean squared error against the rewards;
    /// returns the loss before the step.
    pub fn update(&mut self, batch: &[&ContinuousSample], lr: f64) -> Result<f64> {
        let mut theta: Vec<[f64; crate::critic::QUADRATIC_DIM]> = Vec::with_capacity(self.locals.len());
        for c in &self.locals {
            match c {
                ContinuousLocalCritic::Quadratic(q) => theta.push(q.theta),
                ContinuousLocalCritic::Binned(_) => {
                    return Err(Error::Unsupported("binned local critics cannot be trained by gradient".into()))
                }
            }
        }
        let scale = 1.0 / batch.len().max(1) as f64;
        let mut g_mixer = vec![0.0; self.mixer.params().len()];
        let mut g_local = vec![[0.0; crate::critic::QUADRATIC_DIM]; self.locals.len()];
        let mut loss = 0.0;
        for s in batch {
            let q = self.local_values(&s.features, &s.actions);
            let err = self.mixer.mix(&s.features, &q) - s.reward;
            loss += scale * err * err;
            let g = 2.0 * scale * err;
            for (acc, d) in g_mixer.iter_mut().zip(self.mixer.param_gradient(&s.features, &q)) {
                *acc += g * d;
            }
            let dq = self.mixer.dq(&s.features, &q);
            for (i, gl) in g_local.iter_mut().enumerate() {
                for (acc, b) in gl.iter_mut().zip(QuadraticCritic::basis(&s.features, s.actions[i])) {
                    *acc += g * dq[i] * b;
                }
            }
        }
        for (p, g) in self.mixer.params_mut().iter_mut().zip(&g_mixer) {
            *p -= lr * g;
        }
        for ((c, mut t), g) in self.locals.iter_mut().zip(theta).zip(&g_local) {
            for (t, g) in t.iter_mut().zip(g) {
                *t -= lr * g;
            }
            *c = ContinuousLocalCritic::Quadratic(QuadraticCritic { theta: t });
        }
        Ok(loss)
    }
}

/// `Q_i - α log N(0; 0, σ²)`: the local value with the soft term of the
/// exploration noise evaluated at the noiseless action.
pub fn soft_local_value(q: f64, alpha: f64, noise_std: f64) -> f64 {
    let log_density = -0.5 * (2.0 * std::f64::consts::PI * noise_std * noise_std).ln();
    q - alpha * log_density
}

/// Mixed value of agent `i`'s coalition: out-of-coalition local values are
/// zeroed before mixing.
pub fn coalition_q(topology: &AgentTopology, i: usize, x: &[f64], q: &[f64], mixer: &dyn Mixer) -> f64 {
    mixer.mix(x, &coalition_mask(topology, i, q))
}

/// Per-agent gradient of the coalition value with respect to the policy
/// weights, with agent `i` acting by its policy and the others by the batch.
pub fn deterministic_tape_gradient(
    batch: &[&ContinuousSample],
    topology: &AgentTopology,
    critic: &ContinuousCritic,
    policies: &[LinearDeterministicPolicy],
    alpha: f64,
    noise_std: f64,
) -> Result<Vec<Vec<f64>>> {
    let scale = 1.0 / batch.len().max(1) as f64;
    let mut grads = Vec::with_capacity(policies.len());
    for (i, policy) in policies.iter().enumerate() {
        let mut g = vec![0.0; policy.weights.len()];
        for s in batch {
            let x = &s.features;
            let mut actions = s.actions.clone();
            actions[i] = policy.act(x);
            let q: Vec<f64> =
                critic.local_values(x, &actions).into_iter().map(|q| soft_local_value(q, alpha, noise_std)).collect();
            let dmix = critic.mixer.dq(x, &coalition_mask(topology, i, &q))[i];
            let da = critic.locals[i].action_gradient(x, actions[i]).ok_or_else(|| {
                Error::Unsupported("deterministic gradients need a critic differentiable in actions".into())
            })?;
            for (gk, xk) in g.iter_mut().zip(x) {
                *gk += scale * dmix * da * xk;
            }
        }
        grads.push(g);
    }
    Ok(grads)
}

#[derive(Debug, Clone)]
pub struct DeterministicOutcome {
    pub curve: Vec<CurvePoint>,
    /// Reward of each exploratory training episode.
    pub episode_metrics: Vec<f64>,
    pub policies: Vec<LinearDeterministicPolicy>,
    pub critic: ContinuousCritic,
    pub topologies: Vec<AgentTopology>,
    pub episodes: usize,
}

/// Noiseless mean and standard deviation of the reward over fixed goals.
fn evaluate(cfg: &crate::env::QuadraticConfig, policies: &[LinearDeterministicPolicy], goals: &[f64]) -> (f64, f64) {
    let rewards: Vec<f64> = goals
        .iter()
        .map(|&g| {
            let x = features(g);
            let a: Vec<f64> = policies.iter().map(|p| p.act(&x)).collect();
            quadratic_reward(cfg, g, &a)
        })
        .collect();
    (mean(&rewards), std_population(&rewards))
}

/// Trains linear deterministic policies on the continuous task.
pub fn train_deterministic(cfg: &LearnerConfig, desc: &EnvDescriptor, seed: u64) -> Result<DeterministicOutcome> {
    let qcfg = desc.quadratic;
    let n = qcfg.n_agents;
    let mut env = ContinuousQuadratic::new(qcfg, stream(seed, tag::ENV, 0))?;
    let mut noise_rng = stream(seed, tag::ROLLOUT, 0);
    let mut buffer_rng = stream(seed, tag::BUFFER, 0);
    let noise = Normal::new(0.0, cfg.exploration_noise).map_err(|e| Error::Config(e.to_string()))?;
    let mut sampler = TopologySampler::new(cfg.topology, n, stream(seed, tag::TOPOLOGY, 0))?;
    let mut critic = ContinuousCritic::new(n, cfg.mixer_hidden, &mut stream(seed, tag::INIT, 0));
    let mut policies = vec![LinearDeterministicPolicy::zeros(FEATURE_DIM); n];
    let mut eval_env = ContinuousQuadratic::new(qcfg, stream(seed, tag::EVAL, 0))?;
    let goals: Vec<f64> = (0..cfg.eval_episodes).map(|_| eval_env.reset()[1]).collect();

    let mut buffer: VecDeque<ContinuousSample> = VecDeque::new();
    let batch_size = cfg.off_batch.max(1) * cfg.parallel_envs;
    let mut episode = 0;
    let mut next_eval = cfg.eval_every;
    let mut losses = Vec::new();
    let mut curve = Vec::new();
    let mut metrics = Vec::with_capacity(cfg.episodes);
    let mut topologies = Vec::new();
    while episode < cfg.episodes {
        let workers = cfg.parallel_envs.min(cfg.episodes - episode);
        for _ in 0..workers {
            let x = env.reset();
            let actions: Vec<f64> = policies.iter().map(|p| p.act(&x) + noise.sample(&mut noise_rng)).collect();
            let reward = env.reward(&actions);
            metrics.push(reward);
            if buffer.len() == cfg.buffer_capacity {
                buffer.pop_front();
            }
            buffer.push_back(ContinuousSample { features: x.to_vec(), actions, reward });
        }
        let batch: Vec<&ContinuousSample> =
            (0..batch_size).map(|_| &buffer[buffer_rng.random_range(0..buffer.len())]).collect();
        losses.push(critic.update(&batch, cfg.critic_lr)?);
        let e = sampler.sample();
        let grads = deterministic_tape_gradient(&batch, &e, &critic, &policies, cfg.alpha, cfg.exploration_noise)?;
        for (p, g) in policies.iter_mut().zip(&grads) {
            p.step(g, cfg.policy_lr);
        }
        if policies.iter().any(|p| p.weights.iter().any(|w| !w.is_finite())) {
            return Err(Error::Contract("policy weights diverged; lower the learning rates".into()));
        }
        topologies.push(e);
        episode += workers;
        if episode >= next_eval || episode >= cfg.episodes {
            let (m, s) = evaluate(&qcfg, &policies, &goals);
            curve.push(CurvePoint {
                episode,
                eval_return_mean: m,
                eval_return_std: s,
                loss: mean(&losses),
                p: cfg.p(),
            });
            losses.clear();
            while next_eval <= episode {
                next_eval += cfg.eval_every;
            }
        }
    }
    Ok(DeterministicOutcome { curve, episode_metrics: metrics, policies, critic, topologies, episodes: episode })
}
