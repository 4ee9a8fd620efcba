//! The stochastic training loop over discrete-action environments.

use std::fmt::Write as _;

use super::deterministic::{train_deterministic, ContinuousCritic};
use super::gradient::{coma_gradient, dop_gradient, stochastic_tape_gradient, to_update, PolicyGradient};
use super::{Algorithm, LearnerConfig};
use crate::critic::{
    off_policy_targets, on_policy_targets, DecomposedCritic, JointCritic, LabeledStep, ReplayBuffer, TargetCritic,
    Trajectory, Transition,
};
use crate::env::{make_env, DiscreteEnv, EnvDescriptor, EnvKind, MatrixGame};
use crate::error::{Error, Result};
use crate::policy::{LinearDeterministicPolicy, TabularPolicy};
use crate::rng::{stream, tag, LabRng};
use crate::search::{heuristic_topology_search, joint_topology_search, EdgeFrequencyLedger};
use crate::stats::{mean, std_population};
use crate::topology::{AgentTopology, TopologySampler};

pub const CURVE_HEADER: &str = "episode,eval_return_mean,eval_return_std,loss,p,seed,algorithm,env";

/// One evaluation of the current policies.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub episode: usize,
    pub eval_return_mean: f64,
    pub eval_return_std: f64,
    /// Mean critic loss over the learner steps since the previous point.
    pub loss: f64,
    pub p: f64,
}

/// Learned parameters at the end of a run.
#[derive(Debug, Clone, PartialEq)]
pub enum LearnedModel {
    Tabular { policies: Vec<TabularPolicy>, critic: DecomposedCritic, joint_critic: Option<JointCritic> },
    Deterministic { policies: Vec<LinearDeterministicPolicy>, critic: ContinuousCritic },
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub curve: Vec<CurvePoint>,
    /// Per training episode: exact `J(π)` after the learner step for one-step
    /// games, otherwise the episode's return.
    pub episode_metrics: Vec<f64>,
    /// Mean of the last `final_window` entries of `episode_metrics`.
    pub final_metric: f64,
    pub model: LearnedModel,
    /// Topology used at each learner step (stochastic TAPE only).
    pub topologies: Vec<AgentTopology>,
    /// Selected-edge counts when topology search is enabled.
    pub edge_ledger: Option<EdgeFrequencyLedger>,
    pub episodes: usize,
    pub env_steps: usize,
}

/// Renders a learning curve with the tagged CSV schema.
pub fn curve_csv(points: &[CurvePoint], seed: u64, algorithm: Algorithm, env: EnvKind) -> String {
    let mut out = String::from(CURVE_HEADER);
    out.push('\n');
    for p in points {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{seed},{algorithm},{env}",
            p.episode, p.eval_return_mean, p.eval_return_std, p.loss, p.p
        );
    }
    out
}

/// Deterministic TAPE needs continuous actions and every other algorithm needs
/// discrete ones.
pub fn check_pairing(algorithm: Algorithm, env: EnvKind) -> Result<()> {
    let continuous = env == EnvKind::ContinuousQuadratic;
    if continuous != (algorithm == Algorithm::DeterministicTape) {
        return Err(Error::Config(format!("{algorithm} cannot be trained on {env}")));
    }
    Ok(())
}

/// Trains `cfg.algorithm` on the environment from `seed`.
pub fn train(cfg: &LearnerConfig, env: &EnvDescriptor, seed: u64) -> Result<TrainOutcome> {
    env.validate()?;
    cfg.validate(env.n_agents())?;
    check_pairing(cfg.algorithm, env.kind)?;
    if cfg.algorithm == Algorithm::DeterministicTape {
        let out = train_deterministic(cfg, env, seed)?;
        return Ok(TrainOutcome {
            final_metric: tail_mean(&out.episode_metrics, cfg.final_window),
            curve: out.curve,
            episode_metrics: out.episode_metrics,
            model: LearnedModel::Deterministic { policies: out.policies, critic: out.critic },
            topologies: out.topologies,
            edge_ledger: None,
            episodes: out.episodes,
            env_steps: out.episodes,
        });
    }
    Trainer::new(cfg, env, seed)?.run()
}

fn tail_mean(xs: &[f64], window: usize) -> f64 {
    mean(&xs[xs.len().saturating_sub(window)..])
}

fn rollout(
    env: &mut dyn DiscreteEnv,
    policies: &[TabularPolicy],
    epsilon: f64,
    rng: &mut LabRng,
) -> Result<Trajectory> {
    let mut obs = env.reset();
    let mut steps = Vec::with_capacity(env.horizon());
    for _ in 0..env.horizon() {
        let (actions, probs): (Vec<usize>, Vec<f64>) =
            policies.iter().zip(&obs.agent_keys).map(|(p, &key)| p.sample(key, epsilon, rng)).unzip();
        let res = env.step(&actions)?;
        steps.push(Transition {
            state_key: obs.state_key,
            agent_keys: obs.agent_keys,
            actions,
            reward: res.reward,
            behavior_probs: probs,
        });
        obs = res.observation;
        if res.done {
            break;
        }
    }
    Trajectory::new(steps)
}

/// Exact mean and standard deviation of the payoff under the joint policy.
fn exact_return(game: &MatrixGame, policies: &[TabularPolicy]) -> (f64, f64) {
    let probs: Vec<Vec<f64>> = policies.iter().map(|p| p.probs(0)).collect();
    let j = game.expected_payoff(&probs);
    let var: f64 = (0..game.n_joint())
        .map(|k| {
            let a = game.joint_actions(k);
            game.joint_probability(&probs, &a) * (game.payoffs()[k] - j).powi(2)
        })
        .sum();
    (j, var.max(0.0).sqrt())
}

/// Mean return of uniformly random joint actions.
pub fn random_policy_return(env: &EnvDescriptor, episodes: usize, seed: u64) -> Result<f64> {
    if env.kind.is_matrix_game() {
        let game = env.matrix_game()?;
        let uniform: Vec<TabularPolicy> = game.action_counts().iter().map(|&n| TabularPolicy::uniform(n)).collect();
        return Ok(exact_return(&game, &uniform).0);
    }
    let mut e = make_env(env, stream(seed, tag::EVAL, u64::MAX - 1))?.into_discrete()?;
    let uniform: Vec<TabularPolicy> = e.action_counts().iter().map(|&n| TabularPolicy::uniform(n)).collect();
    let mut rng = stream(seed, tag::EVAL, u64::MAX);
    let mut total = 0.0;
    for _ in 0..episodes.max(1) {
        total += rollout(e.as_mut(), &uniform, 1.0, &mut rng)?.episode_return();
    }
    Ok(total / episodes.max(1) as f64)
}

struct Trainer<'a> {
    cfg: &'a LearnerConfig,
    desc: &'a EnvDescriptor,
    seed: u64,
    game: Option<MatrixGame>,
    envs: Vec<Box<dyn DiscreteEnv>>,
    rollout_rngs: Vec<LabRng>,
    buffer_rng: LabRng,
    search_rng: LabRng,
    sampler: TopologySampler,
    policies: Vec<TabularPolicy>,
    critic: DecomposedCritic,
    target: TargetCritic<DecomposedCritic>,
    joint: Option<(JointCritic, TargetCritic<JointCritic>)>,
    buffer: ReplayBuffer,
    ledger: Option<EdgeFrequencyLedger>,
    topologies: Vec<AgentTopology>,
}

impl<'a> Trainer<'a> {
    fn new(cfg: &'a LearnerConfig, desc: &'a EnvDescriptor, seed: u64) -> Result<Self> {
        let n = desc.n_agents();
        let mut envs = Vec::with_capacity(cfg.parallel_envs);
        for w in 0..cfg.parallel_envs {
            envs.push(make_env(desc, stream(seed, tag::ENV, w as u64))?.into_discrete()?);
        }
        let counts = envs[0].action_counts().to_vec();
        let critic = DecomposedCritic::new(counts.clone(), cfg.gamma)?;
        let joint = (cfg.algorithm == Algorithm::Coma).then(|| {
            let j = JointCritic::new(counts.clone(), cfg.gamma);
            let t = TargetCritic::new(&j, cfg.target_period);
            (j, t)
        });
        Ok(Self {
            cfg,
            desc,
            seed,
            game: if desc.kind.is_matrix_game() { Some(desc.matrix_game()?) } else { None },
            rollout_rngs: (0..cfg.parallel_envs).map(|w| stream(seed, tag::ROLLOUT, w as u64)).collect(),
            envs,
            buffer_rng: stream(seed, tag::BUFFER, 0),
            search_rng: stream(seed, tag::SEARCH, 0),
            sampler: TopologySampler::new(cfg.topology, n, stream(seed, tag::TOPOLOGY, 0))?,
            policies: counts.iter().map(|&c| TabularPolicy::new(c, cfg.parameterization)).collect(),
            target: TargetCritic::new(&critic, cfg.target_period),
            critic,
            joint,
            buffer: ReplayBuffer::new(cfg.buffer_capacity),
            ledger: cfg.search.enabled.then(|| EdgeFrequencyLedger::new(n)),
            topologies: Vec::new(),
        })
    }

    fn run(mut self) -> Result<TrainOutcome> {
        let cfg = self.cfg;
        let mut episode = 0;
        let mut env_steps = 0;
        let mut next_eval = cfg.eval_every;
        let mut eval_index = 0u64;
        let mut losses = Vec::new();
        let mut curve = Vec::new();
        let mut metrics = Vec::with_capacity(cfg.episodes);
        while episode < cfg.episodes && cfg.max_env_steps.is_none_or(|m| env_steps < m) {
            let epsilon = cfg.epsilon.at(episode, cfg.episodes);
            let workers = cfg.parallel_envs.min(cfg.episodes - episode);
            let mut fresh = Vec::with_capacity(workers);
            for w in 0..workers {
                let t = rollout(self.envs[w].as_mut(), &self.policies, epsilon, &mut self.rollout_rngs[w])?;
                env_steps += t.len();
                fresh.push(t);
            }
            for t in &fresh {
                self.buffer.push(t.clone());
            }
            losses.push(self.update_critic(&fresh));
            self.update_policies(&fresh)?;
            self.target.advance(&self.critic, 1);
            if let Some((j, t)) = self.joint.as_mut() {
                t.advance(j, 1);
            }
            match &self.game {
                Some(g) => {
                    let j = exact_return(g, &self.policies).0;
                    metrics.extend(std::iter::repeat_n(j, workers));
                }
                None => metrics.extend(fresh.iter().map(|t| t.episode_return())),
            }
            episode += workers;
            let finished = episode >= cfg.episodes || cfg.max_env_steps.is_some_and(|m| env_steps >= m);
            if episode >= next_eval || finished {
                let (m, s) = self.evaluate(eval_index)?;
                eval_index += 1;
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
        Ok(TrainOutcome {
            curve,
            final_metric: tail_mean(&metrics, cfg.final_window),
            episode_metrics: metrics,
            model: LearnedModel::Tabular {
                policies: self.policies,
                critic: self.critic,
                joint_critic: self.joint.map(|(j, _)| j),
            },
            topologies: self.topologies,
            edge_ledger: self.ledger,
            episodes: episode,
            env_steps,
        })
    }

    /// Fits the critic on on-policy targets of the fresh episodes and
    /// tree-backup targets of replayed ones; returns the pre-step loss.
    fn update_critic(&mut self, fresh: &[Trajectory]) -> f64 {
        let cfg = self.cfg;
        if let Some((joint, target)) = self.joint.as_mut() {
            let targets: Vec<Vec<f64>> = fresh.iter().map(|t| on_policy_targets(target.get(), t, cfg.lambda)).collect();
            let on = labeled(fresh.iter(), &targets);
            return joint.update(&on, cfg.critic_lr);
        }
        let on_targets: Vec<Vec<f64>> =
            fresh.iter().map(|t| on_policy_targets(self.target.get(), t, cfg.lambda)).collect();
        let replay = if cfg.kappa > 0.0 { self.buffer.sample(cfg.off_batch, &mut self.buffer_rng) } else { Vec::new() };
        let off_targets: Vec<Vec<f64>> = replay
            .iter()
            .map(|t| off_policy_targets(self.target.get(), &self.policies, t, cfg.lambda, cfg.k_steps))
            .collect();
        let on = labeled(fresh.iter(), &on_targets);
        let off = labeled(replay.iter().copied(), &off_targets);
        self.critic.update_with_rates(&on, &off, cfg.kappa, cfg.critic_lr, cfg.mixer_lr.unwrap_or(cfg.critic_lr))
    }

    fn update_policies(&mut self, fresh: &[Trajectory]) -> Result<()> {
        let batch: Vec<&Transition> = fresh.iter().flat_map(|t| t.steps()).collect();
        let grads: PolicyGradient = match self.cfg.algorithm {
            Algorithm::Dop => dop_gradient(&batch, &self.critic, &self.policies),
            Algorithm::Coma => {
                let (joint, _) = self.joint.as_ref().expect("joint critic exists for COMA");
                coma_gradient(&batch, joint, &self.policies)
            }
            Algorithm::StochasticTape if self.cfg.search.enabled => return self.searched_update(&batch),
            Algorithm::StochasticTape => {
                let e = self.sampler.sample();
                let g = stochastic_tape_gradient(&batch, &e, &self.critic, &self.policies);
                self.topologies.push(e);
                g
            }
            Algorithm::DeterministicTape => unreachable!("rejected by check_pairing"),
        };
        for (policy, g) in self.policies.iter_mut().zip(&grads) {
            policy.apply_update(&to_update(g, self.cfg.policy_lr, policy.parameterization()))?;
        }
        Ok(())
    }

    fn searched_update(&mut self, batch: &[&Transition]) -> Result<()> {
        let search = self.cfg.search;
        let n = self.policies.len();
        let eval = self.buffer.sample_steps(search.eval_batch, &mut self.search_rng);
        let ledger = self.ledger.as_mut().expect("ledger exists when search is enabled");
        if search.per_agent {
            let mut chosen = AgentTopology::identity(n);
            let mut next = self.policies.clone();
            for (i, slot) in next.iter_mut().enumerate() {
                let candidates: Vec<AgentTopology> = (0..search.n_candidates).map(|_| self.sampler.sample()).collect();
                let sel = heuristic_topology_search(
                    i,
                    &candidates,
                    batch,
                    &self.critic,
                    &self.policies,
                    &eval,
                    self.cfg.policy_lr,
                )?;
                ledger.record_row(i, &sel.topology);
                chosen = chosen.with_row_from(i, &sel.topology);
                *slot = sel.policy;
            }
            self.policies = next;
            self.topologies.push(chosen);
        } else {
            let candidates: Vec<AgentTopology> = (0..search.n_candidates).map(|_| self.sampler.sample()).collect();
            let (topology, policies) =
                joint_topology_search(&candidates, batch, &self.critic, &self.policies, &eval, self.cfg.policy_lr)?;
            ledger.record(&topology);
            self.policies = policies;
            self.topologies.push(topology);
        }
        Ok(())
    }

    fn evaluate(&mut self, index: u64) -> Result<(f64, f64)> {
        if let Some(g) = &self.game {
            return Ok(exact_return(g, &self.policies));
        }
        let mut env = make_env(self.desc, stream(self.seed, tag::EVAL, 2 * index))?.into_discrete()?;
        let mut rng = stream(self.seed, tag::EVAL, 2 * index + 1);
        let returns = (0..self.cfg.eval_episodes)
            .map(|_| rollout(env.as_mut(), &self.policies, 0.0, &mut rng).map(|t| t.episode_return()))
            .collect::<Result<Vec<f64>>>()?;
        Ok((mean(&returns), std_population(&returns)))
    }
}

fn labeled<'t>(trajectories: impl Iterator<Item = &'t Trajectory>, targets: &[Vec<f64>]) -> Vec<LabeledStep<'t>> {
    trajectories.zip(targets).flat_map(|(t, y)| t.steps().iter().zip(y).map(|(s, &y)| LabeledStep::new(s, y))).collect()
}
