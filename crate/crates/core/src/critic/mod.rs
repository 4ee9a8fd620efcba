//! Linearly decomposed critics, trajectory storage and critic targets.
//!
//! `Q_tot(s, a) = Σ_i k_i(s) Q_i(o_i, a_i) + b(s)` with `k_i = |raw_i|`.
//! Local values are keyed by each agent's observation key; mixing weights
//! and bias by the global state key.

mod mixer;

use std::collections::{BTreeMap, VecDeque};

use rand::Rng;

pub use mixer::{
    coalition_mask, BinnedCritic, ContinuousLocalCritic, LinearMixer, Mixer, MonotonicMixer, QuadraticCritic,
    QUADRATIC_DIM,
};

use crate::error::{Error, Result};
use crate::policy::TabularPolicy;
use crate::rng::LabRng;

/// One recorded step of a rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state_key: u64,
    pub agent_keys: Vec<u64>,
    pub actions: Vec<usize>,
    pub reward: f64,
    /// Each agent's behaviour probability of its own action.
    pub behavior_probs: Vec<f64>,
}

impl Transition {
    pub fn joint_behavior_prob(&self) -> f64 {
        self.behavior_probs.iter().product()
    }
}

/// A non-empty episode. The last step is treated as terminal, including
/// episodes cut by a time limit.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    steps: Vec<Transition>,
}

impl Trajectory {
    pub fn new(steps: Vec<Transition>) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::Contract("trajectory must contain at least one step".into()));
        }
        for (t, s) in steps.iter().enumerate() {
            if let Some(p) = s.behavior_probs.iter().find(|&&p| !(p > 0.0 && p <= 1.0)) {
                return Err(Error::Contract(format!("step {t} has behaviour probability {p} outside (0, 1]")));
            }
            if !s.reward.is_finite() {
                return Err(Error::Contract(format!("step {t} has a non-finite reward")));
            }
        }
        Ok(Self { steps })
    }

    pub fn steps(&self) -> &[Transition] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn episode_return(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }
}

/// Bounded FIFO of trajectories.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Trajectory>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1);
        Self { capacity, items: VecDeque::with_capacity(capacity.min(4096)) }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Trajectory) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    /// Uniform sample with replacement.
    pub fn sample(&self, n: usize, rng: &mut LabRng) -> Vec<&Trajectory> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..n).map(|_| &self.items[rng.random_range(0..self.items.len())]).collect()
    }

    /// Uniform sample of individual steps across stored trajectories.
    pub fn sample_steps(&self, n: usize, rng: &mut LabRng) -> Vec<&Transition> {
        self.sample(n, rng).into_iter().map(|t| &t.steps[rng.random_range(0..t.len())]).collect()
    }
}

/// Anything that scores a recorded joint action.
pub trait JointValue {
    fn value(&self, step: &Transition) -> f64;
    fn gamma(&self) -> f64;
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecomposedCritic {
    action_counts: Vec<usize>,
    gamma: f64,
    local: Vec<BTreeMap<u64, Vec<f64>>>,
    mix_raw: BTreeMap<u64, Vec<f64>>,
    bias: BTreeMap<u64, f64>,
}

/// Initial raw mixing parameter for unseen states.
pub const INITIAL_MIX: f64 = 1.0;

impl DecomposedCritic {
    pub fn new(action_counts: Vec<usize>, gamma: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::Config(format!("gamma = {gamma} is outside [0, 1]")));
        }
        let n = action_counts.len();
        Ok(Self {
            action_counts,
            gamma,
            local: vec![BTreeMap::new(); n],
            mix_raw: BTreeMap::new(),
            bias: BTreeMap::new(),
        })
    }

    pub fn n_agents(&self) -> usize {
        self.action_counts.len()
    }

    pub fn action_counts(&self) -> &[usize] {
        &self.action_counts
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn local_q(&self, agent: usize, key: u64, action: usize) -> f64 {
        self.local[agent].get(&key).map_or(0.0, |v| v[action])
    }

    pub fn local_values(&self, agent: usize, key: u64) -> Vec<f64> {
        self.local[agent].get(&key).cloned().unwrap_or_else(|| vec![0.0; self.action_counts[agent]])
    }

    pub fn set_local_values(&mut self, agent: usize, key: u64, values: Vec<f64>) {
        assert_eq!(values.len(), self.action_counts[agent]);
        self.local[agent].insert(key, values);
    }

    pub fn local_tables(&self) -> &[BTreeMap<u64, Vec<f64>>] {
        &self.local
    }

    /// Non-negative mixing weight `k_i(s)`.
    pub fn k(&self, agent: usize, state: u64) -> f64 {
        self.mix_raw(agent, state).abs()
    }

    pub fn mix_raw(&self, agent: usize, state: u64) -> f64 {
        self.mix_raw.get(&state).map_or(INITIAL_MIX, |v| v[agent])
    }

    pub fn mix_table(&self) -> &BTreeMap<u64, Vec<f64>> {
        &self.mix_raw
    }

    pub fn set_mix_raw(&mut self, state: u64, raw: Vec<f64>) {
        assert_eq!(raw.len(), self.n_agents());
        self.mix_raw.insert(state, raw);
    }

    pub fn bias(&self, state: u64) -> f64 {
        self.bias.get(&state).copied().unwrap_or(0.0)
    }

    pub fn bias_table(&self) -> &BTreeMap<u64, f64> {
        &self.bias
    }

    pub fn set_bias(&mut self, state: u64, b: f64) {
        self.bias.insert(state, b);
    }

    pub fn q_tot(&self, state: u64, agent_keys: &[u64], actions: &[usize]) -> f64 {
        let mut total = self.bias(state);
        for i in 0..self.n_agents() {
            total += self.k(i, state) * self.local_q(i, agent_keys[i], actions[i]);
        }
        total
    }

    /// `Σ_a π_i(a) Q_i(key, a)`.
    pub fn expected_local(&self, agent: usize, key: u64, probs: &[f64]) -> f64 {
        match self.local[agent].get(&key) {
            Some(q) => q.iter().zip(probs).map(|(q, p)| q * p).sum(),
            None => 0.0,
        }
    }

    /// `Σ_i k_i(s) E_{π_i} Q_i + b(s)`.
    pub fn expected_q_tot(&self, state: u64, agent_keys: &[u64], policies: &[TabularPolicy]) -> f64 {
        let mut total = self.bias(state);
        for (i, p) in policies.iter().enumerate() {
            total += self.k(i, state) * self.expected_local(i, agent_keys[i], &p.probs(agent_keys[i]));
        }
        total
    }

    /// Squared-error loss and its gradient for
    /// `κ · mean_off (Q_tot - y)^2 + (1 - κ) · mean_on (Q_tot - y)^2`.
    pub fn loss_and_gradient(
        &self,
        on: &[LabeledStep<'_>],
        off: &[LabeledStep<'_>],
        kappa: f64,
    ) -> (f64, CriticGradient) {
        let mut grad = CriticGradient::default();
        let mut loss = 0.0;
        for (batch, weight) in [(on, 1.0 - kappa), (off, kappa)] {
            let total: f64 = batch.iter().map(|s| s.weight).sum();
            if total <= 0.0 || weight == 0.0 {
                continue;
            }
            for sample in batch {
                let s = sample.step;
                let w = weight * sample.weight / total;
                let err = self.q_tot(s.state_key, &s.agent_keys, &s.actions) - sample.target;
                loss += w * err * err;
                let g = 2.0 * w * err;
                for i in 0..self.n_agents() {
                    let raw = self.mix_raw(i, s.state_key);
                    let q = self.local_q(i, s.agent_keys[i], s.actions[i]);
                    grad.add_local(i, s.agent_keys[i], s.actions[i], self.action_counts[i], g * raw.abs());
                    let sign = if raw < 0.0 { -1.0 } else { 1.0 };
                    grad.add_mix(i, s.state_key, self.n_agents(), g * sign * q);
                }
                *grad.bias.entry(s.state_key).or_insert(0.0) += g;
            }
        }
        (loss, grad)
    }

    pub fn apply_gradient(&mut self, grad: &CriticGradient, lr: f64) {
        self.apply_gradient_with_rates(grad, lr, lr);
    }

    /// Like [`Self::apply_gradient`] with a separate rate for the mixing
    /// parameters.
    pub fn apply_gradient_with_rates(&mut self, grad: &CriticGradient, lr: f64, mix_lr: f64) {
        for (&(i, key), g) in &grad.local {
            let n = self.action_counts[i];
            let q = self.local[i].entry(key).or_insert_with(|| vec![0.0; n]);
            for (q, g) in q.iter_mut().zip(g) {
                *q -= lr * g;
            }
        }
        for (&state, g) in &grad.mix {
            let n = self.n_agents();
            let raw = self.mix_raw.entry(state).or_insert_with(|| vec![INITIAL_MIX; n]);
            for (r, g) in raw.iter_mut().zip(g) {
                *r -= mix_lr * g;
            }
        }
        for (&state, g) in &grad.bias {
            *self.bias.entry(state).or_insert(0.0) -= lr * g;
        }
    }

    /// One plain gradient step; returns the loss before the step.
    pub fn update(&mut self, on: &[LabeledStep<'_>], off: &[LabeledStep<'_>], kappa: f64, lr: f64) -> f64 {
        self.update_with_rates(on, off, kappa, lr, lr)
    }

    /// One gradient step with a separate rate for the mixing parameters.
    pub fn update_with_rates(
        &mut self,
        on: &[LabeledStep<'_>],
        off: &[LabeledStep<'_>],
        kappa: f64,
        lr: f64,
        mix_lr: f64,
    ) -> f64 {
        let (loss, grad) = self.loss_and_gradient(on, off, kappa);
        self.apply_gradient_with_rates(&grad, lr, mix_lr);
        loss
    }
}

impl JointValue for DecomposedCritic {
    fn value(&self, step: &Transition) -> f64 {
        self.q_tot(step.state_key, &step.agent_keys, &step.actions)
    }

    fn gamma(&self) -> f64 {
        self.gamma
    }
}

/// A recorded step paired with its regression target. Losses average over a
/// batch with these weights.
#[derive(Debug, Clone, Copy)]
pub struct LabeledStep<'a> {
    pub step: &'a Transition,
    pub target: f64,
    pub weight: f64,
}

impl<'a> LabeledStep<'a> {
    pub fn new(step: &'a Transition, target: f64) -> Self {
        Self { step, target, weight: 1.0 }
    }
}

/// Sparse gradient of the critic loss.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CriticGradient {
    /// `(agent, key) -> ∂L/∂Q_i(key, ·)`.
    pub local: BTreeMap<(usize, u64), Vec<f64>>,
    /// `state -> ∂L/∂raw_i(state)`.
    pub mix: BTreeMap<u64, Vec<f64>>,
    pub bias: BTreeMap<u64, f64>,
}

impl CriticGradient {
    fn add_local(&mut self, agent: usize, key: u64, action: usize, n_actions: usize, g: f64) {
        self.local.entry((agent, key)).or_insert_with(|| vec![0.0; n_actions])[action] += g;
    }

    fn add_mix(&mut self, agent: usize, state: u64, n_agents: usize, g: f64) {
        self.mix.entry(state).or_insert_with(|| vec![0.0; n_agents])[agent] += g;
    }
}

/// Centralised tabular critic over joint actions, used by the counterfactual
/// baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct JointCritic {
    action_counts: Vec<usize>,
    gamma: f64,
    table: BTreeMap<(u64, usize), f64>,
}

impl JointCritic {
    pub fn new(action_counts: Vec<usize>, gamma: f64) -> Self {
        Self { action_counts, gamma, table: BTreeMap::new() }
    }

    pub fn action_counts(&self) -> &[usize] {
        &self.action_counts
    }

    pub fn joint_index(&self, actions: &[usize]) -> usize {
        actions.iter().zip(&self.action_counts).fold(0, |idx, (&a, &c)| idx * c + a)
    }

    pub fn q(&self, state: u64, actions: &[usize]) -> f64 {
        self.table.get(&(state, self.joint_index(actions))).copied().unwrap_or(0.0)
    }

    pub fn set_q(&mut self, state: u64, actions: &[usize], value: f64) {
        let idx = self.joint_index(actions);
        self.table.insert((state, idx), value);
    }

    pub fn table(&self) -> &BTreeMap<(u64, usize), f64> {
        &self.table
    }

    pub fn set_entry(&mut self, state: u64, joint_index: usize, value: f64) {
        self.table.insert((state, joint_index), value);
    }

    /// One gradient step on the mean squared error; returns the loss before it.
    pub fn update(&mut self, batch: &[LabeledStep<'_>], lr: f64) -> f64 {
        let total: f64 = batch.iter().map(|s| s.weight).sum();
        if total <= 0.0 {
            return 0.0;
        }
        let mut grads: BTreeMap<(u64, usize), f64> = BTreeMap::new();
        let mut loss = 0.0;
        for sample in batch {
            let w = sample.weight / total;
            let s = sample.step;
            let err = self.q(s.state_key, &s.actions) - sample.target;
            loss += w * err * err;
            *grads.entry((s.state_key, self.joint_index(&s.actions))).or_insert(0.0) += 2.0 * w * err;
        }
        for (k, g) in grads {
            *self.table.entry(k).or_insert(0.0) -= lr * g;
        }
        loss
    }
}

impl JointValue for JointCritic {
    fn value(&self, step: &Transition) -> f64 {
        self.q(step.state_key, &step.actions)
    }

    fn gamma(&self) -> f64 {
        self.gamma
    }
}

/// Frozen copy of a critic refreshed every `period` episodes.
#[derive(Debug, Clone)]
pub struct TargetCritic<C: Clone> {
    frozen: C,
    period: usize,
    episodes: usize,
    syncs: usize,
}

impl<C: Clone> TargetCritic<C> {
    pub fn new(critic: &C, period: usize) -> Self {
        assert!(period >= 1);
        Self { frozen: critic.clone(), period, episodes: 0, syncs: 0 }
    }

    pub fn get(&self) -> &C {
        &self.frozen
    }

    /// Episodes since the last refresh.
    pub fn staleness(&self) -> usize {
        self.episodes - self.syncs * self.period
    }

    /// Records finished episodes and refreshes on every multiple of the period.
    pub fn advance(&mut self, critic: &C, episodes: usize) -> bool {
        self.episodes += episodes;
        let due = self.episodes / self.period;
        if due > self.syncs {
            self.syncs = due;
            self.frozen = critic.clone();
            true
        } else {
            false
        }
    }
}

/// `y^on_t = Q'_t + Σ_{u≥t} (γλ)^{u-t} [r_u + γ Q'_{u+1} - Q'_u]` with a zero
/// value after the final step.
pub fn on_policy_targets<C: JointValue>(target: &C, trajectory: &Trajectory, lambda: f64) -> Vec<f64> {
    let gamma = target.gamma();
    let steps = trajectory.steps();
    let values: Vec<f64> = steps.iter().map(|s| target.value(s)).collect();
    let mut out = vec![0.0; steps.len()];
    let mut acc = 0.0;
    for t in (0..steps.len()).rev() {
        let next = values.get(t + 1).copied().unwrap_or(0.0);
        let delta = steps[t].reward + gamma * next - values[t];
        acc = delta + gamma * lambda * acc;
        out[t] = values[t] + acc;
    }
    out
}

/// Tree-backup targets over at most `k_steps` corrections (`None` means the
/// rest of the trajectory). Traces multiply `λ π(a_t|s_t)` under the current
/// joint policy; bootstraps use expected local values under that policy.
pub fn off_policy_targets(
    target: &DecomposedCritic,
    policies: &[TabularPolicy],
    trajectory: &Trajectory,
    lambda: f64,
    k_steps: Option<usize>,
) -> Vec<f64> {
    let gamma = target.gamma();
    let steps = trajectory.steps();
    let len = steps.len();
    let q: Vec<f64> = steps.iter().map(|s| target.value(s)).collect();
    let v_next: Vec<f64> = (0..len)
        .map(|t| match steps.get(t + 1) {
            Some(n) => target.expected_q_tot(n.state_key, &n.agent_keys, policies),
            None => 0.0,
        })
        .collect();
    let pi: Vec<f64> = steps
        .iter()
        .map(|s| s.actions.iter().enumerate().map(|(i, &a)| policies[i].probs(s.agent_keys[i])[a]).product())
        .collect();
    (0..len)
        .map(|u| {
            let end = match k_steps {
                Some(k) => (u + k).min(len),
                None => len,
            };
            let mut y = q[u];
            let mut c = 1.0;
            let mut discount = 1.0;
            for t in u..end {
                if t > u {
                    c *= lambda * pi[t];
                    discount *= gamma;
                }
                y += discount * c * (steps[t].reward + gamma * v_next[t] - q[t]);
            }
            y
        })
        .collect()
}

/// `U_j = Q_tot(s, a) - Σ_{a'} π_j(a') Q_tot(s, (a', a_-j))`.
pub fn aristocrat_utility(
    critic: &DecomposedCritic,
    policies: &[TabularPolicy],
    state: u64,
    agent_keys: &[u64],
    actions: &[usize],
    j: usize,
) -> f64 {
    let probs = policies[j].probs(agent_keys[j]);
    counterfactual_advantage(|a| critic.q_tot(state, agent_keys, a), &probs, actions, j)
}

/// `Q(a) - Σ_{a'} π_j(a') Q((a', a_-j))` for any joint-action value `Q`.
pub fn counterfactual_advantage(q: impl Fn(&[usize]) -> f64, probs: &[f64], actions: &[usize], j: usize) -> f64 {
    let mut counterfactual = actions.to_vec();
    let mut baseline = 0.0;
    for (a, p) in probs.iter().enumerate() {
        counterfactual[j] = a;
        baseline += p * q(&counterfactual);
    }
    q(actions) - baseline
}

/// The same utility through the decomposition:
/// `k_j(s) [Q_j(a_j) - Σ_{a'} π_j(a') Q_j(a')]`.
pub fn aristocrat_utility_local(
    critic: &DecomposedCritic,
    policies: &[TabularPolicy],
    state: u64,
    agent_keys: &[u64],
    actions: &[usize],
    j: usize,
) -> f64 {
    let key = agent_keys[j];
    let probs = policies[j].probs(key);
    critic.k(j, state) * (critic.local_q(j, key, actions[j]) - critic.expected_local(j, key, &probs))
}

#[cfg(test)]
mod tests;
