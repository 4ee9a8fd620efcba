//! Stochastic policy-gradient estimators over recorded transitions.
//!
//! Every estimator weights the score of agent `i`'s own action by a scalar:
//! its own decomposed utility (edgeless), the sum over its coalition, or a
//! counterfactual advantage from a joint critic. Scores are importance
//! weighted by the behaviour probability stored with each transition.

use std::collections::BTreeMap;

use crate::critic::{counterfactual_advantage, DecomposedCritic, JointCritic, Transition};
use crate::env::MatrixGame;
use crate::policy::{Parameterization, PolicyUpdate, TabularPolicy};
use crate::topology::AgentTopology;

/// Per-agent, per-observation-key gradient with respect to the policy
/// parameters.
pub type PolicyGradient = Vec<BTreeMap<u64, Vec<f64>>>;

/// `Σ_j E_ij U_j`.
pub fn coalition_utility(topology: &AgentTopology, i: usize, utilities: &[f64]) -> f64 {
    assert_eq!(utilities.len(), topology.n());
    let mut total = utilities[i];
    for (j, &u) in utilities.iter().enumerate() {
        if j != i && topology.has_edge(i, j) {
            total += u;
        }
    }
    total
}

/// Edgeless weight `k_i(s) Q_i(o_i, a_i)`.
pub fn own_weight(critic: &DecomposedCritic, i: usize, step: &Transition) -> f64 {
    critic.k(i, step.state_key) * critic.local_q(i, step.agent_keys[i], step.actions[i])
}

/// Coalition weight `Σ_j E_ij k_j(s) Q_j(o_j, a_j)`, accumulated from the
/// agent's own term so an edgeless topology reproduces [`own_weight`] exactly.
pub fn coalition_weight(critic: &DecomposedCritic, topology: &AgentTopology, i: usize, step: &Transition) -> f64 {
    let mut w = own_weight(critic, i, step);
    for j in 0..critic.n_agents() {
        if j != i && topology.has_edge(i, j) {
            w += own_weight(critic, j, step);
        }
    }
    w
}

/// Counterfactual advantage of agent `i` under a joint critic.
pub fn counterfactual_weight(critic: &JointCritic, policy: &TabularPolicy, i: usize, step: &Transition) -> f64 {
    let probs = policy.probs(step.agent_keys[i]);
    counterfactual_advantage(|a| critic.q(step.state_key, a), &probs, &step.actions, i)
}

/// Accumulates `w_n · score_i(n)` averaged over the batch for one agent.
pub fn agent_gradient(
    i: usize,
    batch: &[&Transition],
    weights: &[f64],
    policy: &TabularPolicy,
) -> BTreeMap<u64, Vec<f64>> {
    let n_actions = policy.n_actions();
    let scale = 1.0 / batch.len().max(1) as f64;
    let mut grad: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for (step, &w) in batch.iter().zip(weights) {
        let key = step.agent_keys[i];
        let a = step.actions[i];
        let mu = step.behavior_probs[i];
        let g = grad.entry(key).or_insert_with(|| vec![0.0; n_actions]);
        match policy.parameterization() {
            Parameterization::Simplex => g[a] += scale * w / mu,
            Parameterization::Softmax => {
                let probs = policy.probs(key);
                let ratio = probs[a] / mu;
                for (b, gb) in g.iter_mut().enumerate() {
                    let indicator = if b == a { 1.0 } else { 0.0 };
                    *gb += scale * w * ratio * (indicator - probs[b]);
                }
            }
        }
    }
    grad
}

/// Stochastic coalition gradient for every agent under topology `E`.
pub fn stochastic_tape_gradient(
    batch: &[&Transition],
    topology: &AgentTopology,
    critic: &DecomposedCritic,
    policies: &[TabularPolicy],
) -> PolicyGradient {
    (0..policies.len())
        .map(|i| {
            let w: Vec<f64> = batch.iter().map(|s| coalition_weight(critic, topology, i, s)).collect();
            agent_gradient(i, batch, &w, &policies[i])
        })
        .collect()
}

/// Individual-utility gradient: every agent weights by its own term only.
pub fn dop_gradient(batch: &[&Transition], critic: &DecomposedCritic, policies: &[TabularPolicy]) -> PolicyGradient {
    (0..policies.len())
        .map(|i| {
            let w: Vec<f64> = batch.iter().map(|s| own_weight(critic, i, s)).collect();
            agent_gradient(i, batch, &w, &policies[i])
        })
        .collect()
}

/// Counterfactual-advantage gradient from a centralised joint critic.
pub fn coma_gradient(batch: &[&Transition], critic: &JointCritic, policies: &[TabularPolicy]) -> PolicyGradient {
    (0..policies.len())
        .map(|i| {
            let w: Vec<f64> = batch.iter().map(|s| counterfactual_weight(critic, &policies[i], i, s)).collect();
            agent_gradient(i, batch, &w, &policies[i])
        })
        .collect()
}

/// Converts one agent's gradient into an update. Simplex steps are centred so
/// they stay tangent to the simplex.
pub fn to_update(grad: &BTreeMap<u64, Vec<f64>>, lr: f64, param: Parameterization) -> PolicyUpdate {
    let mut update = PolicyUpdate::new(lr);
    for (&key, g) in grad {
        let step = match param {
            Parameterization::Simplex => {
                let mean = g.iter().sum::<f64>() / g.len() as f64;
                g.iter().map(|x| x - mean).collect()
            }
            Parameterization::Softmax => g.clone(),
        };
        update.steps.insert(key, step);
    }
    update
}

/// `Q_i(a) = E_{a_-i ~ π_-i} R(a, a_-i)` for every agent.
pub fn individual_q_values(game: &MatrixGame, policies: &[Vec<f64>]) -> Vec<Vec<f64>> {
    (0..game.action_counts().len()).map(|i| game.local_values(i, policies)).collect()
}
