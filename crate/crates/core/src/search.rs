//! Greedy topology selection and statistics of the edges it keeps.
//!
//! For each agent, several candidate topologies are drawn, the agent's
//! post-update policy is computed under each, and the candidate whose update
//! gives the largest estimated joint value on a batch of stored states wins.

use serde::{Deserialize, Serialize};

use crate::critic::{DecomposedCritic, Transition};
use crate::error::{Error, Result};
use crate::learner::gradient::{agent_gradient, coalition_weight, to_update};
use crate::policy::TabularPolicy;
use crate::topology::AgentTopology;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub enabled: bool,
    /// Candidate topologies drawn per selection.
    pub n_candidates: usize,
    /// Stored steps on which post-update values are averaged.
    pub eval_batch: usize,
    /// Select one topology per agent (`true`) or one shared topology.
    pub per_agent: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self { enabled: false, n_candidates: 8, eval_batch: 64, per_agent: true }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_candidates < 1 {
            return Err(Error::Config("n_candidates must be at least 1".into()));
        }
        if self.eval_batch < 1 {
            return Err(Error::Config("eval_batch must be at least 1".into()));
        }
        Ok(())
    }
}

/// Outcome of one per-agent selection.
#[derive(Debug, Clone)]
pub struct Selection {
    pub index: usize,
    pub topology: AgentTopology,
    pub policy: TabularPolicy,
    pub values: Vec<f64>,
}

/// Average of `Σ_j k_j E_{π_j} Q_j + b` over the evaluation states.
pub fn estimated_value(critic: &DecomposedCritic, policies: &[TabularPolicy], eval: &[&Transition]) -> f64 {
    if eval.is_empty() {
        return 0.0;
    }
    eval.iter().map(|s| critic.expected_q_tot(s.state_key, &s.agent_keys, policies)).sum::<f64>() / eval.len() as f64
}

/// Index of the largest value, lowest index on ties.
pub fn select_best(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = k;
        }
    }
    best
}

/// Picks agent `i`'s topology among `candidates` by the estimated joint value
/// after updating only agent `i`'s policy.
pub fn heuristic_topology_search(
    i: usize,
    candidates: &[AgentTopology],
    batch: &[&Transition],
    critic: &DecomposedCritic,
    policies: &[TabularPolicy],
    eval: &[&Transition],
    policy_lr: f64,
) -> Result<Selection> {
    if candidates.is_empty() {
        return Err(Error::Contract("no candidate topologies".into()));
    }
    let mut scratch = policies.to_vec();
    let mut updated = Vec::with_capacity(candidates.len());
    let mut values = Vec::with_capacity(candidates.len());
    for e in candidates {
        let w: Vec<f64> = batch.iter().map(|s| coalition_weight(critic, e, i, s)).collect();
        let grad = agent_gradient(i, batch, &w, &policies[i]);
        let mut next = policies[i].clone();
        next.apply_update(&to_update(&grad, policy_lr, next.parameterization()))?;
        scratch[i] = next.clone();
        values.push(estimated_value(critic, &scratch, eval));
        updated.push(next);
    }
    let index = select_best(&values);
    Ok(Selection { index, topology: candidates[index].clone(), policy: updated.swap_remove(index), values })
}

/// Picks one topology shared by all agents by the estimated joint value after
/// every agent updates under it. Returns the topology and the updated policies.
pub fn joint_topology_search(
    candidates: &[AgentTopology],
    batch: &[&Transition],
    critic: &DecomposedCritic,
    policies: &[TabularPolicy],
    eval: &[&Transition],
    policy_lr: f64,
) -> Result<(AgentTopology, Vec<TabularPolicy>)> {
    if candidates.is_empty() {
        return Err(Error::Contract("no candidate topologies".into()));
    }
    let mut updated = Vec::with_capacity(candidates.len());
    let mut values = Vec::with_capacity(candidates.len());
    for e in candidates {
        let mut next = policies.to_vec();
        for (i, p) in next.iter_mut().enumerate() {
            let w: Vec<f64> = batch.iter().map(|s| coalition_weight(critic, e, i, s)).collect();
            let grad = agent_gradient(i, batch, &w, &policies[i]);
            p.apply_update(&to_update(&grad, policy_lr, p.parameterization()))?;
        }
        values.push(estimated_value(critic, &next, eval));
        updated.push(next);
    }
    let index = select_best(&values);
    Ok((candidates[index].clone(), updated.swap_remove(index)))
}

/// Counts how often each edge appears in the rows that were selected.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeFrequencyLedger {
    n: usize,
    counts: Vec<u64>,
    selections: Vec<u64>,
}

impl EdgeFrequencyLedger {
    pub fn new(n: usize) -> Self {
        Self { n, counts: vec![0; n * n], selections: vec![0; n] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Records row `i` of a topology selected for agent `i`.
    pub fn record_row(&mut self, i: usize, topology: &AgentTopology) {
        for j in 0..self.n {
            if topology.has_edge(i, j) {
                self.counts[i * self.n + j] += 1;
            }
        }
        self.selections[i] += 1;
    }

    /// Records every row of a topology shared by all agents.
    pub fn record(&mut self, topology: &AgentTopology) {
        for i in 0..self.n {
            self.record_row(i, topology);
        }
    }

    pub fn total(&self) -> u64 {
        self.selections.iter().sum()
    }

    pub fn selections(&self, i: usize) -> u64 {
        self.selections[i]
    }

    pub fn count(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.n + j]
    }

    pub fn frequency(&self, i: usize, j: usize) -> f64 {
        match self.selections[i] {
            0 => 0.0,
            s => self.count(i, j) as f64 / s as f64,
        }
    }

    pub fn merge(&mut self, other: &EdgeFrequencyLedger) {
        assert_eq!(self.n, other.n);
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        for (a, b) in self.selections.iter_mut().zip(&other.selections) {
            *a += b;
        }
    }
}

/// Selected-edge frequency minus `p` per cell; the diagonal reports `1 - p`.
pub fn edge_frequency_stats(ledger: &EdgeFrequencyLedger, p: f64) -> Result<Vec<Vec<f64>>> {
    if ledger.total() == 0 {
        return Err(Error::Empty("edge-frequency ledger has no selections".into()));
    }
    let n = ledger.n();
    Ok((0..n).map(|i| (0..n).map(|j| if i == j { 1.0 - p } else { ledger.frequency(i, j) - p }).collect()).collect())
}

/// Mean of the off-diagonal differences and its standard error, treating
/// each recorded off-diagonal cell as a Bernoulli trial.
pub fn off_diagonal_summary(ledger: &EdgeFrequencyLedger, p: f64) -> Result<(f64, f64)> {
    let diffs = edge_frequency_stats(ledger, p)?;
    let n = ledger.n();
    let mut trials = 0u64;
    let mut hits = 0u64;
    let mut cells = 0usize;
    let mut mean = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j && ledger.selections(i) > 0 {
                mean += diffs[i][j];
                cells += 1;
                trials += ledger.selections(i);
                hits += ledger.count(i, j);
            }
        }
    }
    if cells == 0 {
        return Err(Error::Empty("no off-diagonal cells recorded".into()));
    }
    let q = hits as f64 / trials as f64;
    Ok((mean / cells as f64, (q * (1.0 - q) / trials as f64).sqrt().max(f64::MIN_POSITIVE)))
}

/// Heatmap rows `source,destination,frequency,difference`.
pub fn heatmap_csv(ledger: &EdgeFrequencyLedger, p: f64) -> Result<String> {
    let diffs = edge_frequency_stats(ledger, p)?;
    let mut out = String::from("source,destination,frequency,difference\n");
    for i in 0..ledger.n() {
        for j in 0..ledger.n() {
            let freq = if i == j { 1.0 } else { ledger.frequency(i, j) };
            out.push_str(&format!("{i},{j},{freq},{}\n", diffs[i][j]));
        }
    }
    Ok(out)
}
