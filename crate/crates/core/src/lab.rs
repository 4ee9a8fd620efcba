//! Executable checks of the estimator's improvement and variance properties
//! on one-step games, plus the topology diversity study.
//!
//! Every check evaluates the quantity of interest by two independent routes:
//! `J` by enumerating the payoff table, updates through the learner's weight
//! functions.

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::critic::{aristocrat_utility, DecomposedCritic, Transition};
use crate::env::MatrixGame;
use crate::error::{Error, Result};
use crate::learner::{coalition_weight, own_weight, to_update};
use crate::policy::{Parameterization, PolicyUpdate, TabularPolicy};
use crate::rng::{stream, tag, LabRng};
use crate::stats::{ols_slope, std_population, Moments};
use crate::topology::{graph_metrics, sample_topology, AgentTopology, GraphMetrics, GraphModelConfig};

const STATE: u64 = 0;
const KEY: u64 = 0;

/// Relative tolerance under which two values count as tied.
const TIE_TOL: f64 = 1e-9;

/// Knobs of the theory suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabConfig {
    /// Random joint policies per game in the improvement check.
    pub trials: usize,
    /// Step scale of the improvement check.
    pub delta: f64,
    pub tolerance: f64,
    /// Edge probability of the topologies used by the improvement check.
    pub improvement_p: f64,
    pub p_grid: Vec<f64>,
    pub variance_samples: usize,
    pub identity_samples: usize,
    pub weighted_sum_samples: usize,
    pub diversity_agents: usize,
    pub diversity_samples: usize,
}

impl Default for LabConfig {
    fn default() -> Self {
        Self {
            trials: 100,
            delta: 1e-4,
            tolerance: 1e-9,
            improvement_p: 0.5,
            p_grid: (1..=9).map(|k| k as f64 / 10.0).collect(),
            variance_samples: 1_000_000,
            identity_samples: 100_000,
            weighted_sum_samples: 100_000,
            diversity_agents: 12,
            diversity_samples: 1000,
        }
    }
}

impl LabConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 || self.variance_samples < 2 || self.identity_samples < 2 {
            return Err(Error::Config("lab sample counts must be positive".into()));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) || self.tolerance.is_nan() || self.tolerance < 0.0 {
            return Err(Error::Config("lab delta must be positive and tolerance non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.improvement_p) {
            return Err(Error::Config(format!("improvement_p = {} is outside [0, 1]", self.improvement_p)));
        }
        if let Some(p) = self.p_grid.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Config(format!("p_grid entry {p} is outside [0, 1]")));
        }
        if self.diversity_agents == 0 || self.diversity_samples == 0 {
            return Err(Error::Config("diversity study needs agents and samples".into()));
        }
        Ok(())
    }
}

/// Uniform draw from the interior of the simplex (flat Dirichlet).
pub fn random_interior_policy(n_actions: usize, rng: &mut LabRng) -> Vec<f64> {
    let draws: Vec<f64> = (0..n_actions).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = draws.iter().sum();
    draws.iter().map(|d| d / total).collect()
}

/// Decomposed critic that is exact to first order around `policies`:
/// `Q_i` are the individual action values, every mixing weight is 1 and the
/// bias removes the `n - 1` surplus copies of `J`.
pub fn exact_critic(game: &MatrixGame, policies: &[Vec<f64>]) -> Result<DecomposedCritic> {
    let n = game.action_counts().len();
    let mut critic = DecomposedCritic::new(game.action_counts().to_vec(), 1.0)?;
    for i in 0..n {
        critic.set_local_values(i, KEY, game.local_values(i, policies));
    }
    critic.set_bias(STATE, -((n - 1) as f64) * game.expected_payoff(policies));
    Ok(critic)
}

fn transition(actions: Vec<usize>) -> Transition {
    let n = actions.len();
    Transition { state_key: STATE, agent_keys: vec![KEY; n], actions, reward: 0.0, behavior_probs: vec![1.0; n] }
}

/// Exact expected coalition gradient for every agent of a one-step game:
/// `g_i[a] = Σ_{a_-i} π_-i(a_-i) w_i(a, a_-i)`, turned into centred simplex
/// steps of scale `delta`.
pub fn exact_tape_updates(
    game: &MatrixGame,
    critic: &DecomposedCritic,
    topology: &AgentTopology,
    policies: &[Vec<f64>],
    delta: f64,
) -> Vec<PolicyUpdate> {
    let n = policies.len();
    let mut grads = vec![Vec::new(); n];
    for (i, g) in grads.iter_mut().enumerate() {
        *g = vec![0.0; game.action_counts()[i]];
    }
    for index in 0..game.n_joint() {
        let actions = game.joint_actions(index);
        let step = transition(actions.clone());
        for (i, g) in grads.iter_mut().enumerate() {
            let others: f64 = (0..n).filter(|&j| j != i).map(|j| policies[j][actions[j]]).product();
            g[actions[i]] += others * coalition_weight(critic, topology, i, &step);
        }
    }
    grads.into_iter().map(|g| to_update(&[(KEY, g)].into_iter().collect(), delta, Parameterization::Simplex)).collect()
}

/// Applies one update per agent to tabular simplex policies.
pub fn apply_updates(policies: &[Vec<f64>], updates: &[PolicyUpdate]) -> Result<Vec<Vec<f64>>> {
    policies
        .iter()
        .zip(updates)
        .map(|(probs, u)| {
            let mut p = TabularPolicy::with_probs(KEY, probs.clone())?;
            p.apply_update(u)?;
            Ok(p.probs(KEY))
        })
        .collect()
}

/// Outcome of one policy-improvement instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImprovementReport {
    pub instance: usize,
    pub j_before: f64,
    pub j_after: f64,
    pub delta: f64,
    pub pass: bool,
}

impl ImprovementReport {
    pub fn new(instance: usize, j_before: f64, j_after: f64, delta: f64, tolerance: f64) -> Self {
        Self { instance, j_before, j_after, delta, pass: j_after >= j_before - tolerance }
    }
}

/// Improvement reports for the exact updates, the same updates with their
/// sign flipped, and the monotone check of every exact update.
#[derive(Debug, Clone, Default)]
pub struct ImprovementSuite {
    pub reports: Vec<ImprovementReport>,
    pub controls: Vec<ImprovementReport>,
    pub monotone: Vec<bool>,
}

impl ImprovementSuite {
    pub fn passes(&self) -> usize {
        self.reports.iter().filter(|r| r.pass).count()
    }

    pub fn control_failures(&self) -> usize {
        self.controls.iter().filter(|r| !r.pass).count()
    }

    pub fn monotone_passes(&self) -> usize {
        self.monotone.iter().filter(|&&m| m).count()
    }
}

/// Draws `trials` interior joint policies and ER topologies, computes the
/// exact coalition update under an exact critic and compares `J` before and
/// after a step of scale `delta`.
pub fn verify_policy_improvement(
    game: &MatrixGame,
    trials: usize,
    delta: f64,
    tolerance: f64,
    topology_p: f64,
    rng: &mut LabRng,
) -> Result<ImprovementSuite> {
    let n = game.action_counts().len();
    let model = GraphModelConfig::erdos_renyi(topology_p);
    let mut suite = ImprovementSuite::default();
    for instance in 0..trials {
        let policies: Vec<Vec<f64>> = game.action_counts().iter().map(|&m| random_interior_policy(m, rng)).collect();
        let topology = sample_topology(&model, n, rng)?;
        let critic = exact_critic(game, &policies)?;
        let updates = exact_tape_updates(game, &critic, &topology, &policies, delta);
        let j_before = game.expected_payoff(&policies);

        let after = apply_updates(&policies, &updates)?;
        suite.reports.push(ImprovementReport::new(instance, j_before, game.expected_payoff(&after), delta, tolerance));

        let flipped: Vec<PolicyUpdate> = updates.iter().map(PolicyUpdate::negated).collect();
        let after = apply_updates(&policies, &flipped)?;
        suite.controls.push(ImprovementReport::new(instance, j_before, game.expected_payoff(&after), delta, tolerance));

        suite.monotone.push(check_monotone_condition(&updates, &critic, STATE, &vec![KEY; n]));
    }
    Ok(suite)
}

fn at_least(x: f64, y: f64, scale: f64) -> bool {
    x >= y - TIE_TOL * (1.0 + scale)
}

/// True iff for every agent and action pair, `k_i(s) Q_i(a) ≥ k_i(s) Q_i(a')`
/// exactly when `β(a) ≥ β(a')`. Differences within a small relative tolerance
/// count as ties on either side. Agents without a step at their key are
/// checked against a zero step.
pub fn check_monotone_condition(
    updates: &[PolicyUpdate],
    critic: &DecomposedCritic,
    state: u64,
    agent_keys: &[u64],
) -> bool {
    updates.iter().enumerate().all(|(i, update)| {
        let k = critic.k(i, state);
        let q: Vec<f64> = critic.local_values(i, agent_keys[i]).iter().map(|v| k * v).collect();
        let zero = vec![0.0; q.len()];
        let beta = update.steps.get(&agent_keys[i]).unwrap_or(&zero);
        if beta.len() != q.len() {
            return false;
        }
        let q_scale = q.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let b_scale = beta.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        (0..q.len()).all(|a| (0..q.len()).all(|b| at_least(q[a], q[b], q_scale) == at_least(beta[a], beta[b], b_scale)))
    })
}

/// For `a` and `b` sorted ascending with `Σ b = 0`, reports whether
/// `Σ a_k b_k ≥ 0` (up to rounding).
pub fn weighted_sum_check(a: &[f64], b: &[f64]) -> Result<bool> {
    if a.len() != b.len() {
        return Err(Error::Precondition(format!("sequence lengths differ: {} vs {}", a.len(), b.len())));
    }
    let sorted = |xs: &[f64]| xs.windows(2).all(|w| w[0] <= w[1]);
    if !sorted(a) || !sorted(b) {
        return Err(Error::Precondition("sequences must be sorted ascending".into()));
    }
    let b_abs: f64 = b.iter().map(|x| x.abs()).sum();
    let b_sum: f64 = b.iter().sum();
    if b_sum.abs() > 1e-9 * (1.0 + b_abs) {
        return Err(Error::Precondition(format!("b must sum to zero, got {b_sum}")));
    }
    let weighted: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let scale: f64 = a.iter().zip(b).map(|(x, y)| (x * y).abs()).sum();
    Ok(weighted >= -1e-12 * (1.0 + scale))
}

/// Draws `samples` random sorted pairs with centred `b` and counts how many
/// pass [`weighted_sum_check`].
pub fn fuzz_weighted_sum(samples: usize, rng: &mut LabRng) -> Result<usize> {
    let mut passes = 0;
    for _ in 0..samples {
        let len = rng.random_range(1..=8);
        let mut a: Vec<f64> = (0..len).map(|_| rng.random_range(-10.0..10.0)).collect();
        let mut b: Vec<f64> = (0..len).map(|_| rng.random_range(-10.0..10.0)).collect();
        a.sort_by(f64::total_cmp);
        let mean = b.iter().sum::<f64>() / len as f64;
        b.iter_mut().for_each(|x| *x -= mean);
        b.sort_by(f64::total_cmp);
        if weighted_sum_check(&a, &b)? {
            passes += 1;
        }
    }
    Ok(passes)
}

/// Variance of the per-sample update of one action at one `p`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariancePoint {
    pub p: f64,
    pub var_tape: f64,
    pub se_tape: f64,
    pub var_dop: f64,
    pub se_dop: f64,
    /// `var_tape - var_dop`.
    pub delta: f64,
    /// `p² Σ_j Var[C_j]` from the cross-agent terms of the same samples.
    pub decomposition: f64,
    pub decomposition_se: f64,
}

impl VariancePoint {
    pub fn dominance_holds(&self) -> bool {
        self.var_tape >= self.var_dop - 3.0 * (self.se_tape.powi(2) + self.se_dop.powi(2)).sqrt()
    }

    pub fn decomposition_holds(&self) -> bool {
        let se = (self.se_tape.powi(2) + self.se_dop.powi(2) + self.decomposition_se.powi(2)).sqrt();
        (self.delta - self.decomposition).abs() <= 3.0 * se
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceReport {
    pub agent: usize,
    pub action: usize,
    pub samples: usize,
    pub points: Vec<VariancePoint>,
    /// Least-squares slope of `ln Δ` against `ln p`; `None` when the
    /// cross-agent terms have no variance or a point has `Δ ≤ 0`.
    pub slope: Option<f64>,
}

impl VarianceReport {
    pub fn dominance_holds(&self) -> bool {
        self.points.iter().all(VariancePoint::dominance_holds)
    }

    pub fn decomposition_holds(&self) -> bool {
        self.points.iter().all(VariancePoint::decomposition_holds)
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("p,var_tape,se_tape,var_dop,se_dop,delta,decomposition,decomposition_se\n");
        for q in &self.points {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                q.p, q.var_tape, q.se_tape, q.var_dop, q.se_dop, q.delta, q.decomposition, q.decomposition_se
            ));
        }
        out
    }
}

/// Estimates, for agent `i` taking action `a_i` in the single state, the
/// variance over `a_-i ~ π_-i` of the importance-weighted update
/// `ξ = w / π_i(a_i)` with `E_ij` replaced by its expectation `p`.
///
/// Each grid point uses its own random stream.
#[allow(clippy::too_many_arguments)]
pub fn estimate_update_variance(
    game: &MatrixGame,
    policies: &[Vec<f64>],
    agent: usize,
    action: usize,
    p_grid: &[f64],
    samples: usize,
    seed: u64,
) -> Result<VarianceReport> {
    let n = policies.len();
    if agent >= n || action >= policies[agent].len() {
        return Err(Error::Precondition(format!("no action {action} for agent {agent}")));
    }
    if samples < 2 {
        return Err(Error::Precondition("at least two samples are needed".into()));
    }
    let critic = exact_critic(game, policies)?;
    let tabular: Vec<TabularPolicy> =
        policies.iter().map(|p| TabularPolicy::with_probs(KEY, p.clone())).collect::<Result<_>>()?;
    let pi_i = policies[agent][action];
    let mut points = Vec::with_capacity(p_grid.len());
    let mut degenerate = false;
    for (k, &p) in p_grid.iter().enumerate() {
        let mut rng = stream(seed, tag::LAB, k as u64);
        let mut tape = Moments::new();
        let mut dop = Moments::new();
        let mut cross: Vec<Moments> = vec![Moments::new(); n];
        let mut actions = vec![action; n];
        for _ in 0..samples {
            for j in (0..n).filter(|&j| j != agent) {
                actions[j] = tabular[j].sample(KEY, 0.0, &mut rng).0;
            }
            let step = transition(actions.clone());
            let own = own_weight(&critic, agent, &step) / pi_i;
            let mut others = 0.0;
            for j in (0..n).filter(|&j| j != agent) {
                let c = own_weight(&critic, j, &step) / pi_i;
                cross[j].push(c);
                others += c;
            }
            dop.push(own);
            tape.push(own + p * others);
        }
        let var_c: f64 = cross.iter().map(Moments::variance).sum();
        let se_c = cross.iter().map(|m| m.se_variance().powi(2)).sum::<f64>().sqrt();
        if var_c <= f64::EPSILON * (1.0 + tape.mean().abs()) {
            degenerate = true;
        }
        points.push(VariancePoint {
            p,
            var_tape: tape.variance(),
            se_tape: tape.se_variance(),
            var_dop: dop.variance(),
            se_dop: dop.se_variance(),
            delta: tape.variance() - dop.variance(),
            decomposition: p * p * var_c,
            decomposition_se: p * p * se_c,
        });
    }
    let fit: Vec<&VariancePoint> = points.iter().filter(|q| q.p > 0.0).collect();
    let slope = if degenerate || fit.len() < 2 || fit.iter().any(|q| q.delta <= 0.0) {
        None
    } else {
        let xs: Vec<f64> = fit.iter().map(|q| q.p.ln()).collect();
        let ys: Vec<f64> = fit.iter().map(|q| q.delta.ln()).collect();
        ols_slope(&xs, &ys)
    };
    Ok(VarianceReport { agent, action, samples, points, slope })
}

/// Softmax score `∇_θ log π(a) = e_a - π`.
fn softmax_score(probs: &[f64], a: usize) -> Vec<f64> {
    probs.iter().enumerate().map(|(b, &p)| if b == a { 1.0 - p } else { -p }).collect()
}

/// Comparison of the gradient estimated with aristocrat utilities (which
/// carry a per-agent baseline) against the baseline-free coalition weight.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityComponent {
    pub agent: usize,
    pub parameter: usize,
    pub with_baseline: f64,
    pub with_baseline_se: f64,
    pub baseline_free: f64,
    pub baseline_free_se: f64,
    /// Expectation by enumeration.
    pub exact: f64,
}

impl IdentityComponent {
    pub fn agrees(&self) -> bool {
        let se = (self.with_baseline_se.powi(2) + self.baseline_free_se.powi(2)).sqrt();
        (self.with_baseline - self.baseline_free).abs() <= 3.0 * se
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityReport {
    pub samples: usize,
    pub components: Vec<IdentityComponent>,
}

impl IdentityReport {
    pub fn agrees(&self) -> bool {
        self.components.iter().all(IdentityComponent::agrees)
    }
}

/// Monte-Carlo comparison of `Σ_j E_ij ∇log π_i(a_i) U_j` and
/// `Σ_j E_ij ∇log π_i(a_i) k_j Q_j(a_j)` under softmax policies. The two
/// estimators draw from separate streams.
pub fn baseline_identity_check(
    critic: &DecomposedCritic,
    topology: &AgentTopology,
    policies: &[Vec<f64>],
    samples: usize,
    seed: u64,
) -> Result<IdentityReport> {
    let n = policies.len();
    if topology.n() != n || critic.n_agents() != n {
        return Err(Error::Precondition("critic, topology and policies disagree on agent count".into()));
    }
    let tabular: Vec<TabularPolicy> =
        policies.iter().map(|p| TabularPolicy::with_probs(KEY, p.clone())).collect::<Result<_>>()?;
    let keys = vec![KEY; n];
    let with_baseline = |step: &Transition, i: usize| -> f64 {
        (0..n)
            .filter(|&j| topology.has_edge(i, j))
            .map(|j| aristocrat_utility(critic, &tabular, STATE, &keys, &step.actions, j))
            .sum()
    };
    let baseline_free = |step: &Transition, i: usize| coalition_weight(critic, topology, i, step);

    let estimate = |weight: &dyn Fn(&Transition, usize) -> f64, index: u64| -> Vec<Vec<Moments>> {
        let mut rng = stream(seed, tag::LAB, index);
        let mut acc: Vec<Vec<Moments>> = policies.iter().map(|p| vec![Moments::new(); p.len()]).collect();
        for _ in 0..samples {
            let actions: Vec<usize> = tabular.iter().map(|p| p.sample(KEY, 0.0, &mut rng).0).collect();
            let step = transition(actions);
            for (i, row) in acc.iter_mut().enumerate() {
                let w = weight(&step, i);
                for (m, s) in row.iter_mut().zip(softmax_score(&policies[i], step.actions[i])) {
                    m.push(w * s);
                }
            }
        }
        acc
    };
    let base = estimate(&with_baseline, 0);
    let free = estimate(&baseline_free, 1);

    let mut exact: Vec<Vec<f64>> = policies.iter().map(|p| vec![0.0; p.len()]).collect();
    let counts: Vec<usize> = policies.iter().map(Vec::len).collect();
    let total: usize = counts.iter().product();
    for mut index in 0..total {
        let mut actions = vec![0; n];
        for j in (0..n).rev() {
            actions[j] = index % counts[j];
            index /= counts[j];
        }
        let prob: f64 = actions.iter().enumerate().map(|(j, &a)| policies[j][a]).product();
        let step = transition(actions);
        for (i, row) in exact.iter_mut().enumerate() {
            let w = baseline_free(&step, i);
            for (e, s) in row.iter_mut().zip(softmax_score(&policies[i], step.actions[i])) {
                *e += prob * w * s;
            }
        }
    }

    let mut components = Vec::new();
    for i in 0..n {
        for k in 0..policies[i].len() {
            components.push(IdentityComponent {
                agent: i,
                parameter: k,
                with_baseline: base[i][k].mean(),
                with_baseline_se: base[i][k].se_mean(),
                baseline_free: free[i][k].mean(),
                baseline_free_se: free[i][k].se_mean(),
                exact: exact[i][k],
            });
        }
    }
    Ok(IdentityReport { samples, components })
}

/// Scatter of `(average degree, edge connectivity)` for one graph model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelDiversity {
    pub label: String,
    pub model: GraphModelConfig,
    pub points: Vec<GraphMetrics>,
    pub degree_std: f64,
    pub connectivity_std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiversityReport {
    pub n_agents: usize,
    pub models: Vec<ModelDiversity>,
}

impl DiversityReport {
    pub fn model(&self, label: &str) -> Option<&ModelDiversity> {
        self.models.iter().find(|m| m.label == label)
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("model,sample,average_degree,connectivity\n");
        for m in &self.models {
            for (k, q) in m.points.iter().enumerate() {
                out.push_str(&format!("{},{},{},{}\n", m.label, k, q.average_degree, q.connectivity));
            }
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("model,degree_std,connectivity_std\n");
        for m in &self.models {
            out.push_str(&format!("{},{},{}\n", m.label, m.degree_std, m.connectivity_std));
        }
        out
    }
}

/// ER(0.5), the default WS and BA models, edgeless and fully connected.
pub fn default_diversity_models() -> Vec<GraphModelConfig> {
    let defaults = GraphModelConfig::default();
    vec![
        GraphModelConfig::erdos_renyi(0.5),
        GraphModelConfig::watts_strogatz(defaults.ws_k, defaults.ws_beta),
        GraphModelConfig::barabasi_albert(defaults.ba_m),
        GraphModelConfig::edgeless(),
        GraphModelConfig::fully_connected(),
    ]
}

/// Samples `samples` topologies of `n_agents` from each model; model `m` uses
/// stream `m`.
pub fn topology_diversity_report(
    models: &[GraphModelConfig],
    n_agents: usize,
    samples: usize,
    seed: u64,
) -> Result<DiversityReport> {
    let mut out = Vec::with_capacity(models.len());
    for (m, model) in models.iter().enumerate() {
        model.validate(n_agents)?;
        let mut rng = stream(seed, tag::LAB, m as u64);
        let points: Vec<GraphMetrics> = (0..samples)
            .map(|_| sample_topology(model, n_agents, &mut rng).map(|t| graph_metrics(&t)))
            .collect::<Result<_>>()?;
        let degrees: Vec<f64> = points.iter().map(|q| q.average_degree).collect();
        let conns: Vec<f64> = points.iter().map(|q| q.connectivity as f64).collect();
        let label = match model.kind {
            crate::topology::GraphKind::ErdosRenyi => format!("er_p{}", model.p),
            kind => kind.label().to_string(),
        };
        out.push(ModelDiversity {
            label,
            model: *model,
            degree_std: std_population(&degrees),
            connectivity_std: std_population(&conns),
            points,
        });
    }
    Ok(DiversityReport { n_agents, models: out })
}

/// One line of the plain-text summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimResult {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl ClaimResult {
    pub fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), pass, detail: detail.into() }
    }

    pub fn line(&self) -> String {
        format!("{} {}: {}", if self.pass { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

/// Renders one `PASS`/`FAIL` line per claim.
pub fn render_summary(claims: &[ClaimResult]) -> String {
    let mut out = String::new();
    for c in claims {
        out.push_str(&c.line());
        out.push('\n');
    }
    out
}

/// Parses the output of [`render_summary`].
pub fn parse_summary(text: &str) -> Result<Vec<ClaimResult>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, line)| {
            let (status, rest) =
                line.split_once(' ').ok_or_else(|| Error::Parse { line: k + 1, msg: "missing status".into() })?;
            let pass = match status {
                "PASS" => true,
                "FAIL" => false,
                other => return Err(Error::Parse { line: k + 1, msg: format!("unknown status {other:?}") }),
            };
            let (name, detail) = rest.split_once(": ").unwrap_or((rest, ""));
            Ok(ClaimResult::new(name, pass, detail))
        })
        .collect()
}

/// Artifacts of the theory suite.
#[derive(Debug, Clone)]
pub struct TheoryOutcome {
    pub claims: Vec<ClaimResult>,
    pub improvement: Vec<(String, ImprovementSuite)>,
    pub variance: VarianceReport,
    pub identity: IdentityReport,
}

/// The four one-step games of the improvement check.
pub fn theory_games() -> Vec<(&'static str, MatrixGame)> {
    vec![
        ("intro", MatrixGame::intro()),
        ("easy", MatrixGame::easy()),
        ("medium", MatrixGame::medium()),
        ("hard", MatrixGame::hard(1.0)),
    ]
}

/// Runs the improvement, monotone, weighted-sum, variance and identity checks.
pub fn run_theory_suite(cfg: &LabConfig, seed: u64) -> Result<TheoryOutcome> {
    cfg.validate()?;
    let mut claims = Vec::new();
    let mut improvement = Vec::new();
    for (k, (name, game)) in theory_games().into_iter().enumerate() {
        let mut rng = stream(seed, tag::LAB, 100 + k as u64);
        let suite =
            verify_policy_improvement(&game, cfg.trials, cfg.delta, cfg.tolerance, cfg.improvement_p, &mut rng)?;
        let t = suite.reports.len();
        claims.push(ClaimResult::new(
            format!("improvement/{name}"),
            suite.passes() == t,
            format!("{}/{t} instances improve at delta={}", suite.passes(), cfg.delta),
        ));
        claims.push(ClaimResult::new(
            format!("improvement-control/{name}"),
            suite.control_failures() > 0,
            format!("{}/{t} sign-flipped instances fail", suite.control_failures()),
        ));
        claims.push(ClaimResult::new(
            format!("monotone/{name}"),
            suite.monotone_passes() == t,
            format!("{}/{t} updates order steps like values", suite.monotone_passes()),
        ));
        improvement.push((name.to_string(), suite));
    }

    let mut rng = stream(seed, tag::LAB, 200);
    let passes = fuzz_weighted_sum(cfg.weighted_sum_samples, &mut rng)?;
    claims.push(ClaimResult::new(
        "weighted-sum",
        passes == cfg.weighted_sum_samples,
        format!("{passes}/{} sorted pairs", cfg.weighted_sum_samples),
    ));

    let intro = MatrixGame::intro();
    let uniform = vec![vec![0.5, 0.5]; 2];
    let variance = estimate_update_variance(&intro, &uniform, 0, 0, &cfg.p_grid, cfg.variance_samples, seed)?;
    claims.push(ClaimResult::new(
        "variance-dominance",
        variance.dominance_holds(),
        format!("{} grid points, {} samples each", variance.points.len(), cfg.variance_samples),
    ));
    claims.push(ClaimResult::new(
        "variance-decomposition",
        variance.decomposition_holds(),
        "delta matches p^2 * sum Var[C_j] within 3 SE".to_string(),
    ));
    let slope_ok = variance.slope.map(|s| (1.7..=2.3).contains(&s));
    claims.push(ClaimResult::new(
        "variance-slope",
        slope_ok.unwrap_or(false),
        match variance.slope {
            Some(s) => format!("log-log slope {s:.4}"),
            None => "slope undefined".to_string(),
        },
    ));

    let policies = vec![vec![0.3, 0.7], vec![0.6, 0.4]];
    let critic = exact_critic(&intro, &policies)?;
    let identity = baseline_identity_check(
        &critic,
        &AgentTopology::fully_connected(2),
        &policies,
        cfg.identity_samples,
        seed.wrapping_add(1),
    )?;
    let agree = identity.components.iter().filter(|c| c.agrees()).count();
    claims.push(ClaimResult::new(
        "baseline-identity",
        identity.agrees(),
        format!("{agree}/{} components within 3 SE", identity.components.len()),
    ));
    Ok(TheoryOutcome { claims, improvement, variance, identity })
}

/// Runs the diversity study and reports the dispersion ordering.
pub fn run_diversity_suite(cfg: &LabConfig, seed: u64) -> Result<(Vec<ClaimResult>, DiversityReport)> {
    cfg.validate()?;
    let report =
        topology_diversity_report(&default_diversity_models(), cfg.diversity_agents, cfg.diversity_samples, seed)?;
    let std_of = |label: &str| report.model(label).map(|m| m.degree_std).unwrap_or(f64::NAN);
    let (er, ws, ba) = (std_of("er_p0.5"), std_of("ws"), std_of("ba"));
    let n = cfg.diversity_agents as f64;
    let collapsed = |label: &str, degree: f64, conn: usize| {
        report
            .model(label)
            .is_some_and(|m| m.points.iter().all(|q| q.average_degree == degree && q.connectivity == conn))
    };
    let claims = vec![
        ClaimResult::new(
            "diversity-ordering",
            er > ba && er > ws,
            format!("degree std er={er:.4} ba={ba:.4} ws={ws:.4}"),
        ),
        ClaimResult::new(
            "diversity-extremes",
            collapsed("edgeless", 0.0, 0) && collapsed("fully_connected", n - 1.0, cfg.diversity_agents - 1),
            "edgeless and fully connected collapse to single points".to_string(),
        ),
    ];
    Ok((claims, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn exact_critic_is_first_order_exact_on_additive_games() {
        // An additive game is represented exactly at any policy.
        let game = MatrixGame::new(vec![2, 3], vec![1.0, 2.0, 4.0, 3.0, 4.0, 6.0]).unwrap();
        let policies = vec![vec![0.2, 0.8], vec![0.5, 0.3, 0.2]];
        let critic = exact_critic(&game, &policies).unwrap();
        for index in 0..game.n_joint() {
            let a = game.joint_actions(index);
            let q = critic.q_tot(STATE, &[KEY, KEY], &a);
            assert!((q - game.payoff(&a).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_update_on_intro_game_follows_individual_values() {
        let game = MatrixGame::intro();
        let uniform = vec![vec![0.5, 0.5]; 2];
        let critic = exact_critic(&game, &uniform).unwrap();
        let updates = exact_tape_updates(&game, &critic, &AgentTopology::fully_connected(2), &uniform, 1.0);
        // Q_A = (-1, -0.5) and Q_B = (0.5, -2): centred steps are ±0.25 and ±1.25.
        assert_eq!(updates[0].steps[&KEY], vec![-0.25, 0.25]);
        assert_eq!(updates[1].steps[&KEY], vec![1.25, -1.25]);
        assert!(check_monotone_condition(&updates, &critic, STATE, &[KEY, KEY]));
    }

    #[test]
    fn improvement_suite_passes_and_control_fails() {
        let mut rng = seeded(3);
        for (_, game) in theory_games() {
            let suite = verify_policy_improvement(&game, 100, 1e-4, 1e-9, 0.5, &mut rng).unwrap();
            assert_eq!(suite.passes(), 100);
            assert_eq!(suite.monotone_passes(), 100);
            assert!(suite.control_failures() > 90);
        }
    }

    #[test]
    fn zero_update_leaves_j_unchanged() {
        let game = MatrixGame::easy();
        let policies = vec![vec![0.2, 0.3, 0.5], vec![0.6, 0.1, 0.3]];
        let zero: Vec<PolicyUpdate> = (0..2).map(|_| PolicyUpdate::new(1e-4)).collect();
        let after = apply_updates(&policies, &zero).unwrap();
        assert_eq!(game.expected_payoff(&after), game.expected_payoff(&policies));
    }

    #[test]
    fn monotone_condition_examples() {
        let mut critic = DecomposedCritic::new(vec![3], 1.0).unwrap();
        critic.set_local_values(0, KEY, vec![1.0, 1.0, 1.0]);
        let mut flat = PolicyUpdate::new(1.0);
        flat.steps.insert(KEY, vec![0.0, 0.0, 0.0]);
        assert!(check_monotone_condition(&[flat], &critic, STATE, &[KEY]));
        let mut tilted = PolicyUpdate::new(1.0);
        tilted.steps.insert(KEY, vec![0.1, 0.0, -0.1]);
        assert!(!check_monotone_condition(&[tilted], &critic, STATE, &[KEY]));
    }

    #[test]
    fn random_steps_rarely_satisfy_the_monotone_condition() {
        let mut rng = seeded(9);
        let mut holds = 0;
        for _ in 0..1000 {
            let mut critic = DecomposedCritic::new(vec![4], 1.0).unwrap();
            critic.set_local_values(0, KEY, (0..4).map(|_| rng.random_range(-1.0..1.0)).collect());
            let mut u = PolicyUpdate::new(1.0);
            let beta: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mean = beta.iter().sum::<f64>() / 4.0;
            u.steps.insert(KEY, beta.iter().map(|b| b - mean).collect());
            holds += check_monotone_condition(&[u], &critic, STATE, &[KEY]) as usize;
        }
        // 4! orderings: about 1 in 24 agree by chance.
        assert!(holds < 100, "{holds}");
    }

    #[test]
    fn weighted_sum_examples() {
        assert!(weighted_sum_check(&[1.0, 2.0, 3.0], &[-1.0, 0.0, 1.0]).unwrap());
        assert!(weighted_sum_check(&[1.0, 2.0], &[0.0, 0.0]).unwrap());
        assert!(matches!(weighted_sum_check(&[2.0, 1.0], &[-1.0, 1.0]), Err(Error::Precondition(_))));
        assert!(matches!(weighted_sum_check(&[1.0, 2.0], &[-1.0, 2.0]), Err(Error::Precondition(_))));
        assert!(matches!(weighted_sum_check(&[1.0], &[0.0, 0.0]), Err(Error::Precondition(_))));
    }

    #[test]
    fn weighted_sum_fuzz() {
        assert_eq!(fuzz_weighted_sum(100_000, &mut seeded(1)).unwrap(), 100_000);
    }

    proptest! {
        #[test]
        fn weighted_sum_never_negative(
            mut a in prop::collection::vec(-100.0f64..100.0, 1..10),
            seed in any::<u64>(),
        ) {
            let mut rng = seeded(seed);
            let mut b: Vec<f64> = (0..a.len()).map(|_| rng.random_range(-5.0..5.0)).collect();
            let mean = b.iter().sum::<f64>() / b.len() as f64;
            b.iter_mut().for_each(|x| *x -= mean);
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            prop_assert!(weighted_sum_check(&a, &b).unwrap());
        }
    }

    #[test]
    fn variance_matches_closed_form() {
        // Uniform intro game, agent A takes a0: C_B = Q_B(a_B) / 0.5 with
        // Q_B = (0.5, -2), so Var[C_B] = 4 * 1.5625 = 6.25.
        let game = MatrixGame::intro();
        let uniform = vec![vec![0.5, 0.5]; 2];
        let r = estimate_update_variance(&game, &uniform, 0, 0, &[0.0, 0.5, 1.0], 200_000, 4).unwrap();
        assert_eq!(r.points[0].delta, 0.0);
        assert_eq!(r.points[0].var_dop, 0.0);
        for q in &r.points[1..] {
            let expect = q.p * q.p * 6.25;
            assert!((q.delta - expect).abs() < 4.0 * q.se_tape, "{q:?}");
            assert!(q.dominance_holds() && q.decomposition_holds());
        }
        let s = r.slope.unwrap();
        assert!((s - 2.0).abs() < 0.05, "{s}");
    }

    #[test]
    fn degenerate_cross_terms_give_no_slope() {
        // Agent B's values do not depend on its action.
        let game = MatrixGame::new(vec![2, 2], vec![1.0, 1.0, 3.0, 3.0]).unwrap();
        let uniform = vec![vec![0.5, 0.5]; 2];
        let r = estimate_update_variance(&game, &uniform, 0, 0, &[0.2, 0.4], 1000, 0).unwrap();
        assert_eq!(r.slope, None);
    }

    #[test]
    fn identity_holds_for_arbitrary_critics() {
        let mut critic = DecomposedCritic::new(vec![2, 3], 1.0).unwrap();
        critic.set_local_values(0, KEY, vec![1.0, -2.0]);
        critic.set_local_values(1, KEY, vec![0.5, 3.0, -1.0]);
        critic.set_mix_raw(STATE, vec![0.7, -1.3]);
        critic.set_bias(STATE, 2.0);
        let topology = AgentTopology::from_rows(&[vec![true, true], vec![false, true]]).unwrap();
        let policies = vec![vec![0.4, 0.6], vec![0.2, 0.5, 0.3]];
        let r = baseline_identity_check(&critic, &topology, &policies, 50_000, 11).unwrap();
        assert!(r.agrees());
        for c in &r.components {
            assert!((c.baseline_free - c.exact).abs() < 4.0 * c.baseline_free_se + 1e-12, "{c:?}");
        }
    }

    #[test]
    fn diversity_extremes_and_ordering() {
        let cfg = LabConfig { diversity_samples: 300, ..LabConfig::default() };
        let (claims, report) = run_diversity_suite(&cfg, 5).unwrap();
        assert!(claims.iter().all(|c| c.pass), "{claims:?}");
        assert_eq!(report.model("fully_connected").unwrap().points[0].average_degree, 11.0);
        assert!(report.csv().starts_with("model,sample,average_degree,connectivity\n"));
        assert_eq!(report.csv().lines().count(), 1 + 5 * 300);
    }

    #[test]
    fn summary_round_trips() {
        let claims = vec![ClaimResult::new("a", true, "1/1"), ClaimResult::new("b/c", false, "x: y")];
        let text = render_summary(&claims);
        assert_eq!(text, "PASS a: 1/1\nFAIL b/c: x: y\n");
        assert_eq!(parse_summary(&text).unwrap(), claims);
        assert!(parse_summary("MAYBE x: y").is_err());
    }

    #[test]
    fn small_theory_suite_passes() {
        let cfg = LabConfig {
            trials: 20,
            variance_samples: 20_000,
            identity_samples: 20_000,
            weighted_sum_samples: 1000,
            ..LabConfig::default()
        };
        let out = run_theory_suite(&cfg, 2).unwrap();
        for c in &out.claims {
            assert!(c.pass, "{}", c.line());
        }
    }
}
