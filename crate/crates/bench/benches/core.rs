use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};
use tape_core::critic::LabeledStep;
use tape_core::learner::{coma_gradient, dop_gradient, stochastic_tape_gradient, train, Algorithm, LearnerConfig};
use tape_core::rng::seeded;
use tape_core::topology::edge_connectivity;
use tape_core::{
    sample_topology, AgentTopology, DecomposedCritic, EnvDescriptor, EnvKind, GraphModelConfig, JointCritic,
    TabularPolicy, Transition,
};

fn batch(n_agents: usize, len: usize) -> Vec<Transition> {
    (0..len)
        .map(|t| Transition {
            state_key: (t % 3) as u64,
            agent_keys: (0..n_agents).map(|i| ((t + i) % 5) as u64).collect(),
            actions: (0..n_agents).map(|i| (t * 7 + i) % 3).collect(),
            reward: (t % 4) as f64 - 1.5,
            behavior_probs: vec![1.0 / 3.0; n_agents],
        })
        .collect()
}

fn critic(n_agents: usize) -> DecomposedCritic {
    let mut c = DecomposedCritic::new(vec![3; n_agents], 0.99).unwrap();
    for i in 0..n_agents {
        for key in 0..5 {
            c.set_local_values(i, key, vec![0.1 * i as f64, -0.2 * key as f64, 0.3]);
        }
    }
    c
}

fn topology(c: &mut Criterion) {
    let mut g = c.benchmark_group("topology");
    for n in [8usize, 32] {
        let models = [
            ("er", GraphModelConfig::erdos_renyi(0.3)),
            ("ws", GraphModelConfig::watts_strogatz(4, 0.2)),
            ("ba", GraphModelConfig::barabasi_albert(2)),
        ];
        for (label, model) in models {
            let mut rng = seeded(1);
            g.bench_with_input(BenchmarkId::new(format!("sample_{label}"), n), &n, |b, &n| {
                b.iter(|| sample_topology(black_box(&model), n, &mut rng).unwrap())
            });
        }
        let t = sample_topology(&GraphModelConfig::erdos_renyi(0.5), n, &mut seeded(2)).unwrap();
        let edges = t.undirected_edges();
        g.bench_with_input(BenchmarkId::new("edge_connectivity", n), &n, |b, &n| {
            b.iter(|| edge_connectivity(n, black_box(&edges)))
        });
    }
    g.finish();
}

fn estimators(c: &mut Criterion) {
    let n = 8;
    let steps = batch(n, 256);
    let refs: Vec<&Transition> = steps.iter().collect();
    let critic = critic(n);
    let policies = vec![TabularPolicy::uniform(3); n];
    let t = sample_topology(&GraphModelConfig::erdos_renyi(0.5), n, &mut seeded(3)).unwrap();
    let mut joint = JointCritic::new(vec![3; n], 0.99);
    for s in &steps {
        joint.set_q(s.state_key, &s.actions, s.reward);
    }

    let mut g = c.benchmark_group("gradient");
    g.bench_function("stochastic_tape", |b| b.iter(|| stochastic_tape_gradient(&refs, &t, &critic, &policies)));
    g.bench_function("stochastic_tape_edgeless", |b| {
        let id = AgentTopology::identity(n);
        b.iter(|| stochastic_tape_gradient(&refs, &id, &critic, &policies))
    });
    g.bench_function("dop", |b| b.iter(|| dop_gradient(&refs, &critic, &policies)));
    g.bench_function("coma", |b| b.iter(|| coma_gradient(&refs, &joint, &policies)));
    g.finish();
}

fn critic_update(c: &mut Criterion) {
    let n = 8;
    let steps = batch(n, 256);
    let labeled: Vec<LabeledStep<'_>> = steps.iter().map(|s| LabeledStep::new(s, s.reward)).collect();
    c.bench_function("critic/update_256", |b| {
        b.iter_batched(|| critic(n), |mut cr| cr.update(&labeled, &[], 0.0, 0.01), BatchSize::SmallInput)
    });
}

fn training(c: &mut Criterion) {
    let mut g = c.benchmark_group("train");
    g.sample_size(10);
    let mut cfg = LearnerConfig::matrix_game(Algorithm::StochasticTape);
    cfg.episodes = 1000;
    let hard = EnvDescriptor::new(EnvKind::Hard);
    g.bench_function("hard_1000_episodes", |b| b.iter(|| train(&cfg, &hard, 0).unwrap()));
    let mut cfg = LearnerConfig::new(Algorithm::StochasticTape);
    cfg.max_env_steps = Some(10_000);
    cfg.eval_episodes = 5;
    let foraging = EnvDescriptor::new(EnvKind::Foraging);
    g.bench_function("foraging_10k_steps", |b| b.iter(|| train(&cfg, &foraging, 0).unwrap()));
    g.finish();
}

criterion_group!(benches, topology, estimators, critic_update, training);
criterion_main!(benches);
