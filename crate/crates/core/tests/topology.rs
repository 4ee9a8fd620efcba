use proptest::prelude::*;
use tape_core::rng::seeded;
use tape_core::topology::{dump_topologies, edge_connectivity, parse_topologies};
use tape_core::{graph_metrics, sample_topology, AgentTopology, GraphModelConfig};

/// Minimum cut by enumerating every vertex bipartition.
fn brute_force_connectivity(n: usize, edges: &[(usize, usize)]) -> usize {
    if n < 2 {
        return 0;
    }
    (1..(1u32 << n) - 1)
        .filter(|s| s & 1 == 1)
        .map(|s| edges.iter().filter(|&&(a, b)| ((s >> a) & 1) != ((s >> b) & 1)).count())
        .min()
        .unwrap()
}

fn arb_topology() -> impl Strategy<Value = AgentTopology> {
    (2usize..7).prop_flat_map(|n| {
        proptest::collection::vec(any::<bool>(), n * n)
            .prop_map(move |bits| AgentTopology::from_fn(n, |i, j| bits[i * n + j]))
    })
}

proptest! {
    #[test]
    fn connectivity_matches_cut_enumeration(t in arb_topology()) {
        let edges = t.undirected_edges();
        prop_assert_eq!(edge_connectivity(t.n(), &edges), brute_force_connectivity(t.n(), &edges));
    }

    #[test]
    fn connectivity_is_bounded_by_minimum_degree(t in arb_topology()) {
        let edges = t.undirected_edges();
        let min_degree = (0..t.n()).map(|v| edges.iter().filter(|&&(a, b)| a == v || b == v).count()).min().unwrap();
        prop_assert!(graph_metrics(&t).connectivity <= min_degree);
    }

    #[test]
    fn sampled_topologies_keep_self_loops(seed in any::<u64>(), p in 0.0f64..=1.0, n in 1usize..10) {
        let t = sample_topology(&GraphModelConfig::erdos_renyi(p), n, &mut seeded(seed)).unwrap();
        prop_assert!((0..n).all(|i| t.has_edge(i, i)));
    }

    #[test]
    fn dumps_round_trip(seed in any::<u64>(), count in 1usize..6) {
        let mut rng = seeded(seed);
        let ts: Vec<AgentTopology> =
            (0..count).map(|_| sample_topology(&GraphModelConfig::erdos_renyi(0.4), 5, &mut rng).unwrap()).collect();
        prop_assert_eq!(parse_topologies(&dump_topologies(&ts)).unwrap(), ts);
    }
}

#[test]
fn extreme_models_have_known_metrics() {
    let mut rng = seeded(0);
    let full = sample_topology(&GraphModelConfig::fully_connected(), 6, &mut rng).unwrap();
    let empty = sample_topology(&GraphModelConfig::edgeless(), 6, &mut rng).unwrap();
    assert_eq!(graph_metrics(&full).average_degree, 5.0);
    assert_eq!(graph_metrics(&full).connectivity, 5);
    assert_eq!(graph_metrics(&empty).average_degree, 0.0);
    assert_eq!(graph_metrics(&empty).connectivity, 0);
}

#[test]
fn er_edge_rate_matches_p() {
    let mut rng = seeded(9);
    let n = 10;
    let draws = 2000;
    let edges: usize = (0..draws)
        .map(|_| sample_topology(&GraphModelConfig::erdos_renyi(0.3), n, &mut rng).unwrap().off_diagonal_edges())
        .sum();
    let rate = edges as f64 / (draws * n * (n - 1)) as f64;
    // 180k Bernoulli(0.3) draws: SE ~ 1.1e-3.
    assert!((rate - 0.3).abs() < 5e-3, "rate {rate}");
}
