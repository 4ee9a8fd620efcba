//! Agent topologies and the random-graph models that generate them.
//!
//! An [`AgentTopology`] is a directed adjacency matrix over agents with every
//! self-edge present. Edge `i -> j` means agent `i` includes agent `j`'s
//! utility in its own policy update. Topologies are immutable once built.

use std::collections::VecDeque;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::rng::LabRng;

/// Self-looped directed adjacency over `n` agents, stored row-major.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct AgentTopology {
    n: usize,
    adj: Vec<bool>,
}

impl AgentTopology {
    /// Only self-edges: every agent is its own coalition.
    pub fn identity(n: usize) -> Self {
        assert!(n >= 1, "a topology needs at least one agent");
        Self::from_fn(n, |i, j| i == j)
    }

    pub fn fully_connected(n: usize) -> Self {
        assert!(n >= 1, "a topology needs at least one agent");
        Self::from_fn(n, |_, _| true)
    }

    /// Builds a topology from an edge predicate. Self-edges are forced on.
    pub fn from_fn(n: usize, mut edge: impl FnMut(usize, usize) -> bool) -> Self {
        let mut adj = vec![false; n * n];
        for i in 0..n {
            for j in 0..n {
                adj[i * n + j] = i == j || edge(i, j);
            }
        }
        Self { n, adj }
    }

    /// Validates an explicit adjacency matrix.
    pub fn from_rows(rows: &[Vec<bool>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::Contract("topology must have at least one agent".into()));
        }
        let mut adj = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Contract(format!("row {i} has {} entries, expected {n}", row.len())));
            }
            if !row[i] {
                return Err(Error::Contract(format!("self-edge ({i},{i}) is missing")));
            }
            adj.extend_from_slice(row);
        }
        Ok(Self { n, adj })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adj[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[bool] {
        &self.adj[i * self.n..(i + 1) * self.n]
    }

    /// Returns a copy with row `i` replaced by `other`'s row `i`.
    pub fn with_row_from(&self, i: usize, other: &AgentTopology) -> Self {
        assert_eq!(self.n, other.n);
        let mut t = self.clone();
        t.adj[i * self.n..(i + 1) * self.n].copy_from_slice(other.row(i));
        t
    }

    /// Number of directed off-diagonal edges.
    pub fn off_diagonal_edges(&self) -> usize {
        (0..self.n)
            .flat_map(|i| (0..self.n).map(move |j| (i, j)))
            .filter(|&(i, j)| i != j && self.has_edge(i, j))
            .count()
    }

    pub fn is_identity(&self) -> bool {
        self.off_diagonal_edges() == 0
    }

    /// Undirected simple projection: `{i, j}` with `i < j` present when either
    /// direction is.
    pub fn undirected_edges(&self) -> Vec<(usize, usize)> {
        let mut edges = Vec::new();
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                if self.has_edge(i, j) || self.has_edge(j, i) {
                    edges.push((i, j));
                }
            }
        }
        edges
    }

    /// One CSV record: `n` followed by the row-major 0/1 entries.
    pub fn to_csv_record(&self) -> String {
        let mut s = self.n.to_string();
        for &e in &self.adj {
            s.push(',');
            s.push(if e { '1' } else { '0' });
        }
        s
    }

    pub fn from_csv_record(line: &str) -> Result<Self> {
        let mut fields = line.trim().split(',');
        let n: usize = fields
            .next()
            .and_then(|f| f.trim().parse().ok())
            .ok_or_else(|| Error::Parse { line: 1, msg: "missing agent count".into() })?;
        let entries: Vec<bool> = fields
            .map(|f| match f.trim() {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(Error::Parse { line: 1, msg: format!("bad entry {other:?}") }),
            })
            .collect::<Result<_>>()?;
        if n == 0 || entries.len() != n * n {
            return Err(Error::Parse { line: 1, msg: format!("expected {} entries, found {}", n * n, entries.len()) });
        }
        let rows: Vec<Vec<bool>> = entries.chunks(n).map(|c| c.to_vec()).collect();
        Self::from_rows(&rows)
    }
}

impl fmt::Debug for AgentTopology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "AgentTopology(n={})", self.n)?;
        for i in 0..self.n {
            let row: String = self.row(i).iter().map(|&e| if e { '1' } else { '.' }).collect();
            writeln!(f, "  {row}")?;
        }
        Ok(())
    }
}

/// Which random-graph family generates topologies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphKind {
    Edgeless,
    FullyConnected,
    #[serde(alias = "er")]
    ErdosRenyi,
    #[serde(alias = "ws")]
    WattsStrogatz,
    #[serde(alias = "ba")]
    BarabasiAlbert,
}

impl GraphKind {
    pub fn label(self) -> &'static str {
        match self {
            GraphKind::Edgeless => "edgeless",
            GraphKind::FullyConnected => "fully_connected",
            GraphKind::ErdosRenyi => "er",
            GraphKind::WattsStrogatz => "ws",
            GraphKind::BarabasiAlbert => "ba",
        }
    }
}

/// Parameters for every supported model; only the active model's fields are
/// consulted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphModelConfig {
    pub kind: GraphKind,
    /// Edge probability (ER).
    pub p: f64,
    /// Even ring-lattice neighbour count (WS).
    pub ws_k: usize,
    /// Rewiring probability (WS).
    pub ws_beta: f64,
    /// Edges added per arriving node (BA).
    pub ba_m: usize,
}

impl Default for GraphModelConfig {
    fn default() -> Self {
        Self { kind: GraphKind::ErdosRenyi, p: 0.3, ws_k: 4, ws_beta: 0.3, ba_m: 2 }
    }
}

impl GraphModelConfig {
    pub fn erdos_renyi(p: f64) -> Self {
        Self { kind: GraphKind::ErdosRenyi, p, ..Self::default() }
    }

    pub fn watts_strogatz(k: usize, beta: f64) -> Self {
        Self { kind: GraphKind::WattsStrogatz, ws_k: k, ws_beta: beta, ..Self::default() }
    }

    pub fn barabasi_albert(m: usize) -> Self {
        Self { kind: GraphKind::BarabasiAlbert, ba_m: m, ..Self::default() }
    }

    pub fn edgeless() -> Self {
        Self { kind: GraphKind::Edgeless, ..Self::default() }
    }

    pub fn fully_connected() -> Self {
        Self { kind: GraphKind::FullyConnected, ..Self::default() }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if n == 0 {
            return Err(config_err("agent count must be at least 1"));
        }
        match self.kind {
            GraphKind::Edgeless | GraphKind::FullyConnected => Ok(()),
            GraphKind::ErdosRenyi => {
                if !(0.0..=1.0).contains(&self.p) {
                    return Err(config_err(format!("p = {} is outside [0, 1]", self.p)));
                }
                Ok(())
            }
            GraphKind::WattsStrogatz => {
                if !self.ws_k.is_multiple_of(2) {
                    return Err(config_err(format!("ws_k = {} must be even", self.ws_k)));
                }
                if self.ws_k >= n {
                    return Err(config_err(format!("ws_k = {} must be below the agent count {n}", self.ws_k)));
                }
                if !(0.0..=1.0).contains(&self.ws_beta) {
                    return Err(config_err(format!("ws_beta = {} is outside [0, 1]", self.ws_beta)));
                }
                Ok(())
            }
            GraphKind::BarabasiAlbert => {
                if self.ba_m < 1 {
                    return Err(config_err("ba_m must be at least 1"));
                }
                if self.ba_m >= n {
                    return Err(config_err(format!("ba_m = {} must be below the agent count {n}", self.ba_m)));
                }
                Ok(())
            }
        }
    }
}

/// Draws one topology over `n` agents.
pub fn sample_topology(config: &GraphModelConfig, n: usize, rng: &mut LabRng) -> Result<AgentTopology> {
    config.validate(n)?;
    Ok(match config.kind {
        GraphKind::Edgeless => AgentTopology::identity(n),
        GraphKind::FullyConnected => AgentTopology::fully_connected(n),
        GraphKind::ErdosRenyi => {
            let p = config.p;
            AgentTopology::from_fn(n, |i, j| i != j && rng.random::<f64>() < p)
        }
        GraphKind::WattsStrogatz => from_undirected(n, &watts_strogatz(n, config.ws_k, config.ws_beta, rng)),
        GraphKind::BarabasiAlbert => from_undirected(n, &barabasi_albert(n, config.ba_m, rng)),
    })
}

/// A model bound to a private random stream.
#[derive(Debug, Clone)]
pub struct TopologySampler {
    config: GraphModelConfig,
    n: usize,
    rng: LabRng,
}

impl TopologySampler {
    pub fn new(config: GraphModelConfig, n: usize, rng: LabRng) -> Result<Self> {
        config.validate(n)?;
        Ok(Self { config, n, rng })
    }

    pub fn config(&self) -> &GraphModelConfig {
        &self.config
    }

    pub fn sample(&mut self) -> AgentTopology {
        sample_topology(&self.config, self.n, &mut self.rng).expect("validated at construction")
    }

    pub fn rng_mut(&mut self) -> &mut LabRng {
        &mut self.rng
    }
}

fn from_undirected(n: usize, und: &[Vec<bool>]) -> AgentTopology {
    AgentTopology::from_fn(n, |i, j| und[i][j] || und[j][i])
}

/// Ring lattice with `k/2` neighbours on each side, each lattice edge rewired
/// to a uniformly chosen endpoint with probability `beta`.
fn watts_strogatz(n: usize, k: usize, beta: f64, rng: &mut LabRng) -> Vec<Vec<bool>> {
    let mut g = vec![vec![false; n]; n];
    for u in 0..n {
        for j in 1..=k / 2 {
            let v = (u + j) % n;
            g[u][v] = true;
            g[v][u] = true;
        }
    }
    for j in 1..=k / 2 {
        for u in 0..n {
            let v = (u + j) % n;
            if !g[u][v] || rng.random::<f64>() >= beta {
                continue;
            }
            let degree = g[u].iter().filter(|&&e| e).count();
            if degree >= n - 1 {
                continue;
            }
            let mut w = rng.random_range(0..n);
            while w == u || g[u][w] {
                w = rng.random_range(0..n);
            }
            g[u][v] = false;
            g[v][u] = false;
            g[u][w] = true;
            g[w][u] = true;
        }
    }
    g
}

/// Preferential attachment grown from a star on `m + 1` nodes.
fn barabasi_albert(n: usize, m: usize, rng: &mut LabRng) -> Vec<Vec<bool>> {
    let mut g = vec![vec![false; n]; n];
    let mut repeated: Vec<usize> = Vec::new();
    for leaf in 1..=m {
        g[0][leaf] = true;
        g[leaf][0] = true;
        repeated.push(0);
        repeated.push(leaf);
    }
    for source in (m + 1)..n {
        let mut targets: Vec<usize> = Vec::with_capacity(m);
        while targets.len() < m {
            let x = repeated[rng.random_range(0..repeated.len())];
            if !targets.contains(&x) {
                targets.push(x);
            }
        }
        for &t in &targets {
            g[source][t] = true;
            g[t][source] = true;
            repeated.push(t);
            repeated.push(source);
        }
    }
    g
}

/// Average degree and global edge connectivity of the undirected projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphMetrics {
    pub average_degree: f64,
    pub connectivity: usize,
}

pub fn graph_metrics(t: &AgentTopology) -> GraphMetrics {
    let edges = t.undirected_edges();
    GraphMetrics {
        average_degree: 2.0 * edges.len() as f64 / t.n() as f64,
        connectivity: edge_connectivity(t.n(), &edges),
    }
}

/// Minimum number of edges whose removal disconnects the graph, computed as
/// the smallest unit-capacity max-flow from node 0 to every other node.
pub fn edge_connectivity(n: usize, edges: &[(usize, usize)]) -> usize {
    if n < 2 {
        return 0;
    }
    let mut cap = vec![vec![0i32; n]; n];
    for &(u, v) in edges {
        cap[u][v] = 1;
        cap[v][u] = 1;
    }
    let mut best = usize::MAX;
    for t in 1..n {
        let f = max_flow(&cap, 0, t, best);
        best = best.min(f);
        if best == 0 {
            break;
        }
    }
    best
}

/// Edmonds–Karp on a dense capacity matrix; stops once `limit` is reached.
fn max_flow(cap: &[Vec<i32>], s: usize, t: usize, limit: usize) -> usize {
    let n = cap.len();
    let mut residual = cap.to_vec();
    let mut flow = 0;
    let mut parent = vec![usize::MAX; n];
    while flow < limit {
        parent.iter_mut().for_each(|p| *p = usize::MAX);
        parent[s] = s;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            if u == t {
                break;
            }
            for v in 0..n {
                if parent[v] == usize::MAX && residual[u][v] > 0 {
                    parent[v] = u;
                    queue.push_back(v);
                }
            }
        }
        if parent[t] == usize::MAX {
            break;
        }
        let mut v = t;
        while v != s {
            let u = parent[v];
            residual[u][v] -= 1;
            residual[v][u] += 1;
            v = u;
        }
        flow += 1;
    }
    flow
}

/// Writes one CSV record per topology.
pub fn dump_topologies<'a>(topologies: impl IntoIterator<Item = &'a AgentTopology>) -> String {
    let mut out = String::new();
    for t in topologies {
        out.push_str(&t.to_csv_record());
        out.push('\n');
    }
    out
}

pub fn parse_topologies(text: &str) -> Result<Vec<AgentTopology>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            AgentTopology::from_csv_record(l).map_err(|e| match e {
                Error::Parse { msg, .. } => Error::Parse { line: i + 1, msg },
                other => other,
            })
        })
        .collect()
}
