//! Developer and contribution networks.
//!
//! The developer network links two developers whenever they modified a common
//! script; its maximum edge betweenness over a script's edges measures how
//! disjoint the developer groups around that script are. The contribution
//! network is bipartite (developers and scripts) with commit counts as edge
//! weights; the betweenness of a script node over developer pairs measures
//! unfocused contribution.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};

use serde::Serialize;
use thiserror::Error;

use crate::ingest::CommitRecord;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NetworkError {
    #[error("script {0} is not part of the network")]
    UnknownScript(String),
}

/// Scripts modified by each developer, and developers of each script.
fn touches<'a>(
    commits: &'a [CommitRecord],
    scripts: &BTreeSet<String>,
) -> BTreeMap<&'a str, BTreeMap<&'a str, u64>> {
    // script -> developer -> commits
    let mut by_script: BTreeMap<&str, BTreeMap<&str, u64>> = BTreeMap::new();
    for c in commits {
        let mut seen = BTreeSet::new();
        for ch in &c.changes {
            if scripts.contains(&ch.path) && seen.insert(ch.path.as_str()) {
                *by_script
                    .entry(ch.path.as_str())
                    .or_default()
                    .entry(c.author_id.as_str())
                    .or_default() += 1;
            }
        }
    }
    by_script
}

/// Undirected, unweighted co-modification graph over developers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeveloperNetwork {
    pub nodes: Vec<String>,
    /// Edge endpoints as indices into `nodes` (lower index first), with the
    /// scripts both developers modified.
    pub edges: BTreeMap<(usize, usize), BTreeSet<String>>,
    /// Developers of each script, as node indices.
    pub script_developers: BTreeMap<String, BTreeSet<usize>>,
}

pub fn build_developer_network(commits: &[CommitRecord], scripts: &BTreeSet<String>) -> DeveloperNetwork {
    let by_script = touches(commits, scripts);
    let nodes: Vec<String> = by_script
        .values()
        .flat_map(|devs| devs.keys().map(|d| d.to_string()))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let index: BTreeMap<&str, usize> = nodes.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let mut edges: BTreeMap<(usize, usize), BTreeSet<String>> = BTreeMap::new();
    let mut script_developers = BTreeMap::new();
    for (script, devs) in &by_script {
        let ids: BTreeSet<usize> = devs.keys().map(|d| index[d]).collect();
        let list: Vec<usize> = ids.iter().copied().collect();
        for (i, &a) in list.iter().enumerate() {
            for &b in &list[i + 1..] {
                edges.entry((a, b)).or_default().insert(script.to_string());
            }
        }
        script_developers.insert(script.to_string(), ids);
    }
    DeveloperNetwork {
        nodes,
        edges,
        script_developers,
    }
}

impl DeveloperNetwork {
    /// Builds a network directly from an edge list (used for fixtures).
    pub fn from_edges(node_count: usize, edges: &[(usize, usize)]) -> Self {
        let mut map = BTreeMap::new();
        for &(a, b) in edges {
            assert!(a != b, "self-loop");
            map.entry((a.min(b), a.max(b))).or_insert_with(BTreeSet::new);
        }
        Self {
            nodes: (0..node_count).map(|i| format!("dev{i}")).collect(),
            edges: map,
            script_developers: BTreeMap::new(),
        }
    }

    fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for &(a, b) in self.edges.keys() {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }

    /// Raw edge betweenness: for every edge, the sum over unordered node
    /// pairs of the fraction of shortest paths that use the edge.
    pub fn raw_edge_betweenness(&self) -> BTreeMap<(usize, usize), f64> {
        let n = self.nodes.len();
        let adj = self.adjacency();
        let mut score: BTreeMap<(usize, usize), f64> = self.edges.keys().map(|&e| (e, 0.0)).collect();
        let mut sigma = vec![0.0f64; n];
        let mut dist = vec![usize::MAX; n];
        let mut delta = vec![0.0f64; n];
        for s in 0..n {
            sigma.iter_mut().for_each(|x| *x = 0.0);
            dist.iter_mut().for_each(|x| *x = usize::MAX);
            delta.iter_mut().for_each(|x| *x = 0.0);
            let mut order = Vec::with_capacity(n);
            let mut queue = VecDeque::from([s]);
            sigma[s] = 1.0;
            dist[s] = 0;
            while let Some(v) = queue.pop_front() {
                order.push(v);
                for &w in &adj[v] {
                    if dist[w] == usize::MAX {
                        dist[w] = dist[v] + 1;
                        queue.push_back(w);
                    }
                    if dist[w] == dist[v] + 1 {
                        sigma[w] += sigma[v];
                    }
                }
            }
            for &w in order.iter().rev() {
                for &v in &adj[w] {
                    if dist[v] != usize::MAX && dist[v] + 1 == dist[w] {
                        let c = sigma[v] / sigma[w] * (1.0 + delta[w]);
                        *score.get_mut(&(v.min(w), v.max(w))).expect("edge exists") += c;
                        delta[v] += c;
                    }
                }
            }
        }
        // every unordered pair was visited from both ends
        score.values_mut().for_each(|v| *v /= 2.0);
        score
    }

    /// Edge betweenness, divided by the number of node pairs n(n-1)/2 when
    /// `normalize` is set.
    pub fn edge_betweenness_with(&self, normalize: bool) -> BTreeMap<(usize, usize), f64> {
        let mut scores = self.raw_edge_betweenness();
        let n = self.nodes.len() as f64;
        if normalize && n >= 2.0 {
            let pairs = n * (n - 1.0) / 2.0;
            scores.values_mut().for_each(|v| *v /= pairs);
        }
        scores
    }

    pub fn edge_betweenness(&self) -> BTreeMap<(usize, usize), f64> {
        self.edge_betweenness_with(true)
    }

    /// Maximum betweenness over edges whose provenance includes `script`.
    pub fn max_edge_betweenness_for_script(
        &self,
        scores: &BTreeMap<(usize, usize), f64>,
        script: &str,
    ) -> Result<f64, NetworkError> {
        let devs = self
            .script_developers
            .get(script)
            .ok_or_else(|| NetworkError::UnknownScript(script.to_string()))?;
        if devs.len() < 2 {
            return Ok(0.0);
        }
        Ok(self
            .edges
            .iter()
            .filter(|(_, prov)| prov.contains(script))
            .filter_map(|(e, _)| scores.get(e).copied())
            .fold(0.0, f64::max))
    }
}

/// Convenience wrapper computing normalized network-wide betweenness first.
pub fn max_edge_betweenness_for_script(net: &DeveloperNetwork, script: &str) -> Result<f64, NetworkError> {
    net.max_edge_betweenness_for_script(&net.edge_betweenness(), script)
}

pub fn edge_betweenness(net: &DeveloperNetwork) -> BTreeMap<(usize, usize), f64> {
    net.edge_betweenness()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum NodeKind {
    Developer,
    Script,
}

/// Weighted bipartite developer-script graph.
///
/// Node indices `0..developers.len()` are developers; the following
/// `scripts.len()` indices are scripts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContributionNetwork {
    pub developers: Vec<String>,
    pub scripts: Vec<String>,
    /// (developer index, script index) -> commit count.
    pub edges: BTreeMap<(usize, usize), u64>,
}

pub fn build_contribution_network(commits: &[CommitRecord], scripts: &BTreeSet<String>) -> ContributionNetwork {
    let by_script = touches(commits, scripts);
    let developers: Vec<String> = by_script
        .values()
        .flat_map(|devs| devs.keys().map(|d| d.to_string()))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let dev_index: BTreeMap<&str, usize> = developers.iter().enumerate().map(|(i, d)| (d.as_str(), i)).collect();
    let script_names: Vec<String> = by_script.keys().map(|s| s.to_string()).collect();
    let mut edges = BTreeMap::new();
    for (si, devs) in by_script.values().enumerate() {
        for (dev, &count) in devs {
            edges.insert((dev_index[dev], si), count);
        }
    }
    ContributionNetwork {
        developers,
        scripts: script_names,
        edges,
    }
}

impl ContributionNetwork {
    /// Builds a network from named weighted edges (used for fixtures).
    pub fn from_weighted_edges<D: AsRef<str>, S: AsRef<str>>(edges: &[(D, S, u64)]) -> Self {
        let developers: Vec<String> = edges
            .iter()
            .map(|(d, _, _)| d.as_ref().to_string())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let scripts: Vec<String> = edges
            .iter()
            .map(|(_, s, _)| s.as_ref().to_string())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let map = edges
            .iter()
            .map(|(d, s, w)| {
                assert!(*w >= 1, "edge weights are commit counts");
                let di = developers.iter().position(|x| x == d.as_ref()).unwrap();
                let si = scripts.iter().position(|x| x == s.as_ref()).unwrap();
                ((di, si), *w)
            })
            .collect();
        Self {
            developers,
            scripts,
            edges: map,
        }
    }

    pub fn node_count(&self) -> usize {
        self.developers.len() + self.scripts.len()
    }

    pub fn kind(&self, node: usize) -> NodeKind {
        if node < self.developers.len() {
            NodeKind::Developer
        } else {
            NodeKind::Script
        }
    }

    pub fn script_node(&self, script: &str) -> Option<usize> {
        self.scripts
            .iter()
            .position(|s| s == script)
            .map(|i| i + self.developers.len())
    }

    /// Weighted adjacency list over all nodes.
    pub fn adjacency(&self) -> Vec<Vec<(usize, u64)>> {
        let mut adj = vec![Vec::new(); self.node_count()];
        let offset = self.developers.len();
        for (&(d, s), &w) in &self.edges {
            adj[d].push((offset + s, w));
            adj[offset + s].push((d, w));
        }
        adj
    }

    /// Betweenness of every node restricted to developer endpoint pairs,
    /// with edge weights as path lengths. Values are unnormalized.
    pub fn developer_pair_betweenness(&self) -> Vec<f64> {
        let n = self.node_count();
        let devs = self.developers.len();
        let adj = self.adjacency();
        let mut score = vec![0.0f64; n];
        for s in 0..devs {
            let mut dist = vec![u64::MAX; n];
            let mut sigma = vec![0.0f64; n];
            let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
            let mut settled = vec![false; n];
            let mut order = Vec::with_capacity(n);
            let mut heap = BinaryHeap::new();
            dist[s] = 0;
            sigma[s] = 1.0;
            heap.push(Reverse((0u64, s)));
            while let Some(Reverse((d, v))) = heap.pop() {
                if settled[v] || d > dist[v] {
                    continue;
                }
                settled[v] = true;
                order.push(v);
                for &(w, weight) in &adj[v] {
                    let nd = d + weight;
                    if nd < dist[w] {
                        dist[w] = nd;
                        sigma[w] = sigma[v];
                        preds[w].clear();
                        preds[w].push(v);
                        heap.push(Reverse((nd, w)));
                    } else if nd == dist[w] && !settled[w] {
                        sigma[w] += sigma[v];
                        preds[w].push(v);
                    }
                }
            }
            let mut delta = vec![0.0f64; n];
            for &w in order.iter().rev() {
                let endpoint = if w < devs && w != s { 1.0 } else { 0.0 };
                for &v in &preds[w] {
                    delta[v] += sigma[v] / sigma[w] * (endpoint + delta[w]);
                }
                if w != s {
                    score[w] += delta[w];
                }
            }
        }
        score.iter_mut().for_each(|v| *v /= 2.0);
        score
    }

    /// Betweenness centrality of one script node over developer pairs.
    pub fn betweenness_centrality(&self, script: &str) -> Result<f64, NetworkError> {
        let node = self
            .script_node(script)
            .ok_or_else(|| NetworkError::UnknownScript(script.to_string()))?;
        Ok(self.developer_pair_betweenness()[node])
    }

    /// Betweenness of every script, keyed by path.
    pub fn script_betweenness(&self) -> BTreeMap<String, f64> {
        let all = self.developer_pair_betweenness();
        let offset = self.developers.len();
        self.scripts
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), all[offset + i]))
            .collect()
    }
}

pub fn betweenness_centrality(net: &ContributionNetwork, script: &str) -> Result<f64, NetworkError> {
    net.betweenness_centrality(script)
}

#[derive(Debug, Serialize)]
pub struct GraphDumpEdge {
    pub source: String,
    pub target: String,
    pub weight: u64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub provenance: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct GraphDump {
    pub nodes: Vec<String>,
    pub edges: Vec<GraphDumpEdge>,
}

impl From<&DeveloperNetwork> for GraphDump {
    fn from(net: &DeveloperNetwork) -> Self {
        GraphDump {
            nodes: net.nodes.clone(),
            edges: net
                .edges
                .iter()
                .map(|(&(a, b), prov)| GraphDumpEdge {
                    source: net.nodes[a].clone(),
                    target: net.nodes[b].clone(),
                    weight: 1,
                    provenance: prov.iter().cloned().collect(),
                })
                .collect(),
        }
    }
}

impl From<&ContributionNetwork> for GraphDump {
    fn from(net: &ContributionNetwork) -> Self {
        GraphDump {
            nodes: net.developers.iter().chain(&net.scripts).cloned().collect(),
            edges: net
                .edges
                .iter()
                .map(|(&(d, s), &w)| GraphDumpEdge {
                    source: net.developers[d].clone(),
                    target: net.scripts[s].clone(),
                    weight: w,
                    provenance: Vec::new(),
                })
                .collect(),
        }
    }
}
