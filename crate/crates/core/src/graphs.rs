//! Random DAG generation and graph-theoretic oracles.
//!
//! The generators cover three topology families (Erdős–Rényi, scale-free
//! preferential attachment, bipartite), all acyclic by construction and
//! bit-reproducible for a fixed seed. Moralization and latent marginalization
//! provide the ground-truth references the rest of the pipeline is scored
//! against.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::Path;

use crate::seed;
use crate::{Error, Result};

/// A directed acyclic graph over nodes `0..d`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dag {
    d: usize,
    /// Ordered pairs `(i, j)` meaning `i -> j`, kept sorted for canonical output.
    edges: Vec<(usize, usize)>,
}

impl Dag {
    /// Builds a DAG after checking node range, self-loops and acyclicity.
    pub fn new(d: usize, mut edges: Vec<(usize, usize)>) -> Result<Self> {
        if d == 0 {
            return Err(Error::Parameter("node count must be positive".into()));
        }
        edges.sort_unstable();
        edges.dedup();
        for &(i, j) in &edges {
            if i >= d || j >= d {
                return Err(Error::Contract(format!(
                    "edge ({i},{j}) out of range for d={d}"
                )));
            }
            if i == j {
                return Err(Error::Contract(format!("self-loop on node {i}")));
            }
        }
        let dag = Dag { d, edges };
        if !is_acyclic(&dag.adjacency()) {
            return Err(Error::Contract("edge set contains a directed cycle".into()));
        }
        Ok(dag)
    }

    pub fn node_count(&self) -> usize {
        self.d
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Dense 0/1 adjacency with `adj[(i, j)] = 1` for edge `i -> j`.
    pub fn adjacency(&self) -> DMatrix<f64> {
        let mut adj = DMatrix::zeros(self.d, self.d);
        for &(i, j) in &self.edges {
            adj[(i, j)] = 1.0;
        }
        adj
    }
}

/// Ground truth after marginalizing latent variables: directed edges among
/// observed nodes plus bidirected edges for latent-confounded pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    d: usize,
    directed: Vec<(usize, usize)>,
    /// Unordered pairs stored as `(min, max)`.
    bidirected: Vec<(usize, usize)>,
    latents: usize,
}

impl GroundTruth {
    pub fn new(
        d: usize,
        directed: Vec<(usize, usize)>,
        bidirected: Vec<(usize, usize)>,
        latents: usize,
    ) -> Result<Self> {
        let dag = Dag::new(d, directed)?;
        let mut bidirected: Vec<(usize, usize)> = bidirected
            .into_iter()
            .map(|(i, j)| (i.min(j), i.max(j)))
            .collect();
        bidirected.sort_unstable();
        bidirected.dedup();
        for &(i, j) in &bidirected {
            if j >= d {
                return Err(Error::Contract(format!(
                    "bidirected pair ({i},{j}) out of range"
                )));
            }
            if i == j {
                return Err(Error::Contract(format!("bidirected self-pair on node {i}")));
            }
        }
        if latents == 0 && !bidirected.is_empty() {
            return Err(Error::Contract(
                "bidirected edges require at least one latent".into(),
            ));
        }
        Ok(GroundTruth {
            d,
            directed: dag.edges,
            bidirected,
            latents,
        })
    }

    /// Truth without latents: the DAG's own edge set.
    pub fn from_dag(dag: &Dag) -> Self {
        GroundTruth {
            d: dag.d,
            directed: dag.edges.clone(),
            bidirected: Vec::new(),
            latents: 0,
        }
    }

    pub fn node_count(&self) -> usize {
        self.d
    }

    pub fn directed(&self) -> &[(usize, usize)] {
        &self.directed
    }

    pub fn bidirected(&self) -> &[(usize, usize)] {
        &self.bidirected
    }

    pub fn latent_count(&self) -> usize {
        self.latents
    }

    /// Directed part as a [`Dag`].
    pub fn directed_dag(&self) -> Dag {
        Dag {
            d: self.d,
            edges: self.directed.clone(),
        }
    }

    /// All true edges as unordered pairs (directed edges lose orientation,
    /// union with bidirected pairs).
    pub fn skeleton_pairs(&self) -> BTreeSet<(usize, usize)> {
        let mut set = BTreeSet::new();
        for &(i, j) in &self.directed {
            set.insert((i.min(j), i.max(j)));
        }
        for &p in &self.bidirected {
            set.insert(p);
        }
        set
    }
}

/// Erdős–Rényi DAG: each pair is an edge independently with
/// `p = degree / (d - 1)`, orientations fixed by a random node permutation.
pub fn gen_er(d: usize, degree: f64, seed: u64) -> Result<Dag> {
    if d < 2 {
        return Err(Error::Parameter("gen_er needs d >= 2".into()));
    }
    if !(degree >= 0.0) {
        return Err(Error::Parameter("degree must be nonnegative".into()));
    }
    let p = degree / (d as f64 - 1.0);
    if p > 1.0 {
        return Err(Error::Parameter(format!(
            "degree {degree} too dense for d={d} (needs degree <= d-1)"
        )));
    }
    let mut rng = seed::rng(seed);
    // Sample on a virtual topological order, then relabel through a random
    // permutation so the order itself is not observable.
    let mut ordered_edges = Vec::new();
    for a in 0..d {
        for b in (a + 1)..d {
            if rng.gen_bool(p) {
                ordered_edges.push((a, b));
            }
        }
    }
    let mut perm: Vec<usize> = (0..d).collect();
    perm.shuffle(&mut rng);
    let edges = ordered_edges
        .into_iter()
        .map(|(a, b)| (perm[a], perm[b]))
        .collect();
    Dag::new(d, edges)
}

/// Scale-free DAG by preferential attachment: node `t` attaches
/// `min(attach_edges, t)` edges to earlier nodes with probability
/// proportional to degree + 1, oriented from later to earlier node.
pub fn gen_sf(d: usize, attach_edges: usize, seed: u64) -> Result<Dag> {
    if d < 2 {
        return Err(Error::Parameter("gen_sf needs d >= 2".into()));
    }
    if attach_edges == 0 {
        return Err(Error::Parameter("attach_edges must be positive".into()));
    }
    let mut rng = seed::rng(seed);
    let mut degree = vec![0usize; d];
    let mut edges = Vec::new();
    for t in 1..d {
        let k = attach_edges.min(t);
        let mut chosen: Vec<usize> = Vec::with_capacity(k);
        for _ in 0..k {
            let weights: Vec<(usize, f64)> = (0..t)
                .filter(|c| !chosen.contains(c))
                .map(|c| (c, degree[c] as f64 + 1.0))
                .collect();
            let total: f64 = weights.iter().map(|(_, w)| w).sum();
            let mut u = rng.gen_range(0.0..total);
            let mut pick = weights[weights.len() - 1].0;
            for &(c, w) in &weights {
                if u < w {
                    pick = c;
                    break;
                }
                u -= w;
            }
            chosen.push(pick);
        }
        for c in chosen {
            edges.push((t, c));
            degree[t] += 1;
            degree[c] += 1;
        }
    }
    Dag::new(d, edges)
}

/// Bipartite DAG: the first `ceil(split_ratio * d)` nodes may point at the
/// rest; edge probability is matched to an expected total of `degree * d / 2`.
pub fn gen_bp(d: usize, split_ratio: f64, degree: f64, seed: u64) -> Result<Dag> {
    if d < 2 {
        return Err(Error::Parameter("gen_bp needs d >= 2".into()));
    }
    if !(split_ratio > 0.0 && split_ratio < 1.0) {
        return Err(Error::Parameter("split_ratio must lie in (0, 1)".into()));
    }
    if !(degree >= 0.0) {
        return Err(Error::Parameter("degree must be nonnegative".into()));
    }
    let top = (split_ratio * d as f64).ceil() as usize;
    if top == 0 || top >= d {
        return Err(Error::Parameter(format!(
            "split_ratio {split_ratio} leaves an empty side at d={d}"
        )));
    }
    let bottom = d - top;
    let p = (degree * d as f64 / (2.0 * top as f64 * bottom as f64)).min(1.0);
    let mut rng = seed::rng(seed);
    let mut edges = Vec::new();
    for a in 0..top {
        for b in top..d {
            if rng.gen_bool(p) {
                edges.push((a, b));
            }
        }
    }
    Dag::new(d, edges)
}

/// True iff the support of `adj` (nonzero entries, diagonal ignored) has no
/// directed cycle. Iterative depth-first search with the usual three colors.
pub fn is_acyclic(adj: &DMatrix<f64>) -> bool {
    let d = adj.nrows();
    // 0 = unvisited, 1 = on stack, 2 = done.
    let mut color = vec![0u8; d];
    let mut stack: Vec<(usize, usize)> = Vec::new();
    for start in 0..d {
        if color[start] != 0 {
            continue;
        }
        color[start] = 1;
        stack.push((start, 0));
        while let Some(&mut (node, ref mut next)) = stack.last_mut() {
            let mut advanced = false;
            while *next < d {
                let tgt = *next;
                *next += 1;
                if tgt == node || adj[(node, tgt)] == 0.0 {
                    continue;
                }
                match color[tgt] {
                    1 => return false,
                    0 => {
                        color[tgt] = 1;
                        stack.push((tgt, 0));
                        advanced = true;
                        break;
                    }
                    _ => {}
                }
            }
            if !advanced && stack.last().map(|&(n, _)| n) == Some(node) {
                color[node] = 2;
                stack.pop();
            }
        }
    }
    true
}

/// Moralized graph: undirected skeleton plus an edge between every pair of
/// nodes sharing a child. Returned as a symmetric 0/1 matrix, zero diagonal.
pub fn moralize(dag: &Dag) -> DMatrix<f64> {
    let d = dag.d;
    let mut m = DMatrix::zeros(d, d);
    let link = |a: usize, b: usize, m: &mut DMatrix<f64>| {
        if a != b {
            m[(a, b)] = 1.0;
            m[(b, a)] = 1.0;
        }
    };
    for &(i, j) in &dag.edges {
        link(i, j, &mut m);
    }
    for child in 0..d {
        let parents: Vec<usize> = dag
            .edges
            .iter()
            .filter(|&&(_, j)| j == child)
            .map(|&(i, _)| i)
            .collect();
        for (a, &pa) in parents.iter().enumerate() {
            for &pb in &parents[a + 1..] {
                link(pa, pb, &mut m);
            }
        }
    }
    m
}

/// Restricts a latent-inclusive DAG to its observed nodes: directed edges
/// survive among observed pairs, and each pair of observed nodes sharing a
/// latent parent gains a bidirected edge.
///
/// `observed` must be strictly increasing; every node outside it is treated
/// as latent and must be a source with at least two observed children.
pub fn marginalize_latents(full_dag: &Dag, observed: &[usize]) -> Result<GroundTruth> {
    let d_full = full_dag.d;
    if observed.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Parameter(
            "observed set must be strictly increasing".into(),
        ));
    }
    if observed.iter().any(|&v| v >= d_full) {
        return Err(Error::Parameter("observed node out of range".into()));
    }
    let mut pos = vec![None; d_full];
    for (k, &v) in observed.iter().enumerate() {
        pos[v] = Some(k);
    }

    let mut directed = Vec::new();
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); d_full];
    let mut latent_has_parent = vec![false; d_full];
    for &(i, j) in &full_dag.edges {
        match (pos[i], pos[j]) {
            (Some(a), Some(b)) => directed.push((a, b)),
            (None, Some(b)) => children[i].push(b),
            (_, None) => latent_has_parent[j] = true,
        }
    }

    let mut bidirected = BTreeSet::new();
    let mut latents = 0;
    for v in 0..d_full {
        if pos[v].is_some() {
            continue;
        }
        latents += 1;
        if latent_has_parent[v] {
            return Err(Error::Contract(format!("latent node {v} has a parent")));
        }
        if children[v].len() < 2 {
            return Err(Error::Contract(format!(
                "latent node {v} has {} observed children, needs >= 2",
                children[v].len()
            )));
        }
        for (a, &ca) in children[v].iter().enumerate() {
            for &cb in &children[v][a + 1..] {
                bidirected.insert((ca.min(cb), ca.max(cb)));
            }
        }
    }

    GroundTruth::new(
        observed.len(),
        directed,
        bidirected.into_iter().collect(),
        latents,
    )
}

#[derive(Serialize, Deserialize)]
struct GraphJson {
    d: usize,
    directed: Vec<[usize; 2]>,
    bidirected: Vec<[usize; 2]>,
    #[serde(default)]
    latents: usize,
}

impl GroundTruth {
    /// Canonical JSON encoding: `{"d", "directed", "bidirected", "latents"}`
    /// with 0-based, lexicographically sorted edge lists.
    pub fn to_json_string(&self) -> String {
        let enc = GraphJson {
            d: self.d,
            directed: self.directed.iter().map(|&(i, j)| [i, j]).collect(),
            bidirected: self.bidirected.iter().map(|&(i, j)| [i, j]).collect(),
            latents: self.latents,
        };
        serde_json::to_string_pretty(&enc).expect("graph encoding cannot fail")
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let enc: GraphJson = serde_json::from_str(s)?;
        GroundTruth::new(
            enc.d,
            enc.directed.iter().map(|e| (e[0], e[1])).collect(),
            enc.bidirected.iter().map(|e| (e[0], e[1])).collect(),
            enc.latents,
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_string() + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }
}

impl Dag {
    /// Same JSON layout as [`GroundTruth`], with an empty bidirected list.
    pub fn to_json_string(&self) -> String {
        GroundTruth::from_dag(self).to_json_string()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_string() + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let truth = GroundTruth::from_json_str(&std::fs::read_to_string(path)?)?;
        if !truth.bidirected.is_empty() {
            return Err(Error::Contract(
                "expected a plain DAG without bidirected edges".into(),
            ));
        }
        Dag::new(truth.d, truth.directed)
    }
}
