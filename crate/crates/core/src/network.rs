//! Single-commodity network topology.
//!
//! A [`Graph`] is a directed multigraph with a distinguished origin and
//! destination. Paths are enumerated once into a [`PathSet`], whose ordering
//! (lexicographic in the sequence of edge indices) fixes the row and column
//! order of every policy and response matrix built on top of it.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default upper bound on the number of enumerated paths.
pub const DEFAULT_PATH_CAP: usize = 10_000;

/// Edge as it appears in a configuration file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeSpec {
    pub id: String,
    pub tail: String,
    pub head: String,
}

impl EdgeSpec {
    pub fn new(id: impl Into<String>, tail: impl Into<String>, head: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            tail: tail.into(),
            head: head.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub id: String,
    pub tail: usize,
    pub head: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    nodes: Vec<String>,
    edges: Vec<Edge>,
    origin: usize,
    destination: usize,
}

impl Graph {
    /// Builds a graph whose node set is the set of labels used by the edges.
    ///
    /// Nodes are indexed in order of first appearance (origin first, then
    /// destination, then edge endpoints in edge order).
    pub fn build(edges: &[EdgeSpec], origin: &str, destination: &str) -> Result<Self> {
        let mut nodes: Vec<String> = Vec::new();
        let mut seen = BTreeSet::new();
        let labels = [origin, destination]
            .into_iter()
            .chain(edges.iter().flat_map(|e| [e.tail.as_str(), e.head.as_str()]));
        for label in labels {
            if seen.insert(label) {
                nodes.push(label.to_string());
            }
        }
        Self::with_nodes(nodes, edges, origin, destination)
    }

    /// Builds a graph from an explicit node list. Every edge endpoint, the
    /// origin and the destination must be listed.
    pub fn with_nodes(
        nodes: Vec<String>,
        edges: &[EdgeSpec],
        origin: &str,
        destination: &str,
    ) -> Result<Self> {
        if edges.is_empty() {
            return Err(Error::InvalidGraph("at least one edge is required".into()));
        }
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, label) in nodes.iter().enumerate() {
            if index.insert(label.as_str(), i).is_some() {
                return Err(Error::InvalidGraph(format!("duplicate node `{label}`")));
            }
        }
        let lookup = |label: &str| {
            index
                .get(label)
                .copied()
                .ok_or_else(|| Error::InvalidGraph(format!("unknown node `{label}`")))
        };
        let origin_idx = lookup(origin)?;
        let destination_idx = lookup(destination)?;
        if origin_idx == destination_idx {
            return Err(Error::InvalidGraph(
                "origin and destination must differ".into(),
            ));
        }

        let mut ids = BTreeSet::new();
        let mut built = Vec::with_capacity(edges.len());
        for e in edges {
            if !ids.insert(e.id.as_str()) {
                return Err(Error::DuplicateEdgeId(e.id.clone()));
            }
            let tail = lookup(&e.tail)?;
            let head = lookup(&e.head)?;
            if tail == head {
                return Err(Error::InvalidGraph(format!("edge `{}` is a self-loop", e.id)));
            }
            built.push(Edge {
                id: e.id.clone(),
                tail,
                head,
            });
        }

        let graph = Self {
            nodes,
            edges: built,
            origin: origin_idx,
            destination: destination_idx,
        };
        if !graph.destination_reachable() {
            return Err(Error::UnreachableDestination {
                origin: origin.to_string(),
                destination: destination.to_string(),
            });
        }
        Ok(graph)
    }

    /// Two nodes `o`, `d` joined by `n` parallel links `1..=n`.
    pub fn parallel_links(n: usize) -> Result<Self> {
        let edges: Vec<EdgeSpec> = (1..=n)
            .map(|i| EdgeSpec::new(i.to_string(), "o", "d"))
            .collect();
        Self::build(&edges, "o", "d")
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn origin(&self) -> usize {
        self.origin
    }

    pub fn destination(&self) -> usize {
        self.destination
    }

    /// Node-link incidence matrix: +1 at the tail, -1 at the head.
    pub fn node_link_incidence(&self) -> Vec<Vec<i8>> {
        let mut b = vec![vec![0i8; self.edges.len()]; self.nodes.len()];
        for (e, edge) in self.edges.iter().enumerate() {
            b[edge.tail][e] = 1;
            b[edge.head][e] = -1;
        }
        b
    }

    /// Unit demand vector: +1 at the origin, -1 at the destination.
    pub fn demand(&self) -> Vec<f64> {
        let mut nu = vec![0.0; self.nodes.len()];
        nu[self.origin] = 1.0;
        nu[self.destination] = -1.0;
        nu
    }

    /// Largest absolute entry of `B f - ν`.
    pub fn conservation_residual(&self, link_flow: &[f64]) -> Result<f64> {
        check_len("link flow", self.edges.len(), link_flow.len())?;
        let mut balance = vec![0.0; self.nodes.len()];
        for (edge, &f) in self.edges.iter().zip(link_flow) {
            balance[edge.tail] += f;
            balance[edge.head] -= f;
        }
        let nu = self.demand();
        Ok(balance
            .iter()
            .zip(&nu)
            .map(|(l, r)| (l - r).abs())
            .fold(0.0, f64::max))
    }

    fn outgoing(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.nodes.len()];
        for (e, edge) in self.edges.iter().enumerate() {
            out[edge.tail].push(e);
        }
        out
    }

    fn destination_reachable(&self) -> bool {
        let out = self.outgoing();
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![self.origin];
        seen[self.origin] = true;
        while let Some(n) = stack.pop() {
            if n == self.destination {
                return true;
            }
            for &e in &out[n] {
                let h = self.edges[e].head;
                if !seen[h] {
                    seen[h] = true;
                    stack.push(h);
                }
            }
        }
        false
    }
}

/// Ordered set of simple origin-destination paths, each stored as its
/// sequence of edge indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathSet {
    paths: Vec<Vec<usize>>,
    num_links: usize,
}

impl PathSet {
    /// Builds a path set from explicit edge sequences. Used for parallel-link
    /// networks where path `i` is link `i`.
    pub fn from_paths(paths: Vec<Vec<usize>>, num_links: usize) -> Result<Self> {
        if paths.is_empty() {
            return Err(Error::InvalidGraph("empty path set".into()));
        }
        for p in &paths {
            if let Some(&e) = p.iter().find(|&&e| e >= num_links) {
                return Err(Error::DimensionMismatch {
                    context: "path edge index",
                    expected: num_links,
                    found: e,
                });
            }
        }
        Ok(Self { paths, num_links })
    }

    pub fn paths(&self) -> &[Vec<usize>] {
        &self.paths
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn num_links(&self) -> usize {
        self.num_links
    }

    /// Dense 0/1 link-path incidence matrix `A` (rows are links).
    pub fn link_path_incidence(&self) -> Vec<Vec<u8>> {
        let mut a = vec![vec![0u8; self.paths.len()]; self.num_links];
        for (i, p) in self.paths.iter().enumerate() {
            for &e in p {
                a[e][i] = 1;
            }
        }
        a
    }

    /// Link flow `A z` induced by a path flow.
    pub fn flow_from_path_flow(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_len("path flow", self.paths.len(), z.len())?;
        let mut f = vec![0.0; self.num_links];
        self.accumulate_link_flow(z, &mut f);
        Ok(f)
    }

    /// Adds `A z` into `f` without dimension checks.
    pub(crate) fn accumulate_link_flow(&self, z: &[f64], f: &mut [f64]) {
        for (p, &zi) in self.paths.iter().zip(z) {
            if zi != 0.0 {
                for &e in p {
                    f[e] += zi;
                }
            }
        }
    }

    /// `Aᵀ v`: sums a per-link quantity along each path.
    pub(crate) fn sum_along_paths(&self, per_link: &[f64], out: &mut [f64]) {
        for (p, o) in self.paths.iter().zip(out.iter_mut()) {
            *o = p.iter().map(|&e| per_link[e]).sum();
        }
    }

    /// Paths that consist of a single link, in path order; `None` unless
    /// every path is a single link and every link is used by exactly one
    /// path (a parallel-link network).
    pub fn parallel_link_order(&self) -> Option<Vec<usize>> {
        let mut used = vec![false; self.num_links];
        let mut order = Vec::with_capacity(self.paths.len());
        for p in &self.paths {
            if p.len() != 1 || used[p[0]] {
                return None;
            }
            used[p[0]] = true;
            order.push(p[0]);
        }
        used.iter().all(|&u| u).then_some(order)
    }
}

/// Enumerates all simple origin-destination paths with the default cap.
pub fn enumerate_paths(graph: &Graph) -> Result<PathSet> {
    enumerate_paths_with_cap(graph, DEFAULT_PATH_CAP)
}

/// Depth-first enumeration visiting outgoing edges in increasing index
/// order, which yields paths sorted lexicographically by edge sequence.
pub fn enumerate_paths_with_cap(graph: &Graph, cap: usize) -> Result<PathSet> {
    let out = graph.outgoing();
    let mut on_path = vec![false; graph.num_nodes()];
    let mut paths = Vec::new();
    let mut current = Vec::new();
    on_path[graph.origin] = true;
    dfs(
        graph,
        &out,
        graph.origin,
        &mut on_path,
        &mut current,
        &mut paths,
        cap,
    )?;
    PathSet::from_paths(paths, graph.num_edges())
}

fn dfs(
    graph: &Graph,
    out: &[Vec<usize>],
    node: usize,
    on_path: &mut [bool],
    current: &mut Vec<usize>,
    paths: &mut Vec<Vec<usize>>,
    cap: usize,
) -> Result<()> {
    if node == graph.destination {
        if paths.len() == cap {
            return Err(Error::PathExplosion { cap });
        }
        paths.push(current.clone());
        return Ok(());
    }
    for &e in &out[node] {
        let next = graph.edges[e].head;
        if on_path[next] {
            continue;
        }
        on_path[next] = true;
        current.push(e);
        dfs(graph, out, next, on_path, current, paths, cap)?;
        current.pop();
        on_path[next] = false;
    }
    Ok(())
}

pub(crate) fn check_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        })
    }
}
