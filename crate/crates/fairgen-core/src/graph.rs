//! Undirected simple graphs with dense node ids, partial node labels,
//! and protected-group membership.
//!
//! External node ids are arbitrary strings; they are remapped to dense
//! ids `0..n` in order of first appearance and inverted on output.

use std::collections::HashMap;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("graph has no nodes")]
    Empty,
    #[error("node id {0} out of range")]
    NodeOutOfRange(u32),
    #[error("node {0} is isolated (degree 0)")]
    IsolatedNode(String),
    #[error("node set must be non-empty")]
    EmptySet,
    #[error("node set must be a strict subset of the vertices")]
    SetIsWholeGraph,
    #[error("anchor set must be non-empty")]
    EmptyAnchors,
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("label class {class} for node {node} is out of range (classes = {classes})")]
    LabelClassOutOfRange {
        node: u32,
        class: usize,
        classes: usize,
    },
    #[error("class {0} has no labeled node")]
    MissingClass(usize),
}

/// Undirected simple graph: no self-loops, no parallel edges, sorted
/// per-node adjacency. Immutable after construction; safe to share
/// across parallel workers.
#[derive(Clone, Debug)]
pub struct Graph {
    adj: Vec<Vec<u32>>,
    m: usize,
    external: Vec<String>,
    index: HashMap<String, u32>,
}

impl Graph {
    /// Builds a graph over dense ids `0..n` with numeric external ids.
    /// Self-loops and duplicate edges are dropped.
    pub fn from_edges(n: usize, edges: &[(u32, u32)]) -> Result<Self, GraphError> {
        let external = (0..n).map(|i| i.to_string()).collect();
        Self::from_parts(external, edges)
    }

    /// Builds a graph with caller-provided external ids.
    pub fn from_parts(external: Vec<String>, edges: &[(u32, u32)]) -> Result<Self, GraphError> {
        let n = external.len();
        if n == 0 {
            return Err(GraphError::Empty);
        }
        let mut adj: Vec<Vec<u32>> = vec![Vec::new(); n];
        let mut seen = std::collections::HashSet::with_capacity(edges.len());
        for &(u, v) in edges {
            if u as usize >= n {
                return Err(GraphError::NodeOutOfRange(u));
            }
            if v as usize >= n {
                return Err(GraphError::NodeOutOfRange(v));
            }
            if u == v {
                continue;
            }
            let key = (u.min(v), u.max(v));
            if seen.insert(key) {
                adj[u as usize].push(v);
                adj[v as usize].push(u);
            }
        }
        let m = seen.len();
        for list in &mut adj {
            list.sort_unstable();
        }
        let index = external
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i as u32))
            .collect();
        Ok(Self {
            adj,
            m,
            external,
            index,
        })
    }

    pub fn n(&self) -> usize {
        self.adj.len()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn degree(&self, u: u32) -> usize {
        self.adj[u as usize].len()
    }

    pub fn neighbors(&self, u: u32) -> &[u32] {
        &self.adj[u as usize]
    }

    pub fn has_edge(&self, u: u32, v: u32) -> bool {
        self.adj[u as usize].binary_search(&v).is_ok()
    }

    /// Edges as `(u, v)` pairs with `u < v`, ascending.
    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.adj.iter().enumerate().flat_map(|(u, list)| {
            let u = u as u32;
            list.iter()
                .copied()
                .filter(move |&v| u < v)
                .map(move |v| (u, v))
        })
    }

    pub fn external_id(&self, u: u32) -> &str {
        &self.external[u as usize]
    }

    pub fn external_ids(&self) -> &[String] {
        &self.external
    }

    pub fn node_by_external(&self, ext: &str) -> Option<u32> {
        self.index.get(ext).copied()
    }

    pub fn isolated_nodes(&self) -> Vec<u32> {
        (0..self.n() as u32).filter(|&u| self.degree(u) == 0).collect()
    }

    pub fn non_isolated_nodes(&self) -> Vec<u32> {
        (0..self.n() as u32).filter(|&u| self.degree(u) > 0).collect()
    }

    fn membership_mask(&self, set: &[u32]) -> Result<Vec<bool>, GraphError> {
        let mut mask = vec![false; self.n()];
        for &u in set {
            if u as usize >= self.n() {
                return Err(GraphError::NodeOutOfRange(u));
            }
            mask[u as usize] = true;
        }
        Ok(mask)
    }

    /// Degree sum over `set`.
    pub fn volume(&self, set: &[u32]) -> u64 {
        set.iter().map(|&u| self.degree(u) as u64).sum()
    }

    /// Number of edges with exactly one endpoint in `set`.
    pub fn cut_size(&self, set: &[u32]) -> Result<u64, GraphError> {
        let mask = self.membership_mask(set)?;
        let mut cut = 0u64;
        for &u in set {
            for &v in self.neighbors(u) {
                if !mask[v as usize] {
                    cut += 1;
                }
            }
        }
        Ok(cut)
    }
}

/// Conductance `cut(s, s̄) / min(vol(s), vol(s̄))`. A union of whole
/// components has an empty cut and conductance 0.
pub fn conductance(g: &Graph, set: &[u32]) -> Result<f64, GraphError> {
    if set.is_empty() {
        return Err(GraphError::EmptySet);
    }
    let mask = g.membership_mask(set)?;
    let distinct = mask.iter().filter(|&&b| b).count();
    if distinct == g.n() {
        return Err(GraphError::SetIsWholeGraph);
    }
    let mut cut = 0u64;
    let mut vol = 0u64;
    for (u, &inside) in mask.iter().enumerate() {
        if !inside {
            continue;
        }
        vol += g.degree(u as u32) as u64;
        for &v in g.neighbors(u as u32) {
            if !mask[v as usize] {
                cut += 1;
            }
        }
    }
    if cut == 0 {
        return Ok(0.0);
    }
    let vol_rest = 2 * g.m() as u64 - vol;
    Ok(cut as f64 / vol.min(vol_rest) as f64)
}

/// Induced subgraph on `anchors` and their 1-hop neighbors. The
/// subgraph keeps the anchors' original external ids, so nodes can be
/// mapped back to the source graph.
pub fn ego_subgraph(g: &Graph, anchors: &[u32]) -> Result<Graph, GraphError> {
    if anchors.is_empty() {
        return Err(GraphError::EmptyAnchors);
    }
    let mut mask = g.membership_mask(anchors)?;
    for &a in anchors {
        for &v in g.neighbors(a) {
            mask[v as usize] = true;
        }
    }
    let nodes: Vec<u32> = (0..g.n() as u32).filter(|&u| mask[u as usize]).collect();
    let mut remap = vec![u32::MAX; g.n()];
    for (new, &old) in nodes.iter().enumerate() {
        remap[old as usize] = new as u32;
    }
    let mut edges = Vec::new();
    for &u in &nodes {
        for &v in g.neighbors(u) {
            if u < v && mask[v as usize] {
                edges.push((remap[u as usize], remap[v as usize]));
            }
        }
    }
    let external = nodes
        .iter()
        .map(|&u| g.external_id(u).to_string())
        .collect();
    Graph::from_parts(external, &edges)
}

/// Connected components as sorted node lists, ordered by smallest member.
pub fn connected_components(g: &Graph) -> Vec<Vec<u32>> {
    let n = g.n();
    let mut parent: Vec<u32> = (0..n as u32).collect();
    fn find(parent: &mut [u32], mut x: u32) -> u32 {
        while parent[x as usize] != x {
            parent[x as usize] = parent[parent[x as usize] as usize];
            x = parent[x as usize];
        }
        x
    }
    for (u, v) in g.edges() {
        let ru = find(&mut parent, u);
        let rv = find(&mut parent, v);
        if ru != rv {
            parent[ru.max(rv) as usize] = ru.min(rv);
        }
    }
    let mut groups: HashMap<u32, Vec<u32>> = HashMap::new();
    for u in 0..n as u32 {
        let r = find(&mut parent, u);
        groups.entry(r).or_default().push(u);
    }
    let mut components: Vec<Vec<u32>> = groups.into_values().collect();
    components.sort_by_key(|c| c[0]);
    components
}

/// Partial node labels over classes `0..classes`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelSet {
    entries: std::collections::BTreeMap<u32, usize>,
    classes: usize,
}

impl LabelSet {
    pub fn new(pairs: &[(u32, usize)]) -> Self {
        let entries: std::collections::BTreeMap<u32, usize> = pairs.iter().copied().collect();
        let classes = entries.values().copied().max().map_or(0, |c| c + 1);
        Self { entries, classes }
    }

    pub fn empty() -> Self {
        Self {
            entries: Default::default(),
            classes: 0,
        }
    }

    pub fn validate_for(&self, g: &Graph) -> Result<(), GraphError> {
        for (&node, &class) in &self.entries {
            if node as usize >= g.n() {
                return Err(GraphError::NodeOutOfRange(node));
            }
            if class >= self.classes {
                return Err(GraphError::LabelClassOutOfRange {
                    node,
                    class,
                    classes: self.classes,
                });
            }
        }
        Ok(())
    }

    /// Errors unless every class in `0..classes` appears at least once.
    pub fn require_full_class_coverage(&self) -> Result<(), GraphError> {
        for c in 0..self.classes {
            if !self.entries.values().any(|&v| v == c) {
                return Err(GraphError::MissingClass(c));
            }
        }
        Ok(())
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn class_of(&self, node: u32) -> Option<usize> {
        self.entries.get(&node).copied()
    }

    /// Labeled nodes in ascending id order.
    pub fn nodes(&self) -> Vec<u32> {
        self.entries.keys().copied().collect()
    }

    pub fn nodes_of_class(&self, class: usize) -> Vec<u32> {
        self.entries
            .iter()
            .filter(|&(_, &c)| c == class)
            .map(|(&n, _)| n)
            .collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, usize)> + '_ {
        self.entries.iter().map(|(&n, &c)| (n, c))
    }

    /// Copy of `self` extended with `extra`; existing labels win.
    pub fn extended(&self, extra: &[(u32, usize)]) -> Self {
        let mut entries = self.entries.clone();
        for &(node, class) in extra {
            entries.entry(node).or_insert(class);
        }
        let classes = self
            .classes
            .max(entries.values().copied().max().map_or(0, |c| c + 1));
        Self { entries, classes }
    }
}

/// Protected-group membership; the unprotected group is the exact
/// complement.
#[derive(Clone, Debug)]
pub struct GroupMembership {
    protected: Vec<u32>,
    unprotected: Vec<u32>,
    mask: Vec<bool>,
}

impl GroupMembership {
    pub fn new(n: usize, protected_nodes: &[u32]) -> Result<Self, GraphError> {
        let mut mask = vec![false; n];
        for &u in protected_nodes {
            if u as usize >= n {
                return Err(GraphError::NodeOutOfRange(u));
            }
            mask[u as usize] = true;
        }
        let protected: Vec<u32> = (0..n as u32).filter(|&u| mask[u as usize]).collect();
        let unprotected: Vec<u32> = (0..n as u32).filter(|&u| !mask[u as usize]).collect();
        Ok(Self {
            protected,
            unprotected,
            mask,
        })
    }

    pub fn n(&self) -> usize {
        self.mask.len()
    }

    pub fn is_protected(&self, u: u32) -> bool {
        self.mask[u as usize]
    }

    pub fn protected(&self) -> &[u32] {
        &self.protected
    }

    pub fn unprotected(&self) -> &[u32] {
        &self.unprotected
    }
}
