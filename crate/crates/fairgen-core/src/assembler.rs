//! Score-matrix accumulation from generated walks and assembly of the
//! output graph under two constraints: every node keeps at least one
//! edge, and the protected group's volume stays close to the original.

use std::collections::HashMap;

use thiserror::Error;

use crate::exec;
use crate::graph::{Graph, GraphError, GroupMembership};
use crate::walk::WalkBatch;

#[derive(Debug, Error)]
pub enum AssembleError {
    #[error("walk references node {0} outside the score matrix (n = {1})")]
    NodeOutOfRange(u32, usize),
    #[error("score matrix has no support")]
    EmptyScores,
    #[error("augmentation fraction must lie in (0, 1] (got {0})")]
    BadFraction(f64),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Sparse symmetric transition-count matrix with a zero diagonal. Keys
/// are canonical `(min, max)` pairs.
#[derive(Clone, Debug, Default)]
pub struct ScoreMatrix {
    n: usize,
    counts: HashMap<(u32, u32), u64>,
}

impl ScoreMatrix {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            counts: HashMap::new(),
        }
    }

    pub fn from_entries(
        n: usize,
        entries: &[(u32, u32, u64)],
    ) -> Result<Self, AssembleError> {
        let mut b = Self::new(n);
        for &(u, v, c) in entries {
            if u as usize >= n {
                return Err(AssembleError::NodeOutOfRange(u, n));
            }
            if v as usize >= n {
                return Err(AssembleError::NodeOutOfRange(v, n));
            }
            if u == v || c == 0 {
                continue;
            }
            *b.counts.entry((u.min(v), u.max(v))).or_insert(0) += c;
        }
        Ok(b)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn support(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn get(&self, u: u32, v: u32) -> u64 {
        if u == v {
            return 0;
        }
        self.counts
            .get(&(u.min(v), u.max(v)))
            .copied()
            .unwrap_or(0)
    }

    /// Entries sorted by `(u, v)` pair; the serialization order.
    pub fn sorted_entries(&self) -> Vec<(u32, u32, u64)> {
        let mut entries: Vec<(u32, u32, u64)> = self
            .counts
            .iter()
            .map(|(&(u, v), &c)| (u, v, c))
            .collect();
        entries.sort_unstable_by_key(|&(u, v, _)| (u, v));
        entries
    }

    /// Candidate pairs sorted by descending score, ties by ascending
    /// `(u, v)`; the deterministic admission order.
    fn ranked(&self) -> Vec<(u32, u32, u64)> {
        let mut entries = self.sorted_entries();
        entries.sort_by(|a, b| b.2.cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
        entries
    }

    fn merge(mut self, other: ScoreMatrix) -> ScoreMatrix {
        for (k, c) in other.counts {
            *self.counts.entry(k).or_insert(0) += c;
        }
        self
    }
}

/// Counts adjacent node pairs over the batch. Self-pairs are dropped.
pub fn accumulate_scores(n: usize, walks: &WalkBatch) -> Result<ScoreMatrix, AssembleError> {
    let chunk = 1024;
    let chunks = walks.walks().chunks(chunk).collect::<Vec<_>>();
    let partials = exec::map_indexed(chunks.len(), |i| accumulate_chunk(n, chunks[i]));
    let mut total = ScoreMatrix::new(n);
    for partial in partials {
        total = total.merge(partial?);
    }
    Ok(total)
}

/// Sequential twin of [`accumulate_scores`].
pub fn accumulate_scores_seq(n: usize, walks: &WalkBatch) -> Result<ScoreMatrix, AssembleError> {
    accumulate_chunk(n, walks.walks())
}

fn accumulate_chunk(n: usize, walks: &[crate::walk::Walk]) -> Result<ScoreMatrix, AssembleError> {
    let mut b = ScoreMatrix::new(n);
    for walk in walks {
        for pair in walk.nodes.windows(2) {
            let (u, v) = (pair[0], pair[1]);
            if u as usize >= n {
                return Err(AssembleError::NodeOutOfRange(u, n));
            }
            if v as usize >= n {
                return Err(AssembleError::NodeOutOfRange(v, n));
            }
            if u == v {
                continue;
            }
            *b.counts.entry((u.min(v), u.max(v))).or_insert(0) += 1;
        }
    }
    Ok(b)
}

#[derive(Clone, Debug)]
pub struct AssembleOutcome {
    pub graph: Graph,
    pub warnings: Vec<String>,
}

/// Thresholds the score matrix into a graph with the original edge
/// budget. Three admission phases in priority order: (1) per-node
/// coverage by each node's best-scoring incident pair, (2) protected
/// volume raised to at least `(1 - tol)` of the original by descending
/// score, (3) global fill by descending score. Phase 3 stops adding
/// protected-incident pairs once the protected volume would exceed
/// `(1 + tol)` of the original, keeping the volume similar on both
/// sides.
pub fn assemble(
    b: &ScoreMatrix,
    original: &Graph,
    groups: &GroupMembership,
    tol: f64,
) -> Result<AssembleOutcome, AssembleError> {
    if b.is_empty() {
        return Err(AssembleError::EmptyScores);
    }
    let n = original.n();
    let m_target = original.m();
    let ranked = b.ranked();
    let mut warnings = Vec::new();

    // Highest-ranked incident candidate per node.
    let mut best: Vec<Option<usize>> = vec![None; n];
    for (rank, &(u, v, _)) in ranked.iter().enumerate() {
        if best[u as usize].is_none() {
            best[u as usize] = Some(rank);
        }
        if best[v as usize].is_none() {
            best[v as usize] = Some(rank);
        }
    }

    let mut admitted: std::collections::HashSet<(u32, u32)> = std::collections::HashSet::new();
    let mut edges: Vec<(u32, u32)> = Vec::with_capacity(m_target);
    let mut protected_volume = 0u64;
    let mut admit = |rank: usize,
                     admitted: &mut std::collections::HashSet<(u32, u32)>,
                     edges: &mut Vec<(u32, u32)>,
                     protected_volume: &mut u64| {
        let (u, v, _) = ranked[rank];
        if admitted.insert((u, v)) {
            edges.push((u, v));
            if groups.is_protected(u) {
                *protected_volume += 1;
            }
            if groups.is_protected(v) {
                *protected_volume += 1;
            }
        }
    };

    // Phase 1: coverage.
    let mut uncovered = Vec::new();
    for node in 0..n as u32 {
        match best[node as usize] {
            Some(rank) => admit(rank, &mut admitted, &mut edges, &mut protected_volume),
            None => uncovered.push(node),
        }
    }
    if !uncovered.is_empty() {
        warnings.push(format!(
            "{} node(s) have no scored incident pair and stay isolated: {:?}",
            uncovered.len(),
            uncovered.iter().take(10).collect::<Vec<_>>()
        ));
    }

    // Phase 2: protected volume floor.
    let original_protected_volume = original.volume(groups.protected());
    let floor = (1.0 - tol) * original_protected_volume as f64;
    if (protected_volume as f64) < floor {
        for (rank, &(u, v, _)) in ranked.iter().enumerate() {
            if protected_volume as f64 >= floor {
                break;
            }
            if groups.is_protected(u) || groups.is_protected(v) {
                admit(rank, &mut admitted, &mut edges, &mut protected_volume);
            }
        }
        if (protected_volume as f64) < floor {
            warnings.push(format!(
                "protected volume {} below target {:.1} after exhausting candidates",
                protected_volume, floor
            ));
        }
    }

    if edges.len() > m_target {
        warnings.push(format!(
            "coverage and protected-volume phases admitted {} edges, above the budget {}",
            edges.len(),
            m_target
        ));
    }

    // Phase 3: global fill to the edge budget.
    let ceiling = (1.0 + tol) * original_protected_volume as f64;
    for (rank, &(u, v, _)) in ranked.iter().enumerate() {
        if edges.len() >= m_target {
            break;
        }
        if admitted.contains(&(u, v)) {
            continue;
        }
        let added = u32::from(groups.is_protected(u)) + u32::from(groups.is_protected(v));
        if added > 0 && protected_volume as f64 + f64::from(added) > ceiling {
            continue;
        }
        admit(rank, &mut admitted, &mut edges, &mut protected_volume);
    }
    if edges.len() < m_target {
        warnings.push(format!(
            "score support exhausted at {} of {} edges",
            edges.len(),
            m_target
        ));
    }

    let graph = Graph::from_parts(original.external_ids().to_vec(), &edges)?;
    Ok(AssembleOutcome { graph, warnings })
}

/// Inserts the `ceil(fraction * m)` best-scoring non-edges into the
/// original graph.
pub fn augment(
    b: &ScoreMatrix,
    original: &Graph,
    fraction: f64,
) -> Result<AssembleOutcome, AssembleError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(AssembleError::BadFraction(fraction));
    }
    let want = (fraction * original.m() as f64).ceil() as usize;
    let mut edges: Vec<(u32, u32)> = original.edges().collect();
    let mut added = 0usize;
    let mut warnings = Vec::new();
    for (u, v, _) in b.ranked() {
        if added >= want {
            break;
        }
        if original.has_edge(u, v) {
            continue;
        }
        edges.push((u, v));
        added += 1;
    }
    if added < want {
        warnings.push(format!(
            "only {added} of {want} requested novel pairs available in the score support"
        ));
    }
    let graph = Graph::from_parts(original.external_ids().to_vec(), &edges)?;
    Ok(AssembleOutcome { graph, warnings })
}
