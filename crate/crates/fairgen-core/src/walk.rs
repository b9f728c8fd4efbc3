//! Biased second-order random walks and the label-informed context
//! sampler.
//!
//! Each walk owns an RNG stream derived from (seed, walk index), so a
//! batch is reproducible regardless of how many workers sample it.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::exec;
use crate::graph::{Graph, LabelSet};
use crate::rng::SeedStream;

#[derive(Debug, Error)]
pub enum SampleError {
    #[error("walk length must be at least 2 (got {0})")]
    WalkLengthTooShort(usize),
    #[error("mix ratio must lie in [0, 1] (got {0})")]
    BadMixRatio(f64),
    #[error("bias parameters must be positive (p = {p}, q = {q})")]
    BadBias { p: f64, q: f64 },
    #[error("walk cannot start at isolated node {0}")]
    IsolatedStart(u32),
    #[error("graph has no non-isolated node to start a walk from")]
    NoStartCandidates,
    #[error("label-informed sampling requires a non-empty label set when mix ratio < 1")]
    NoLabels,
    #[error("walk batches must share one walk length (expected {expected}, got {got})")]
    MixedLengths { expected: usize, got: usize },
}

/// Where a walk came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WalkOrigin {
    UniformStart,
    LabelStart(usize),
    Generated,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Walk {
    pub nodes: Vec<u32>,
    pub origin: WalkOrigin,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BatchRole {
    Positive,
    Negative,
}

/// A pool of fixed-length walks.
#[derive(Clone, Debug)]
pub struct WalkBatch {
    walks: Vec<Walk>,
    walk_length: usize,
    pub role: BatchRole,
}

impl WalkBatch {
    pub fn new(role: BatchRole, walk_length: usize) -> Self {
        Self {
            walks: Vec::new(),
            walk_length,
            role,
        }
    }

    pub fn from_walks(role: BatchRole, walks: Vec<Walk>) -> Result<Self, SampleError> {
        let walk_length = walks.first().map_or(0, |w| w.nodes.len());
        let mut batch = Self::new(role, walk_length);
        batch.extend(walks)?;
        Ok(batch)
    }

    pub fn push(&mut self, walk: Walk) -> Result<(), SampleError> {
        if walk.nodes.len() != self.walk_length {
            return Err(SampleError::MixedLengths {
                expected: self.walk_length,
                got: walk.nodes.len(),
            });
        }
        self.walks.push(walk);
        Ok(())
    }

    pub fn extend(&mut self, walks: Vec<Walk>) -> Result<(), SampleError> {
        for w in walks {
            self.push(w)?;
        }
        Ok(())
    }

    /// Drops the oldest walks until at most `cap` remain.
    pub fn truncate_front(&mut self, cap: usize) {
        if self.walks.len() > cap {
            self.walks.drain(0..self.walks.len() - cap);
        }
    }

    pub fn walks(&self) -> &[Walk] {
        &self.walks
    }

    pub fn len(&self) -> usize {
        self.walks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.walks.is_empty()
    }

    pub fn walk_length(&self) -> usize {
        self.walk_length
    }
}

/// Sampler parameters: walk length `T`, uniform/label mix ratio `r`,
/// second-order bias `p` (return) and `q` (in-out), and batch size `K`.
#[derive(Clone, Debug)]
pub struct SamplerConfig {
    pub walk_length: usize,
    pub mix_ratio: f64,
    pub return_param: f64,
    pub in_out_param: f64,
    pub walks_per_batch: usize,
    pub class_balanced_starts: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            walk_length: 10,
            mix_ratio: 0.5,
            return_param: 1.0,
            in_out_param: 1.0,
            walks_per_batch: 1000,
            class_balanced_starts: false,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), SampleError> {
        if self.walk_length < 2 {
            return Err(SampleError::WalkLengthTooShort(self.walk_length));
        }
        if !(0.0..=1.0).contains(&self.mix_ratio) || self.mix_ratio.is_nan() {
            return Err(SampleError::BadMixRatio(self.mix_ratio));
        }
        if self.return_param <= 0.0 || self.in_out_param <= 0.0 {
            return Err(SampleError::BadBias {
                p: self.return_param,
                q: self.in_out_param,
            });
        }
        Ok(())
    }
}

/// Unnormalized second-order weights over the neighbors of `cur` given
/// the previous node: `1/p` to return, `1` toward neighbors of `prev`,
/// `1/q` otherwise.
pub fn step_weights(g: &Graph, prev: u32, cur: u32, p: f64, q: f64, out: &mut Vec<f64>) {
    out.clear();
    let prev_adj = g.neighbors(prev);
    for &nb in g.neighbors(cur) {
        let w = if nb == prev {
            1.0 / p
        } else if prev_adj.binary_search(&nb).is_ok() {
            1.0
        } else {
            1.0 / q
        };
        out.push(w);
    }
}

fn weighted_pick(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        u -= w;
        if u < 0.0 {
            return i;
        }
    }
    weights.len() - 1
}

/// Second-order biased walk of exactly `walk_length` nodes. The first
/// step is uniform over the start's neighbors.
pub fn biased_walk(
    g: &Graph,
    start: u32,
    cfg: &SamplerConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Walk, SampleError> {
    cfg.validate()?;
    walk_from(g, start, WalkOrigin::UniformStart, cfg, rng)
}

fn walk_from(
    g: &Graph,
    start: u32,
    origin: WalkOrigin,
    cfg: &SamplerConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Walk, SampleError> {
    if g.degree(start) == 0 {
        return Err(SampleError::IsolatedStart(start));
    }
    let mut nodes = Vec::with_capacity(cfg.walk_length);
    nodes.push(start);
    let first = g.neighbors(start)[rng.random_range(0..g.degree(start))];
    nodes.push(first);
    let mut weights = Vec::new();
    while nodes.len() < cfg.walk_length {
        let cur = nodes[nodes.len() - 1];
        let prev = nodes[nodes.len() - 2];
        step_weights(g, prev, cur, cfg.return_param, cfg.in_out_param, &mut weights);
        let next = g.neighbors(cur)[weighted_pick(&weights, rng)];
        nodes.push(next);
    }
    Ok(Walk { nodes, origin })
}

struct StartPools {
    uniform: Vec<u32>,
    labeled: Vec<u32>,
    by_class: Vec<Vec<u32>>,
}

fn start_pools(
    g: &Graph,
    labels: Option<&LabelSet>,
    cfg: &SamplerConfig,
) -> Result<StartPools, SampleError> {
    let uniform = g.non_isolated_nodes();
    if uniform.is_empty() {
        return Err(SampleError::NoStartCandidates);
    }
    let (labeled, by_class) = if cfg.mix_ratio < 1.0 {
        let labels = labels.filter(|l| !l.is_empty()).ok_or(SampleError::NoLabels)?;
        let by_class = (0..labels.classes())
            .map(|c| labels.nodes_of_class(c))
            .collect();
        (labels.nodes(), by_class)
    } else {
        (Vec::new(), Vec::new())
    };
    Ok(StartPools {
        uniform,
        labeled,
        by_class,
    })
}

fn context_walk(
    g: &Graph,
    labels: Option<&LabelSet>,
    pools: &StartPools,
    cfg: &SamplerConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Walk, SampleError> {
    // The mixing draw is skipped at the boundaries so that r = 1 consumes
    // the same stream as pure uniform-start sampling.
    let uniform_start = match cfg.mix_ratio {
        r if r >= 1.0 => true,
        r if r <= 0.0 => false,
        r => rng.random::<f64>() < r,
    };
    if uniform_start {
        let start = pools.uniform[rng.random_range(0..pools.uniform.len())];
        walk_from(g, start, WalkOrigin::UniformStart, cfg, rng)
    } else {
        let start = if cfg.class_balanced_starts {
            let mut class = rng.random_range(0..pools.by_class.len());
            while pools.by_class[class].is_empty() {
                class = (class + 1) % pools.by_class.len();
            }
            pools.by_class[class][rng.random_range(0..pools.by_class[class].len())]
        } else {
            pools.labeled[rng.random_range(0..pools.labeled.len())]
        };
        let class = labels.and_then(|l| l.class_of(start)).unwrap_or(0);
        walk_from(g, start, WalkOrigin::LabelStart(class), cfg, rng)
    }
}

/// Label-informed context sampler: each of the `K` walks independently
/// starts uniformly at random with probability `r` and at a uniformly
/// chosen labeled node otherwise. Pass the label set including any
/// pseudo-labels selected so far.
pub fn sample_context(
    g: &Graph,
    labels: Option<&LabelSet>,
    cfg: &SamplerConfig,
    stream: SeedStream,
) -> Result<WalkBatch, SampleError> {
    cfg.validate()?;
    let pools = start_pools(g, labels, cfg)?;
    let walks = exec::map_indexed(cfg.walks_per_batch, |i| {
        let mut rng = stream.rng(i as u64);
        context_walk(g, labels, &pools, cfg, &mut rng)
    });
    collect_batch(walks)
}

/// Sequential twin of [`sample_context`]; produces identical batches.
pub fn sample_context_seq(
    g: &Graph,
    labels: Option<&LabelSet>,
    cfg: &SamplerConfig,
    stream: SeedStream,
) -> Result<WalkBatch, SampleError> {
    cfg.validate()?;
    let pools = start_pools(g, labels, cfg)?;
    let walks = exec::map_indexed_seq(cfg.walks_per_batch, |i| {
        let mut rng = stream.rng(i as u64);
        context_walk(g, labels, &pools, cfg, &mut rng)
    });
    collect_batch(walks)
}

fn collect_batch(walks: Vec<Result<Walk, SampleError>>) -> Result<WalkBatch, SampleError> {
    let walks: Result<Vec<Walk>, SampleError> = walks.into_iter().collect();
    WalkBatch::from_walks(BatchRole::Positive, walks?)
}
