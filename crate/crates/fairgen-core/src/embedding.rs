//! Skip-gram embeddings with negative sampling, trained from a walk
//! corpus. The resulting vectors serve as node features for both the
//! sequence model and the discriminator.

use ndarray::{Array1, Array2};
use rand::Rng;
use thiserror::Error;

use crate::rng::SeedStream;
use crate::walk::WalkBatch;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("walk corpus is empty")]
    EmptyCorpus,
    #[error("embedding dimension must be at least 1")]
    ZeroDim,
    #[error("walk references node {0} outside the table (n = {1})")]
    NodeOutOfRange(u32, usize),
}

/// Dense `n x d` node-vector table.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    pub vectors: Array2<f64>,
}

impl EmbeddingTable {
    pub fn zeros(n: usize, dim: usize) -> Self {
        Self {
            vectors: Array2::zeros((n, dim)),
        }
    }

    pub fn n(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn row(&self, u: u32) -> ndarray::ArrayView1<'_, f64> {
        self.vectors.row(u as usize)
    }

    pub fn cosine(&self, u: u32, v: u32) -> f64 {
        let a = self.row(u);
        let b = self.row(v);
        let num = a.dot(&b);
        let den = a.dot(&a).sqrt() * b.dot(&b).sqrt();
        if den == 0.0 {
            0.0
        } else {
            num / den
        }
    }

    /// "node v1 ... vd" lines in external-id order.
    pub fn to_text(&self, external_ids: &[String]) -> String {
        let mut out = String::new();
        for (i, ext) in external_ids.iter().enumerate() {
            out.push_str(ext);
            for v in self.vectors.row(i) {
                out.push(' ');
                out.push_str(&format!("{v}"));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct EmbedConfig {
    pub dim: usize,
    pub window: usize,
    pub negative: usize,
    pub epochs: usize,
    pub lr: f64,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self {
            dim: 100,
            window: 5,
            negative: 5,
            epochs: 5,
            lr: 0.025,
        }
    }
}

pub struct PretrainOutcome {
    pub table: EmbeddingTable,
    /// Nodes that never appeared in the corpus keep zero vectors.
    pub unvisited: Vec<u32>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

struct UnigramTable {
    nodes: Vec<u32>,
    cumulative: Vec<f64>,
}

impl UnigramTable {
    /// Frequencies raised to 3/4, the standard negative-sampling tilt.
    fn new(counts: &[u64]) -> Self {
        let mut nodes = Vec::new();
        let mut cumulative = Vec::new();
        let mut acc = 0.0;
        for (u, &c) in counts.iter().enumerate() {
            if c > 0 {
                acc += (c as f64).powf(0.75);
                nodes.push(u as u32);
                cumulative.push(acc);
            }
        }
        Self { nodes, cumulative }
    }

    fn draw(&self, rng: &mut rand_chacha::ChaCha8Rng) -> u32 {
        let u = rng.random::<f64>() * self.cumulative.last().copied().unwrap_or(1.0);
        let idx = self
            .cumulative
            .partition_point(|&c| c <= u)
            .min(self.nodes.len() - 1);
        self.nodes[idx]
    }
}

/// Skip-gram with negative sampling over the walk corpus. Node
/// frequencies (for both initialization and the negative distribution)
/// come from the walks themselves.
pub fn pretrain_embeddings(
    n: usize,
    walks: &WalkBatch,
    cfg: &EmbedConfig,
    stream: SeedStream,
) -> Result<PretrainOutcome, EmbedError> {
    if walks.is_empty() {
        return Err(EmbedError::EmptyCorpus);
    }
    if cfg.dim == 0 {
        return Err(EmbedError::ZeroDim);
    }
    let mut counts = vec![0u64; n];
    for walk in walks.walks() {
        for &node in &walk.nodes {
            if node as usize >= n {
                return Err(EmbedError::NodeOutOfRange(node, n));
            }
            counts[node as usize] += 1;
        }
    }
    let unvisited: Vec<u32> = (0..n as u32).filter(|&u| counts[u as usize] == 0).collect();

    let mut input = Array2::<f64>::zeros((n, cfg.dim));
    let output = Array2::<f64>::zeros((n, cfg.dim));
    let mut init_rng = stream.with(0).rng(0);
    let scale = 0.5 / cfg.dim as f64;
    for u in 0..n {
        if counts[u] == 0 {
            continue;
        }
        for v in input.row_mut(u) {
            *v = (init_rng.random::<f64>() * 2.0 - 1.0) * scale;
        }
    }
    let mut output = output;

    let unigram = UnigramTable::new(&counts);
    let mut order: Vec<usize> = (0..walks.len()).collect();
    let mut grad_in = Array1::<f64>::zeros(cfg.dim);

    for epoch in 0..cfg.epochs {
        let mut rng = stream.with(1).rng(epoch as u64);
        for i in (1..order.len()).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        for &wi in &order {
            let nodes = &walks.walks()[wi].nodes;
            for (center_pos, &center) in nodes.iter().enumerate() {
                let lo = center_pos.saturating_sub(cfg.window);
                let hi = (center_pos + cfg.window).min(nodes.len() - 1);
                for ctx_pos in lo..=hi {
                    if ctx_pos == center_pos {
                        continue;
                    }
                    let context = nodes[ctx_pos];
                    grad_in.fill(0.0);
                    {
                        let v = input.row(center as usize).to_owned();
                        // Positive pair.
                        let mut upd = |target: usize, label: f64, output: &mut Array2<f64>, grad_in: &mut Array1<f64>| {
                            let score = sigmoid(v.dot(&output.row(target)));
                            let g = (score - label) * cfg.lr;
                            let u_row = output.row(target).to_owned();
                            grad_in.scaled_add(-g, &u_row);
                            let mut row = output.row_mut(target);
                            row.scaled_add(-g, &v);
                        };
                        upd(context as usize, 1.0, &mut output, &mut grad_in);
                        for _ in 0..cfg.negative {
                            let neg = unigram.draw(&mut rng);
                            if neg == center {
                                continue;
                            }
                            upd(neg as usize, 0.0, &mut output, &mut grad_in);
                        }
                    }
                    let mut row = input.row_mut(center as usize);
                    row += &grad_in;
                }
            }
        }
    }

    Ok(PretrainOutcome {
        table: EmbeddingTable { vectors: input },
        unvisited,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::walk::{sample_context, SamplerConfig};

    fn two_cliques() -> Graph {
        let mut edges = Vec::new();
        for u in 0..6u32 {
            for v in (u + 1)..6 {
                edges.push((u, v));
            }
        }
        for u in 6..12u32 {
            for v in (u + 1)..12 {
                edges.push((u, v));
            }
        }
        edges.push((0, 6));
        Graph::from_edges(12, &edges).unwrap()
    }

    fn clique_walks(g: &Graph) -> WalkBatch {
        sample_context(
            g,
            None,
            &SamplerConfig {
                mix_ratio: 1.0,
                walks_per_batch: 400,
                walk_length: 8,
                ..Default::default()
            },
            SeedStream::new(17, "emb-walks"),
        )
        .unwrap()
    }

    #[test]
    fn table_shape_matches_dim() {
        let g = two_cliques();
        let walks = clique_walks(&g);
        let out = pretrain_embeddings(
            g.n(),
            &walks,
            &EmbedConfig {
                dim: 100,
                epochs: 1,
                ..Default::default()
            },
            SeedStream::new(1, "emb"),
        )
        .unwrap();
        assert_eq!(out.table.n(), 12);
        assert_eq!(out.table.dim(), 100);
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let g = two_cliques();
        let walks = clique_walks(&g);
        let cfg = EmbedConfig {
            dim: 16,
            epochs: 0,
            ..Default::default()
        };
        let a = pretrain_embeddings(g.n(), &walks, &cfg, SeedStream::new(2, "emb")).unwrap();
        let b = pretrain_embeddings(g.n(), &walks, &cfg, SeedStream::new(2, "emb")).unwrap();
        assert_eq!(a.table, b.table);
        assert!(a.table.vectors.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn unvisited_nodes_stay_zero_and_are_reported() {
        let g = Graph::from_parts(
            vec!["a".into(), "b".into(), "c".into(), "lone".into()],
            &[(0, 1), (1, 2), (0, 2)],
        )
        .unwrap();
        let walks = sample_context(
            &g,
            None,
            &SamplerConfig {
                mix_ratio: 1.0,
                walks_per_batch: 50,
                walk_length: 6,
                ..Default::default()
            },
            SeedStream::new(3, "emb-walks"),
        )
        .unwrap();
        let out = pretrain_embeddings(
            g.n(),
            &walks,
            &EmbedConfig {
                dim: 8,
                epochs: 2,
                ..Default::default()
            },
            SeedStream::new(3, "emb"),
        )
        .unwrap();
        assert_eq!(out.unvisited, vec![3]);
        assert!(out.table.vectors.row(3).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cliques_separate_in_embedding_space() {
        let g = two_cliques();
        let walks = clique_walks(&g);
        let out = pretrain_embeddings(
            g.n(),
            &walks,
            &EmbedConfig {
                dim: 16,
                window: 4,
                negative: 5,
                epochs: 8,
                lr: 0.025,
            },
            SeedStream::new(4, "emb"),
        )
        .unwrap();
        let mut intra = Vec::new();
        let mut inter = Vec::new();
        for u in 0..12u32 {
            for v in (u + 1)..12 {
                let c = out.table.cosine(u, v);
                if (u < 6) == (v < 6) {
                    intra.push(c);
                } else {
                    inter.push(c);
                }
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(
            mean(&intra) > mean(&inter),
            "intra {} vs inter {}",
            mean(&intra),
            mean(&inter)
        );
    }

    #[test]
    fn deterministic_for_fixed_stream() {
        let g = two_cliques();
        let walks = clique_walks(&g);
        let cfg = EmbedConfig {
            dim: 12,
            epochs: 2,
            ..Default::default()
        };
        let a = pretrain_embeddings(g.n(), &walks, &cfg, SeedStream::new(9, "emb")).unwrap();
        let b = pretrain_embeddings(g.n(), &walks, &cfg, SeedStream::new(9, "emb")).unwrap();
        assert_eq!(a.table, b.table);
    }
}
