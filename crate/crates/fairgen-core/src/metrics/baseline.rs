//! Seeded random-graph baselines: uniform G(n, m), preferential
//! attachment, and the planted-partition generator used by the test
//! fixtures.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph::Graph;
use crate::rng::SeedStream;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("cannot place {m} edges on {n} nodes (max {max})")]
    TooManyEdges { n: usize, m: usize, max: u64 },
    #[error("generator needs at least one node")]
    NoNodes,
    #[error("attachment count must be at least 1")]
    ZeroAttachment,
}

/// Uniform simple graph with exactly `m` distinct edges.
pub fn er_generate(n: usize, m: usize, rng: &mut ChaCha8Rng) -> Result<Graph, BaselineError> {
    if n == 0 {
        return Err(BaselineError::NoNodes);
    }
    let max = n as u64 * (n as u64 - 1) / 2;
    if m as u64 > max {
        return Err(BaselineError::TooManyEdges { n, m, max });
    }
    let edges = if (m as u64) * 2 > max {
        // Dense regime: partial Fisher-Yates over the full pair list.
        let mut pairs: Vec<(u32, u32)> = (0..n as u32)
            .flat_map(|u| ((u + 1)..n as u32).map(move |v| (u, v)))
            .collect();
        for i in 0..m {
            let j = rng.random_range(i..pairs.len());
            pairs.swap(i, j);
        }
        pairs.truncate(m);
        pairs
    } else {
        let mut seen = std::collections::HashSet::with_capacity(m);
        let mut edges = Vec::with_capacity(m);
        while edges.len() < m {
            let u = rng.random_range(0..n as u32);
            let v = rng.random_range(0..n as u32);
            if u == v {
                continue;
            }
            let key = (u.min(v), u.max(v));
            if seen.insert(key) {
                edges.push(key);
            }
        }
        edges
    };
    Ok(Graph::from_edges(n, &edges).expect("n > 0"))
}

/// Preferential attachment: each new node attaches to `attach_k`
/// distinct existing nodes chosen proportionally to degree.
pub fn ba_generate(n: usize, attach_k: usize, rng: &mut ChaCha8Rng) -> Result<Graph, BaselineError> {
    if n == 0 {
        return Err(BaselineError::NoNodes);
    }
    if attach_k == 0 {
        return Err(BaselineError::ZeroAttachment);
    }
    let mut edges: Vec<(u32, u32)> = Vec::new();
    // Every edge endpoint appears once; uniform draws from this list
    // realize degree-proportional selection.
    let mut endpoints: Vec<u32> = Vec::new();
    for j in 1..n as u32 {
        let want = attach_k.min(j as usize);
        let mut targets: Vec<u32> = Vec::with_capacity(want);
        while targets.len() < want {
            let candidate = if endpoints.is_empty() {
                rng.random_range(0..j)
            } else {
                endpoints[rng.random_range(0..endpoints.len())]
            };
            if candidate != j && !targets.contains(&candidate) {
                targets.push(candidate);
            }
        }
        for t in targets {
            edges.push((t, j));
            endpoints.push(t);
            endpoints.push(j);
        }
    }
    Ok(Graph::from_edges(n, &edges).expect("n > 0"))
}

/// Blocks with independent within-block probability `p_in` and
/// between-block probability `p_out`.
pub fn planted_partition(sizes: &[usize], p_in: f64, p_out: f64, stream: SeedStream) -> Graph {
    let n: usize = sizes.iter().sum();
    let mut block = Vec::with_capacity(n);
    for (b, &s) in sizes.iter().enumerate() {
        block.extend(std::iter::repeat(b).take(s));
    }
    let mut rng = stream.rng(0);
    let mut edges = Vec::new();
    for u in 0..n as u32 {
        for v in (u + 1)..n as u32 {
            let p = if block[u as usize] == block[v as usize] {
                p_in
            } else {
                p_out
            };
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    Graph::from_edges(n, &edges).expect("n > 0")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::connected_components;

    #[test]
    fn er_complete_graph() {
        let n = 30;
        let m = n * (n - 1) / 2;
        let g = er_generate(n, m, &mut SeedStream::new(1, "er").rng(0)).unwrap();
        assert_eq!(g.m(), m);
        for u in 0..n as u32 {
            assert_eq!(g.degree(u), n - 1);
        }
    }

    #[test]
    fn er_rejects_infeasible() {
        assert!(matches!(
            er_generate(4, 7, &mut SeedStream::new(0, "er").rng(0)),
            Err(BaselineError::TooManyEdges { .. })
        ));
    }

    #[test]
    fn er_exact_edge_count() {
        let g = er_generate(100, 337, &mut SeedStream::new(9, "er").rng(0)).unwrap();
        assert_eq!(g.n(), 100);
        assert_eq!(g.m(), 337);
    }

    #[test]
    fn er_node_degree_statistics() {
        // A single node's degree across seeds behaves like a
        // Binomial(n - 1, m / max) sample.
        let n = 60;
        let m = 300;
        let runs = 100;
        let mut total = 0u64;
        for seed in 0..runs {
            let g = er_generate(n, m, &mut SeedStream::new(seed, "er-deg").rng(0)).unwrap();
            total += g.degree(0) as u64;
        }
        let mean = total as f64 / runs as f64;
        let expect = 2.0 * m as f64 / n as f64;
        let p = m as f64 / (n as f64 * (n as f64 - 1.0) / 2.0);
        let sigma = ((n as f64 - 1.0) * p * (1.0 - p)).sqrt() / (runs as f64).sqrt();
        assert!(
            (mean - expect).abs() <= 3.0 * sigma,
            "mean {mean} expect {expect} sigma {sigma}"
        );
    }

    #[test]
    fn ba_tree_when_attaching_one() {
        let g = ba_generate(40, 1, &mut SeedStream::new(2, "ba").rng(0)).unwrap();
        assert_eq!(g.m(), 39);
        assert_eq!(connected_components(&g).len(), 1);
    }

    #[test]
    fn ba_edge_count_formula() {
        let n = 25;
        let k = 3;
        let g = ba_generate(n, k, &mut SeedStream::new(3, "ba").rng(0)).unwrap();
        let expect: usize = (1..n).map(|j| k.min(j)).sum();
        assert_eq!(g.m(), expect);
    }

    #[test]
    fn planted_partition_blocks_are_denser() {
        let g = planted_partition(&[40, 40], 0.3, 0.01, SeedStream::new(4, "pp"));
        assert_eq!(g.n(), 80);
        let in_block: usize = g
            .edges()
            .filter(|&(u, v)| (u < 40) == (v < 40))
            .count();
        let across = g.m() - in_block;
        assert!(in_block > 5 * across);
    }
}
