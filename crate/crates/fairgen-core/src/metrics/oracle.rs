//! Brute-force reference implementations used to validate the fast
//! metric paths. Deliberately independent routes: triple enumeration for
//! triangles, Floyd-Warshall for path lengths, dense-matrix neighbor
//! checks for clustering, BFS labeling for components, and naive
//! floating-point formulas for the degree statistics.
//!
//! Capped at `n <= 200`.

use thiserror::Error;

use super::{Metric, MetricValue};
use crate::graph::Graph;

pub const MAX_ORACLE_NODES: usize = 200;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("oracle supports at most {MAX_ORACLE_NODES} nodes (got {0})")]
    TooLarge(usize),
}

fn check(g: &Graph) -> Result<(), OracleError> {
    if g.n() > MAX_ORACLE_NODES {
        return Err(OracleError::TooLarge(g.n()));
    }
    Ok(())
}

fn adjacency(g: &Graph) -> Vec<Vec<bool>> {
    let n = g.n();
    let mut a = vec![vec![false; n]; n];
    for (u, v) in g.edges() {
        a[u as usize][v as usize] = true;
        a[v as usize][u as usize] = true;
    }
    a
}

/// Degrees recomputed by scanning the edge list rather than reading
/// adjacency lengths.
fn degrees_from_edges(g: &Graph) -> Vec<u64> {
    let mut d = vec![0u64; g.n()];
    for (u, v) in g.edges() {
        d[u as usize] += 1;
        d[v as usize] += 1;
    }
    d
}

pub fn triangle_count(g: &Graph) -> Result<u64, OracleError> {
    check(g)?;
    let a = adjacency(g);
    let n = g.n();
    let mut count = 0u64;
    for u in 0..n {
        for v in u + 1..n {
            if !a[u][v] {
                continue;
            }
            for w in v + 1..n {
                if a[u][w] && a[v][w] {
                    count += 1;
                }
            }
        }
    }
    Ok(count)
}

pub fn average_shortest_path_length(g: &Graph) -> Result<MetricValue, OracleError> {
    check(g)?;
    let n = g.n();
    const INF: u64 = u64::MAX / 4;
    let mut dist = vec![vec![INF; n]; n];
    for i in 0..n {
        dist[i][i] = 0;
    }
    for (u, v) in g.edges() {
        dist[u as usize][v as usize] = 1;
        dist[v as usize][u as usize] = 1;
    }
    for k in 0..n {
        for i in 0..n {
            let dik = dist[i][k];
            if dik >= INF {
                continue;
            }
            for j in 0..n {
                let through = dik + dist[k][j];
                if through < dist[i][j] {
                    dist[i][j] = through;
                }
            }
        }
    }
    let mut sum = 0u64;
    let mut reached = 0u64;
    for i in 0..n {
        for j in 0..n {
            if i != j && dist[i][j] < INF {
                sum += dist[i][j];
                reached += 1;
            }
        }
    }
    if reached == 0 {
        return Ok(MetricValue::Undefined("no reachable pairs"));
    }
    Ok(MetricValue::Defined(sum as f64 / reached as f64))
}

pub fn clustering_coefficient(g: &Graph) -> Result<f64, OracleError> {
    check(g)?;
    let a = adjacency(g);
    let n = g.n();
    let mut total = 0.0;
    for v in 0..n {
        let nbrs: Vec<usize> = (0..n).filter(|&u| a[v][u]).collect();
        let d = nbrs.len();
        if d < 2 {
            continue;
        }
        let mut links = 0u64;
        for i in 0..d {
            for j in i + 1..d {
                if a[nbrs[i]][nbrs[j]] {
                    links += 1;
                }
            }
        }
        total += 2.0 * links as f64 / (d as f64 * (d as f64 - 1.0));
    }
    Ok(total / n as f64)
}

/// Components via BFS labeling (the fast path uses union-find).
pub fn components(g: &Graph) -> Result<Vec<usize>, OracleError> {
    check(g)?;
    let n = g.n();
    let mut label = vec![usize::MAX; n];
    let mut sizes = Vec::new();
    for start in 0..n {
        if label[start] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        let mut queue = vec![start as u32];
        label[start] = id;
        let mut size = 0usize;
        while let Some(u) = queue.pop() {
            size += 1;
            for &v in g.neighbors(u) {
                if label[v as usize] == usize::MAX {
                    label[v as usize] = id;
                    queue.push(v);
                }
            }
        }
        sizes.push(size);
    }
    Ok(sizes)
}

pub fn average_degree(g: &Graph) -> Result<MetricValue, OracleError> {
    check(g)?;
    let d = degrees_from_edges(g);
    Ok(MetricValue::Defined(
        d.iter().sum::<u64>() as f64 / g.n() as f64,
    ))
}

pub fn gini(g: &Graph) -> Result<MetricValue, OracleError> {
    check(g)?;
    let mut d = degrees_from_edges(g);
    d.sort_unstable();
    let total: f64 = d.iter().map(|&x| x as f64).sum();
    if total == 0.0 {
        return Ok(MetricValue::Undefined("all degrees are zero"));
    }
    let n = d.len() as f64;
    let weighted: f64 = d
        .iter()
        .enumerate()
        .map(|(i, &x)| (i as f64 + 1.0) * x as f64)
        .sum();
    Ok(MetricValue::Defined(
        2.0 * weighted / (n * total) - (n + 1.0) / n,
    ))
}

pub fn edge_distribution_entropy(g: &Graph) -> Result<MetricValue, OracleError> {
    check(g)?;
    if g.n() < 2 {
        return Ok(MetricValue::Undefined("needs at least two nodes"));
    }
    if g.m() == 0 {
        return Ok(MetricValue::Undefined("no edges"));
    }
    let d = degrees_from_edges(g);
    let two_m: f64 = d.iter().sum::<u64>() as f64;
    let mut h = 0.0;
    for &x in &d {
        if x > 0 {
            let p = x as f64 / two_m;
            h -= p * p.ln();
        }
    }
    Ok(MetricValue::Defined(h / (g.n() as f64).ln()))
}

pub fn power_law_exponent(g: &Graph) -> Result<MetricValue, OracleError> {
    check(g)?;
    let d = degrees_from_edges(g);
    let d_min = match d.iter().copied().min() {
        Some(x) => x,
        None => return Ok(MetricValue::Undefined("empty graph")),
    };
    if d_min == 0 {
        return Ok(MetricValue::Undefined("zero minimum degree"));
    }
    let log_sum: f64 = d.iter().map(|&x| (x as f64 / d_min as f64).ln()).sum();
    if log_sum == 0.0 {
        return Ok(MetricValue::Undefined("regular degree sequence"));
    }
    Ok(MetricValue::Defined(1.0 + g.n() as f64 / log_sum))
}

/// All nine statistics by the reference routes, in report order.
pub fn all_metrics(g: &Graph) -> Result<[MetricValue; 9], OracleError> {
    let comp = components(g)?;
    Ok([
        average_degree(g)?,
        MetricValue::Defined(comp.iter().copied().max().unwrap_or(0) as f64),
        MetricValue::Defined(triangle_count(g)? as f64),
        power_law_exponent(g)?,
        gini(g)?,
        edge_distribution_entropy(g)?,
        average_shortest_path_length(g)?,
        MetricValue::Defined(comp.len() as f64),
        MetricValue::Defined(clustering_coefficient(g)?),
    ])
}

/// Compares the fast path to the oracle. Integer metrics must match
/// exactly; real metrics within `1e-9` relative error.
pub fn assert_matches_fast(g: &Graph) -> Result<(), OracleError> {
    let fast = super::all_metrics(g);
    let slow = all_metrics(g)?;
    for ((m, f), s) in Metric::ALL.iter().zip(fast.iter()).zip(slow.iter()) {
        match (f, s) {
            (MetricValue::Defined(a), MetricValue::Defined(b)) => {
                if m.is_integer() {
                    assert_eq!(a, b, "{} fast {a} vs oracle {b}", m.id());
                } else {
                    let tol = 1e-9 * b.abs().max(1.0);
                    assert!(
                        (a - b).abs() <= tol,
                        "{} fast {a} vs oracle {b}",
                        m.id()
                    );
                }
            }
            (MetricValue::Undefined(_), MetricValue::Undefined(_)) => {}
            (a, b) => panic!("{}: definedness mismatch {a:?} vs {b:?}", m.id()),
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::baseline::er_generate;
    use crate::rng::SeedStream;

    #[test]
    fn k4_triangles() {
        let g = Graph::from_edges(4, &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]).unwrap();
        assert_eq!(triangle_count(&g).unwrap(), 4);
    }

    #[test]
    fn path4_aspl_oracle() {
        let g = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        let v = average_shortest_path_length(&g).unwrap();
        assert!((v.expect_defined() - 10.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn random_graph_fast_equals_oracle() {
        let g = er_generate(20, 57, &mut SeedStream::new(30, "er").rng(0)).unwrap();
        assert_matches_fast(&g).unwrap();
    }

    #[test]
    fn size_cap_enforced() {
        let edges: Vec<(u32, u32)> = (0..250u32).map(|i| (i, (i + 1) % 251)).collect();
        let g = Graph::from_edges(251, &edges).unwrap();
        assert!(matches!(triangle_count(&g), Err(OracleError::TooLarge(251))));
    }
}
