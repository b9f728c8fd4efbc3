//! Column-stochastic lazy-walk transition matrix `M = (A D^{-1} + I) / 2`
//! in compressed sparse column form.

use crate::graph::{Graph, GraphError};

/// Sparse column-stochastic matrix. Column `j` holds `0.5` on the
/// diagonal and `0.5 / deg(j)` for each neighbor of `j`; an isolated
/// node (when permitted) gets the identity column `e_j`.
#[derive(Clone, Debug)]
pub struct TransitionMatrix {
    n: usize,
    col_ptr: Vec<usize>,
    rows: Vec<u32>,
    vals: Vec<f64>,
}

/// Strict constructor: rejects isolated nodes, whose walk column is
/// undefined.
pub fn transition_matrix(g: &Graph) -> Result<TransitionMatrix, GraphError> {
    TransitionMatrix::build(g, false)
}

impl TransitionMatrix {
    /// `allow_isolated` keeps isolated nodes with identity columns.
    pub fn build(g: &Graph, allow_isolated: bool) -> Result<Self, GraphError> {
        let n = g.n();
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut rows = Vec::with_capacity(2 * g.m() + n);
        let mut vals = Vec::with_capacity(2 * g.m() + n);
        col_ptr.push(0);
        for j in 0..n as u32 {
            let deg = g.degree(j);
            if deg == 0 {
                if !allow_isolated {
                    return Err(GraphError::IsolatedNode(g.external_id(j).to_string()));
                }
                rows.push(j);
                vals.push(1.0);
            } else {
                let w = 0.5 / deg as f64;
                let mut placed_self = false;
                for &i in g.neighbors(j) {
                    if !placed_self && i > j {
                        rows.push(j);
                        vals.push(0.5);
                        placed_self = true;
                    }
                    rows.push(i);
                    vals.push(w);
                }
                if !placed_self {
                    rows.push(j);
                    vals.push(0.5);
                }
            }
            col_ptr.push(rows.len());
        }
        Ok(Self {
            n,
            col_ptr,
            rows,
            vals,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `y = M x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.apply_into(x, &mut y);
        y
    }

    pub fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        y.fill(0.0);
        for j in 0..self.n {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                y[self.rows[k] as usize] += self.vals[k] * xj;
            }
        }
    }

    pub fn column_sum(&self, j: u32) -> f64 {
        let j = j as usize;
        self.vals[self.col_ptr[j]..self.col_ptr[j + 1]].iter().sum()
    }

    pub fn entry(&self, i: u32, j: u32) -> f64 {
        let j = j as usize;
        let slice = &self.rows[self.col_ptr[j]..self.col_ptr[j + 1]];
        match slice.binary_search(&i) {
            Ok(k) => self.vals[self.col_ptr[j] + k],
            Err(_) => 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn k2_entries_are_half() {
        let g = Graph::from_edges(2, &[(0, 1)]).unwrap();
        let m = transition_matrix(&g).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(m.entry(i, j), 0.5);
            }
        }
    }

    #[test]
    fn path_middle_column() {
        let g = Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let m = transition_matrix(&g).unwrap();
        assert_eq!(m.entry(0, 1), 0.25);
        assert_eq!(m.entry(1, 1), 0.5);
        assert_eq!(m.entry(2, 1), 0.25);
    }

    #[test]
    fn isolated_rejected_by_name_and_kept_with_flag() {
        let g = Graph::from_parts(vec!["x".into(), "y".into(), "lone".into()], &[(0, 1)]).unwrap();
        match transition_matrix(&g) {
            Err(GraphError::IsolatedNode(name)) => assert_eq!(name, "lone"),
            other => panic!("expected isolated-node error, got {other:?}"),
        }
        let m = TransitionMatrix::build(&g, true).unwrap();
        assert_eq!(m.entry(2, 2), 1.0);
        assert_eq!(m.column_sum(2), 1.0);
    }

    #[test]
    fn apply_matches_entries() {
        let g = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3), (0, 3), (0, 2)]).unwrap();
        let m = transition_matrix(&g).unwrap();
        let x = [0.2, 0.3, 0.1, 0.4];
        let y = m.apply(&x);
        for i in 0..4u32 {
            let expect: f64 = (0..4u32).map(|j| m.entry(i, j) * x[j as usize]).sum();
            assert!((y[i as usize] - expect).abs() < 1e-15);
        }
    }

    proptest! {
        #[test]
        fn columns_sum_to_one(edges in proptest::collection::vec((0u32..20, 0u32..20), 1..80)) {
            let g = Graph::from_edges(20, &edges).unwrap();
            let m = TransitionMatrix::build(&g, true).unwrap();
            for j in 0..20u32 {
                prop_assert!((m.column_sum(j) - 1.0).abs() <= 1e-12);
            }
        }
    }
}
