//! Exact escape and outside probabilities of the lazy walk restricted to
//! a node set, diffusion cores, and the walk-containment bound check.
//!
//! All quantities are computed with sparse matrix-vector products; no
//! Monte-Carlo estimation is involved.

use thiserror::Error;

use crate::graph::{conductance, Graph, GraphError};
use crate::transition::TransitionMatrix;

#[derive(Debug, Error)]
pub enum DiffusionError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("node {0} is not a member of the given set")]
    NodeNotInSet(u32),
    #[error("delta must lie strictly between 0 and 1 (got {0})")]
    BadDelta(f64),
}

/// Shared context: the graph and its lazy transition matrix.
pub struct Diffusion<'g> {
    graph: &'g Graph,
    matrix: TransitionMatrix,
}

struct SetView {
    members: Vec<u32>,
    mask: Vec<bool>,
}

impl<'g> Diffusion<'g> {
    pub fn new(graph: &'g Graph) -> Result<Self, DiffusionError> {
        let matrix = TransitionMatrix::build(graph, true)?;
        Ok(Self { graph, matrix })
    }

    pub fn matrix(&self) -> &TransitionMatrix {
        &self.matrix
    }

    fn set_view(&self, set: &[u32]) -> Result<SetView, DiffusionError> {
        if set.is_empty() {
            return Err(GraphError::EmptySet.into());
        }
        let mut mask = vec![false; self.graph.n()];
        for &u in set {
            if u as usize >= self.graph.n() {
                return Err(GraphError::NodeOutOfRange(u).into());
            }
            mask[u as usize] = true;
        }
        let members = (0..self.graph.n() as u32)
            .filter(|&u| mask[u as usize])
            .collect();
        Ok(SetView { members, mask })
    }

    /// Probability that the walk from `x`, truncated to `set`, has left
    /// the set within `t` steps: `1 - 1' (diag(chi_S) M)^t chi_x`.
    pub fn escape_probability(&self, set: &[u32], x: u32, t: usize) -> Result<f64, DiffusionError> {
        Ok(*self
            .escape_trajectory(set, x, t)?
            .last()
            .expect("trajectory includes t = 0"))
    }

    /// Probability that the unrestricted walk from `x` sits outside
    /// `set` at step `t`: `1 - chi_S' M^t chi_x`.
    pub fn outside_probability(
        &self,
        set: &[u32],
        x: u32,
        t: usize,
    ) -> Result<f64, DiffusionError> {
        Ok(*self
            .outside_trajectory(set, x, t)?
            .last()
            .expect("trajectory includes t = 0"))
    }

    /// Escape probabilities for every step `0..=t_max`.
    pub fn escape_trajectory(
        &self,
        set: &[u32],
        x: u32,
        t_max: usize,
    ) -> Result<Vec<f64>, DiffusionError> {
        let view = self.set_view(set)?;
        self.escape_trajectory_view(&view, x, t_max)
    }

    fn escape_trajectory_view(
        &self,
        view: &SetView,
        x: u32,
        t_max: usize,
    ) -> Result<Vec<f64>, DiffusionError> {
        if x as usize >= self.graph.n() || !view.mask[x as usize] {
            return Err(DiffusionError::NodeNotInSet(x));
        }
        let n = self.graph.n();
        let mut v = vec![0.0; n];
        v[x as usize] = 1.0;
        let mut next = vec![0.0; n];
        let mut out = Vec::with_capacity(t_max + 1);
        out.push(0.0);
        for _ in 0..t_max {
            self.matrix.apply_into(&v, &mut next);
            for (i, value) in next.iter_mut().enumerate() {
                if !view.mask[i] {
                    *value = 0.0;
                }
            }
            std::mem::swap(&mut v, &mut next);
            let stay: f64 = v.iter().sum();
            out.push(1.0 - stay);
        }
        Ok(out)
    }

    /// Outside probabilities for every step `0..=t_max`.
    pub fn outside_trajectory(
        &self,
        set: &[u32],
        x: u32,
        t_max: usize,
    ) -> Result<Vec<f64>, DiffusionError> {
        let view = self.set_view(set)?;
        self.outside_trajectory_view(&view, x, t_max)
    }

    fn outside_trajectory_view(
        &self,
        view: &SetView,
        x: u32,
        t_max: usize,
    ) -> Result<Vec<f64>, DiffusionError> {
        if x as usize >= self.graph.n() || !view.mask[x as usize] {
            return Err(DiffusionError::NodeNotInSet(x));
        }
        let n = self.graph.n();
        let mut v = vec![0.0; n];
        v[x as usize] = 1.0;
        let mut next = vec![0.0; n];
        let mut out = Vec::with_capacity(t_max + 1);
        out.push(0.0);
        for _ in 0..t_max {
            self.matrix.apply_into(&v, &mut next);
            std::mem::swap(&mut v, &mut next);
            let inside: f64 = view
                .members
                .iter()
                .map(|&u| v[u as usize])
                .sum();
            out.push(1.0 - inside);
        }
        Ok(out)
    }

    /// Conductance of `set`, with a zero cut short-circuited to 0 so
    /// that unions of whole components (including the full vertex set)
    /// are handled.
    pub fn phi(&self, set: &[u32]) -> Result<f64, DiffusionError> {
        let view = self.set_view(set)?;
        if view.members.len() == self.graph.n() {
            return Ok(0.0);
        }
        if self.graph.cut_size(&view.members)? == 0 {
            return Ok(0.0);
        }
        Ok(conductance(self.graph, &view.members)?)
    }

    /// Members of `set` whose outside probability at step `t` is below
    /// `delta * phi(set)`. When `phi(set) = 0` no walk can leave, and the
    /// core is the whole set.
    pub fn diffusion_core(
        &self,
        set: &[u32],
        delta: f64,
        t: usize,
    ) -> Result<Vec<u32>, DiffusionError> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(DiffusionError::BadDelta(delta));
        }
        let view = self.set_view(set)?;
        let phi = self.phi(&view.members)?;
        if phi == 0.0 {
            return Ok(view.members);
        }
        let threshold = delta * phi;
        let mut core = Vec::new();
        for &x in &view.members {
            let outside = *self
                .outside_trajectory_view(&view, x, t)?
                .last()
                .expect("includes t = 0");
            if outside < threshold {
                core.push(x);
            }
        }
        Ok(core)
    }

    /// Checks, for every step budget `t = 1..=t_max` and every member of
    /// the `(delta, t)`-core, that the escape probability within `t`
    /// steps stays below `t * delta * phi(set)`.
    pub fn verify_escape_bound(
        &self,
        set: &[u32],
        delta: f64,
        t_max: usize,
    ) -> Result<EscapeBoundReport, DiffusionError> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(DiffusionError::BadDelta(delta));
        }
        let view = self.set_view(set)?;
        let phi = self.phi(&view.members)?;
        let threshold = delta * phi;
        let mut nodes = Vec::with_capacity(view.members.len());
        let mut violations = 0usize;
        let mut checks = 0usize;
        let mut max_core = vec![0usize; t_max + 1];
        for &x in &view.members {
            let outside = self.outside_trajectory_view(&view, x, t_max)?;
            let escape = self.escape_trajectory_view(&view, x, t_max)?;
            let mut entry = EscapeBoundNode {
                node: x,
                checks: 0,
                min_slack: f64::INFINITY,
                max_slack: f64::NEG_INFINITY,
                violated: false,
                out_of_scope: true,
            };
            for t in 1..=t_max {
                let in_core = phi == 0.0 || outside[t] < threshold;
                if !in_core {
                    continue;
                }
                max_core[t] += 1;
                entry.out_of_scope = false;
                entry.checks += 1;
                checks += 1;
                let slack = t as f64 * threshold - escape[t];
                entry.min_slack = entry.min_slack.min(slack);
                entry.max_slack = entry.max_slack.max(slack);
                if escape[t] > t as f64 * threshold {
                    entry.violated = true;
                    violations += 1;
                }
            }
            nodes.push(entry);
        }
        Ok(EscapeBoundReport {
            phi,
            delta,
            t_max,
            core_sizes: max_core,
            nodes,
            checks,
            violations,
        })
    }
}

/// Per-node outcome of the escape-bound check.
#[derive(Clone, Debug)]
pub struct EscapeBoundNode {
    pub node: u32,
    /// Number of step budgets at which the node was in the core.
    pub checks: usize,
    /// Tightest bound margin over the checked budgets (negative means a
    /// violation).
    pub min_slack: f64,
    pub max_slack: f64,
    pub violated: bool,
    /// True when the node was never in any core, so the bound is not
    /// claimed for it.
    pub out_of_scope: bool,
}

#[derive(Clone, Debug)]
pub struct EscapeBoundReport {
    pub phi: f64,
    pub delta: f64,
    pub t_max: usize,
    /// Core size per step budget (index 0 unused).
    pub core_sizes: Vec<usize>,
    pub nodes: Vec<EscapeBoundNode>,
    pub checks: usize,
    pub violations: usize,
}

impl EscapeBoundReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("node,checks,min_slack,max_slack,violated,out_of_scope\n");
        for n in &self.nodes {
            let (lo, hi) = if n.out_of_scope {
                (String::new(), String::new())
            } else {
                (n.min_slack.to_string(), n.max_slack.to_string())
            };
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                n.node, n.checks, lo, hi, n.violated, n.out_of_scope
            ));
        }
        out
    }
}

/// Convenience wrappers constructing the context per call.
pub fn escape_probability(g: &Graph, set: &[u32], x: u32, t: usize) -> Result<f64, DiffusionError> {
    Diffusion::new(g)?.escape_probability(set, x, t)
}

pub fn outside_probability(
    g: &Graph,
    set: &[u32],
    x: u32,
    t: usize,
) -> Result<f64, DiffusionError> {
    Diffusion::new(g)?.outside_probability(set, x, t)
}

pub fn diffusion_core(
    g: &Graph,
    set: &[u32],
    delta: f64,
    t: usize,
) -> Result<Vec<u32>, DiffusionError> {
    Diffusion::new(g)?.diffusion_core(set, delta, t)
}

pub fn verify_escape_bound(
    g: &Graph,
    set: &[u32],
    delta: f64,
    t_max: usize,
) -> Result<EscapeBoundReport, DiffusionError> {
    Diffusion::new(g)?.verify_escape_bound(set, delta, t_max)
}
