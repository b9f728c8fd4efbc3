//! The discriminator (three affine layers with rectifier activations and
//! a softmax head), cost-sensitive prediction loss, statistical-parity
//! regularizer, label-propagation loss, and the closed-form self-paced
//! selection update.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use thiserror::Error;

use crate::embedding::EmbeddingTable;
use crate::graph::{GroupMembership, LabelSet};
use crate::rng::SeedStream;

/// Log probabilities are clamped here to keep losses finite under
/// confident mispredictions; gradients are gated at the clamp.
pub const LOG_FLOOR: f64 = -30.0;

#[derive(Debug, Error)]
pub enum FairError {
    #[error("both groups must be non-empty (protected {protected}, unprotected {unprotected})")]
    EmptyGroup { protected: usize, unprotected: usize },
    #[error("label class {0} out of range (classes = {1})")]
    ClassOutOfRange(usize, usize),
    #[error("node {0} outside feature table (n = {1})")]
    NodeOutOfRange(u32, usize),
    #[error("discriminator step hit a non-finite loss: {0}")]
    NonFinite(f64),
    #[error("self-paced threshold must be positive (got {0})")]
    BadLambda(f64),
}

/// Three-layer classifier `features -> hidden -> hidden -> classes`.
#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator {
    w1: Array2<f64>,
    b1: Array1<f64>,
    w2: Array2<f64>,
    b2: Array1<f64>,
    w3: Array2<f64>,
    b3: Array1<f64>,
}

struct DiscCache {
    a1: Array2<f64>,
    a2: Array2<f64>,
    logp: Array2<f64>,
}

impl Discriminator {
    pub fn new(input_dim: usize, hidden: usize, classes: usize, stream: SeedStream) -> Self {
        let mut rng = stream.rng(0);
        let mut init = |rows: usize, cols: usize| {
            let scale = 1.0 / (rows as f64).sqrt();
            Array2::from_shape_fn((rows, cols), |_| (rng.random::<f64>() * 2.0 - 1.0) * scale)
        };
        Self {
            w1: init(input_dim, hidden),
            b1: Array1::zeros(hidden),
            w2: init(hidden, hidden),
            b2: Array1::zeros(hidden),
            w3: init(hidden, classes),
            b3: Array1::zeros(classes),
        }
    }

    pub fn classes(&self) -> usize {
        self.w3.ncols()
    }

    pub fn input_dim(&self) -> usize {
        self.w1.nrows()
    }

    fn forward(&self, feats: &Array2<f64>) -> DiscCache {
        let a1 = (&feats.dot(&self.w1) + &self.b1).mapv(|v| v.max(0.0));
        let a2 = (&a1.dot(&self.w2) + &self.b2).mapv(|v| v.max(0.0));
        let mut logp = &a2.dot(&self.w3) + &self.b3;
        for mut row in logp.rows_mut() {
            let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
            row.mapv_inplace(|v| v - lse);
        }
        DiscCache { a1, a2, logp }
    }

    /// Log class probabilities for every node, `n x C`.
    pub fn log_probs(&self, feats: &EmbeddingTable) -> Array2<f64> {
        self.forward(&feats.vectors).logp
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for a in [&self.w1, &self.w2, &self.w3] {
            out.extend(a.iter().copied());
        }
        for b in [&self.b1, &self.b2, &self.b3] {
            out.extend(b.iter().copied());
        }
        out
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) {
        let mut offset = 0;
        for a in [&mut self.w1, &mut self.w2, &mut self.w3] {
            for v in a.iter_mut() {
                *v = flat[offset];
                offset += 1;
            }
        }
        for b in [&mut self.b1, &mut self.b2, &mut self.b3] {
            for v in b.iter_mut() {
                *v = flat[offset];
                offset += 1;
            }
        }
        assert_eq!(offset, flat.len(), "parameter count mismatch");
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> std::io::Result<()> {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"FGDC");
        for v in [
            1u32,
            self.w1.nrows() as u32,
            self.w1.ncols() as u32,
            self.w3.ncols() as u32,
        ] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        for v in self.params_flat() {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
        std::fs::write(path, bytes)
    }
}

/// Non-negative weights for the prediction, label-propagation, and
/// parity terms.
#[derive(Clone, Copy, Debug)]
pub struct FairLossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for FairLossWeights {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
        }
    }
}

/// Cost-sensitive weight: `1/|S+|` for protected nodes, `1/|S-|`
/// otherwise.
pub fn cost_weight(x: u32, groups: &GroupMembership) -> Result<f64, FairError> {
    if groups.protected().is_empty() || groups.unprotected().is_empty() {
        return Err(FairError::EmptyGroup {
            protected: groups.protected().len(),
            unprotected: groups.unprotected().len(),
        });
    }
    Ok(if groups.is_protected(x) {
        1.0 / groups.protected().len() as f64
    } else {
        1.0 / groups.unprotected().len() as f64
    })
}

fn clamped(lp: f64) -> f64 {
    lp.max(LOG_FLOOR)
}

/// Per-class group means of clamped log probabilities.
pub(crate) fn parity_terms_from_logp(
    logp: &Array2<f64>,
    groups: &GroupMembership,
) -> Result<(Vec<f64>, Vec<f64>), FairError> {
    if groups.protected().is_empty() || groups.unprotected().is_empty() {
        return Err(FairError::EmptyGroup {
            protected: groups.protected().len(),
            unprotected: groups.unprotected().len(),
        });
    }
    let classes = logp.ncols();
    let mean_over = |nodes: &[u32]| -> Vec<f64> {
        let mut m = vec![0.0; classes];
        for &x in nodes {
            for (c, entry) in m.iter_mut().enumerate() {
                *entry += clamped(logp[[x as usize, c]]);
            }
        }
        for entry in &mut m {
            *entry /= nodes.len() as f64;
        }
        m
    };
    Ok((mean_over(groups.protected()), mean_over(groups.unprotected())))
}

/// Statistical-parity measures `m_c^+` and `m_c^-` for every class.
pub fn parity_terms(
    d: &Discriminator,
    feats: &EmbeddingTable,
    groups: &GroupMembership,
) -> Result<(Vec<f64>, Vec<f64>), FairError> {
    parity_terms_from_logp(&d.log_probs(feats), groups)
}

/// `gamma * sum_c |m_c^+ - m_c^-|`.
pub fn fairness_loss(m_plus: &[f64], m_minus: &[f64], gamma: f64) -> f64 {
    gamma
        * m_plus
            .iter()
            .zip(m_minus)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
}

/// `alpha * sum_labeled cost_weight(x) * crossEntropy(Pr(.|x), y_x)`.
pub fn prediction_loss(
    d: &Discriminator,
    feats: &EmbeddingTable,
    labels: &LabelSet,
    groups: &GroupMembership,
    alpha: f64,
) -> Result<f64, FairError> {
    let logp = d.log_probs(feats);
    let mut loss = 0.0;
    for (node, class) in labels.iter() {
        if class >= d.classes() {
            return Err(FairError::ClassOutOfRange(class, d.classes()));
        }
        if node as usize >= feats.n() {
            return Err(FairError::NodeOutOfRange(node, feats.n()));
        }
        loss += cost_weight(node, groups)? * -clamped(logp[[node as usize, class]]);
    }
    Ok(alpha * loss)
}

/// `-beta * sum_i sum_c v_i^c log Pr(y_i = c | x_i)`.
pub fn label_prop_loss(
    d: &Discriminator,
    feats: &EmbeddingTable,
    sp: &SelfPacedState,
    beta: f64,
) -> f64 {
    let logp = d.log_probs(feats);
    let mut loss = 0.0;
    for i in 0..sp.n() {
        for c in 0..sp.classes() {
            if sp.selected(i as u32, c) {
                loss -= clamped(logp[[i, c]]);
            }
        }
    }
    beta * loss
}

/// Binary selection vectors `v^(c)`, the threshold schedule, and the
/// log probabilities from the most recent update.
#[derive(Clone, Debug)]
pub struct SelfPacedState {
    v: Array2<u8>,
    lambda: f64,
    growth: f64,
    cycle: usize,
    ground_truth: Vec<Option<usize>>,
    log_probs: Option<Array2<f64>>,
}

impl SelfPacedState {
    /// Initializes from the labeled vertices: `v_i^(c) = 1` exactly for
    /// ground-truth labels, which stay fixed through every cycle.
    pub fn init(
        n: usize,
        classes: usize,
        labels: &LabelSet,
        lambda0: f64,
        growth: f64,
    ) -> Result<Self, FairError> {
        if !(lambda0 > 0.0) {
            return Err(FairError::BadLambda(lambda0));
        }
        let mut ground_truth = vec![None; n];
        let mut v = Array2::zeros((n, classes));
        for (node, class) in labels.iter() {
            if class >= classes {
                return Err(FairError::ClassOutOfRange(class, classes));
            }
            ground_truth[node as usize] = Some(class);
            v[[node as usize, class]] = 1;
        }
        Ok(Self {
            v,
            lambda: lambda0,
            growth,
            cycle: 0,
            ground_truth,
            log_probs: None,
        })
    }

    pub fn n(&self) -> usize {
        self.v.nrows()
    }

    pub fn classes(&self) -> usize {
        self.v.ncols()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn cycle(&self) -> usize {
        self.cycle
    }

    pub fn selected(&self, node: u32, class: usize) -> bool {
        self.v[[node as usize, class]] == 1
    }

    pub fn selected_count(&self) -> usize {
        self.v.iter().filter(|&&b| b == 1).count()
    }

    pub fn is_ground_truth(&self, node: u32) -> bool {
        self.ground_truth[node as usize].is_some()
    }

    /// Raises the threshold by the configured growth factor.
    pub fn augment_lambda(&mut self) {
        self.lambda *= self.growth;
        self.cycle += 1;
    }
}

/// Closed-form selection: `v_i^(c) = 1` iff `-log Pr(y_i = c | x_i) <
/// lambda` (strict), with ground-truth rows overridden to their one-hot
/// labels. The threshold itself is left unchanged.
pub fn update_self_paced(
    d: &Discriminator,
    feats: &EmbeddingTable,
    sp: &SelfPacedState,
) -> SelfPacedState {
    let logp = d.log_probs(feats);
    let mut next = sp.clone();
    for i in 0..sp.n() {
        if let Some(class) = sp.ground_truth[i] {
            for c in 0..sp.classes() {
                next.v[[i, c]] = u8::from(c == class);
            }
            continue;
        }
        for c in 0..sp.classes() {
            next.v[[i, c]] = u8::from(-logp[[i, c]] < sp.lambda);
        }
    }
    next.log_probs = Some(logp);
    next
}

#[derive(Clone, Debug, PartialEq)]
pub struct PseudoLabel {
    pub node: u32,
    pub class: usize,
    pub confidence: f64,
}

/// Pseudo-labels from the current selection: unlabeled nodes with at
/// least one selected class get the most probable selected class (ties
/// go to the lowest class index). Ground-truth labels are never
/// overwritten.
pub fn pseudo_labels(sp: &SelfPacedState) -> Vec<PseudoLabel> {
    let logp = match &sp.log_probs {
        Some(lp) => lp,
        None => return Vec::new(),
    };
    let mut out = Vec::new();
    for i in 0..sp.n() {
        if sp.ground_truth[i].is_some() {
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for c in 0..sp.classes() {
            if sp.v[[i, c]] == 1 {
                let p = logp[[i, c]].exp();
                let better = match best {
                    None => true,
                    Some((_, bp)) => p > bp,
                };
                if better {
                    best = Some((c, p));
                }
            }
        }
        if let Some((class, confidence)) = best {
            out.push(PseudoLabel {
                node: i as u32,
                class,
                confidence,
            });
        }
    }
    out
}

/// Forward-only value of the per-step discriminator objective
/// `J_P(batch) + J_L(batch) + J_F(full groups)`; the gradient-step
/// counterpart is [`train_discriminator_step`].
pub fn discriminator_objective(
    d: &Discriminator,
    feats: &EmbeddingTable,
    labels: &LabelSet,
    groups: &GroupMembership,
    sp: &SelfPacedState,
    weights: &FairLossWeights,
    batch: &[u32],
) -> Result<f64, FairError> {
    let cache = d.forward(&feats.vectors);
    objective_from_cache(d, &cache, labels, groups, sp, weights, batch).map(|(loss, _)| loss)
}

fn objective_from_cache(
    d: &Discriminator,
    cache: &DiscCache,
    labels: &LabelSet,
    groups: &GroupMembership,
    sp: &SelfPacedState,
    weights: &FairLossWeights,
    batch: &[u32],
) -> Result<(f64, Array2<f64>), FairError> {
    let logp = &cache.logp;
    let n = logp.nrows();
    let classes = d.classes();
    let mut dlogp = Array2::zeros((n, classes));
    let mut loss = 0.0;

    // Prediction term over the batch.
    for &x in batch {
        let class = match labels.class_of(x) {
            Some(c) => c,
            None => continue,
        };
        if class >= classes {
            return Err(FairError::ClassOutOfRange(class, classes));
        }
        let xi = cost_weight(x, groups)?;
        let lp = logp[[x as usize, class]];
        loss += weights.alpha * xi * -clamped(lp);
        if lp > LOG_FLOOR {
            dlogp[[x as usize, class]] -= weights.alpha * xi;
        }
    }

    // Label-propagation term over the batch.
    for &x in batch {
        for c in 0..classes {
            if sp.selected(x, c) {
                let lp = logp[[x as usize, c]];
                loss += weights.beta * -clamped(lp);
                if lp > LOG_FLOOR {
                    dlogp[[x as usize, c]] -= weights.beta;
                }
            }
        }
    }

    // Parity term over the full groups.
    if weights.gamma != 0.0 {
        let (m_plus, m_minus) = parity_terms_from_logp(logp, groups)?;
        loss += fairness_loss(&m_plus, &m_minus, weights.gamma);
        let inv_p = 1.0 / groups.protected().len() as f64;
        let inv_u = 1.0 / groups.unprotected().len() as f64;
        for c in 0..classes {
            let diff = m_plus[c] - m_minus[c];
            let sign = if diff > 0.0 {
                1.0
            } else if diff < 0.0 {
                -1.0
            } else {
                0.0
            };
            if sign == 0.0 {
                continue;
            }
            for &x in groups.protected() {
                if logp[[x as usize, c]] > LOG_FLOOR {
                    dlogp[[x as usize, c]] += weights.gamma * sign * inv_p;
                }
            }
            for &x in groups.unprotected() {
                if logp[[x as usize, c]] > LOG_FLOOR {
                    dlogp[[x as usize, c]] -= weights.gamma * sign * inv_u;
                }
            }
        }
    }

    Ok((loss, dlogp))
}

/// One SGD step on the combined objective. The batch is a slice of
/// labeled (or pseudo-labeled) nodes; parity is evaluated on the full
/// groups. Returns the loss before the update.
pub fn train_discriminator_step(
    d: &mut Discriminator,
    feats: &EmbeddingTable,
    labels: &LabelSet,
    groups: &GroupMembership,
    sp: &SelfPacedState,
    weights: &FairLossWeights,
    batch: &[u32],
    lr: f64,
) -> Result<f64, FairError> {
    let cache = d.forward(&feats.vectors);
    let (loss, dlogp) = objective_from_cache(d, &cache, labels, groups, sp, weights, batch)?;
    if !loss.is_finite() {
        return Err(FairError::NonFinite(loss));
    }

    // Log-softmax backward: dlogits_k = dlogp_k - p_k * sum_j dlogp_j.
    let probs = cache.logp.mapv(f64::exp);
    let row_sums = dlogp.sum_axis(Axis(1));
    let mut dlogits = dlogp;
    for (i, mut row) in dlogits.rows_mut().into_iter().enumerate() {
        let total = row_sums[i];
        for (c, val) in row.iter_mut().enumerate() {
            *val -= total * probs[[i, c]];
        }
    }

    let mut g_w3 = Array2::zeros(d.w3.raw_dim());
    general_mat_mul(1.0, &cache.a2.t(), &dlogits, 0.0, &mut g_w3);
    let g_b3 = dlogits.sum_axis(Axis(0));

    let mut da2 = Array2::zeros(cache.a2.raw_dim());
    general_mat_mul(1.0, &dlogits, &d.w3.t(), 0.0, &mut da2);
    da2.zip_mut_with(&cache.a2, |g, &a| {
        if a <= 0.0 {
            *g = 0.0;
        }
    });
    let mut g_w2 = Array2::zeros(d.w2.raw_dim());
    general_mat_mul(1.0, &cache.a1.t(), &da2, 0.0, &mut g_w2);
    let g_b2 = da2.sum_axis(Axis(0));

    let mut da1 = Array2::zeros(cache.a1.raw_dim());
    general_mat_mul(1.0, &da2, &d.w2.t(), 0.0, &mut da1);
    da1.zip_mut_with(&cache.a1, |g, &a| {
        if a <= 0.0 {
            *g = 0.0;
        }
    });
    let mut g_w1 = Array2::zeros(d.w1.raw_dim());
    general_mat_mul(1.0, &feats.vectors.t(), &da1, 0.0, &mut g_w1);
    let g_b1 = da1.sum_axis(Axis(0));

    d.w1.scaled_add(-lr, &g_w1);
    d.b1.scaled_add(-lr, &g_b1);
    d.w2.scaled_add(-lr, &g_w2);
    d.b2.scaled_add(-lr, &g_b2);
    d.w3.scaled_add(-lr, &g_w3);
    d.b3.scaled_add(-lr, &g_b3);
    Ok(loss)
}
