//! Autoregressive next-node sequence model: tied node embeddings,
//! learned positional encodings, one causal multi-head attention block,
//! and a feed-forward layer. Trained contrastively with SGD on positive
//! and negative walk pools; gradients are written by hand and checked
//! against finite differences in the tests.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView1, Axis};
use rand::Rng;
use thiserror::Error;

use crate::embedding::EmbeddingTable;
use crate::exec;
use crate::rng::SeedStream;
use crate::walk::{BatchRole, Walk, WalkBatch, WalkOrigin};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("bad model config: {0}")]
    BadConfig(String),
    #[error("embedding table is {got} dimensional, model expects {want}")]
    DimMismatch { got: usize, want: usize },
    #[error("prefix must be non-empty")]
    EmptyPrefix,
    #[error("prefix of length {got} exceeds the model context ({max})")]
    PrefixTooLong { got: usize, max: usize },
    #[error("token {0} outside node range {1}")]
    TokenOutOfRange(u32, usize),
    #[error("walk has length {got}, model expects {want}")]
    WalkLength { got: usize, want: usize },
    #[error("walk batch is empty")]
    EmptyBatch,
    #[error("training aborted at step {step}: non-finite loss {loss}")]
    NonFinite { step: usize, loss: f64 },
    #[error("bad start distribution: {0}")]
    BadStartDist(&'static str),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),
}

#[derive(Clone, Debug)]
pub struct GenModelConfig {
    pub dim: usize,
    pub heads: usize,
    pub ff_width: usize,
    pub walk_length: usize,
}

impl Default for GenModelConfig {
    fn default() -> Self {
        Self {
            dim: 100,
            heads: 4,
            ff_width: 200,
            walk_length: 10,
        }
    }
}

impl GenModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.dim == 0 || self.heads == 0 || self.ff_width == 0 {
            return Err(ModelError::BadConfig(
                "dim, heads, and ff_width must be positive".into(),
            ));
        }
        if self.dim % self.heads != 0 {
            return Err(ModelError::BadConfig(format!(
                "heads ({}) must divide dim ({})",
                self.heads, self.dim
            )));
        }
        if self.walk_length < 2 {
            return Err(ModelError::BadConfig("walk_length must be at least 2".into()));
        }
        Ok(())
    }
}

/// The trainable sequence model. The embedding table doubles as the
/// output projection (tied weights).
#[derive(Clone, Debug)]
pub struct GeneratorModel {
    n: usize,
    cfg: GenModelConfig,
    emb: Array2<f64>,
    pos: Array2<f64>,
    wq: Array2<f64>,
    wk: Array2<f64>,
    wv: Array2<f64>,
    wo: Array2<f64>,
    w1: Array2<f64>,
    b1: Array1<f64>,
    w2: Array2<f64>,
    b2: Array1<f64>,
}

fn uniform_init(rows: usize, cols: usize, scale: f64, rng: &mut rand_chacha::ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| (rng.random::<f64>() * 2.0 - 1.0) * scale)
}

impl GeneratorModel {
    /// Initializes from pretrained embeddings; all other parameters are
    /// drawn from a seeded uniform distribution.
    pub fn new(
        embeddings: &EmbeddingTable,
        cfg: GenModelConfig,
        stream: SeedStream,
    ) -> Result<Self, ModelError> {
        cfg.validate()?;
        if embeddings.dim() != cfg.dim {
            return Err(ModelError::DimMismatch {
                got: embeddings.dim(),
                want: cfg.dim,
            });
        }
        let d = cfg.dim;
        let ff = cfg.ff_width;
        let mut rng = stream.rng(0);
        let att_scale = 1.0 / (d as f64).sqrt();
        let ff_scale = 1.0 / (d as f64).sqrt();
        Ok(Self {
            n: embeddings.n(),
            emb: embeddings.vectors.clone(),
            pos: uniform_init(cfg.walk_length, d, 0.01, &mut rng),
            wq: uniform_init(d, d, att_scale, &mut rng),
            wk: uniform_init(d, d, att_scale, &mut rng),
            wv: uniform_init(d, d, att_scale, &mut rng),
            wo: uniform_init(d, d, att_scale, &mut rng),
            w1: uniform_init(d, ff, ff_scale, &mut rng),
            b1: Array1::zeros(ff),
            w2: uniform_init(ff, d, 1.0 / (ff as f64).sqrt(), &mut rng),
            b2: Array1::zeros(d),
            cfg,
        })
    }

    /// All-zero parameters; the next-node distribution is uniform.
    pub fn zeroed(n: usize, cfg: GenModelConfig) -> Result<Self, ModelError> {
        cfg.validate()?;
        let d = cfg.dim;
        let ff = cfg.ff_width;
        Ok(Self {
            n,
            emb: Array2::zeros((n, d)),
            pos: Array2::zeros((cfg.walk_length, d)),
            wq: Array2::zeros((d, d)),
            wk: Array2::zeros((d, d)),
            wv: Array2::zeros((d, d)),
            wo: Array2::zeros((d, d)),
            w1: Array2::zeros((d, ff)),
            b1: Array1::zeros(ff),
            w2: Array2::zeros((ff, d)),
            b2: Array1::zeros(d),
            cfg,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn config(&self) -> &GenModelConfig {
        &self.cfg
    }

    pub fn embedding(&self) -> &Array2<f64> {
        &self.emb
    }

    fn context(&self) -> usize {
        self.cfg.walk_length - 1
    }

    fn check_tokens(&self, tokens: &[u32]) -> Result<(), ModelError> {
        if tokens.is_empty() {
            return Err(ModelError::EmptyPrefix);
        }
        if tokens.len() > self.context() {
            return Err(ModelError::PrefixTooLong {
                got: tokens.len(),
                max: self.context(),
            });
        }
        for &t in tokens {
            if t as usize >= self.n {
                return Err(ModelError::TokenOutOfRange(t, self.n));
            }
        }
        Ok(())
    }

    fn forward(&self, tokens: &[u32]) -> Result<Cache, ModelError> {
        self.check_tokens(tokens)?;
        let s = tokens.len();
        let d = self.cfg.dim;
        let heads = self.cfg.heads;
        let dk = d / heads;
        let scale = 1.0 / (dk as f64).sqrt();

        let mut x = Array2::zeros((s, d));
        for (i, &tok) in tokens.iter().enumerate() {
            let row = &self.emb.row(tok as usize) + &self.pos.row(i);
            x.row_mut(i).assign(&row);
        }
        let q = x.dot(&self.wq);
        let k = x.dot(&self.wk);
        let v = x.dot(&self.wv);

        let mut att = Vec::with_capacity(heads);
        let mut z = Array2::zeros((s, d));
        for h in 0..heads {
            let cols = s![.., h * dk..(h + 1) * dk];
            let qh = q.slice(cols);
            let kh = k.slice(cols);
            let vh = v.slice(cols);
            let mut a = Array2::zeros((s, s));
            for i in 0..s {
                let qi = qh.row(i);
                let mut max = f64::NEG_INFINITY;
                let mut scores = vec![0.0; i + 1];
                for (j, score) in scores.iter_mut().enumerate() {
                    *score = qi.dot(&kh.row(j)) * scale;
                    if *score > max {
                        max = *score;
                    }
                }
                let mut total = 0.0;
                for score in &mut scores {
                    *score = (*score - max).exp();
                    total += *score;
                }
                for (j, score) in scores.iter().enumerate() {
                    a[[i, j]] = score / total;
                }
            }
            let mut zh = z.slice_mut(cols);
            general_mat_mul(1.0, &a, &vh, 0.0, &mut zh);
            att.push(a);
        }
        let x1 = &x + &z.dot(&self.wo);
        let g1 = &x1.dot(&self.w1) + &self.b1;
        let h_act = g1.mapv(|v| v.max(0.0));
        let x2 = &x1 + &(&h_act.dot(&self.w2) + &self.b2);

        let logits = x2.dot(&self.emb.t());
        let mut logp = logits;
        for mut row in logp.rows_mut() {
            let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
            row.mapv_inplace(|v| v - lse);
        }

        Ok(Cache {
            tokens: tokens.to_vec(),
            x,
            q,
            k,
            v,
            att,
            z,
            x1,
            g1,
            h_act,
            x2,
            logp,
        })
    }

    /// Distribution over the next node given a non-empty prefix.
    pub fn next_node_distribution(&self, prefix: &[u32]) -> Result<Vec<f64>, ModelError> {
        let cache = self.forward(prefix)?;
        Ok(cache
            .logp
            .row(prefix.len() - 1)
            .iter()
            .map(|&lp| lp.exp())
            .collect())
    }

    /// Sum of next-node log probabilities along a full-length walk.
    pub fn walk_log_likelihood(&self, nodes: &[u32]) -> Result<f64, ModelError> {
        if nodes.len() != self.cfg.walk_length {
            return Err(ModelError::WalkLength {
                got: nodes.len(),
                want: self.cfg.walk_length,
            });
        }
        let cache = self.forward(&nodes[..nodes.len() - 1])?;
        Ok((0..nodes.len() - 1)
            .map(|i| cache.logp[[i, nodes[i + 1] as usize]])
            .sum())
    }

    /// Contrastive objective over walk slices: mean positive negative
    /// log-likelihood plus `mu` times the mean floored negative-walk
    /// log-likelihood. Forward-only; used for gradient checking.
    pub fn batch_objective(
        &self,
        pos: &[Walk],
        neg: &[Walk],
        mu: f64,
        floor: f64,
    ) -> Result<f64, ModelError> {
        if pos.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        let mut loss = 0.0;
        for walk in pos {
            loss -= self.walk_log_likelihood(&walk.nodes)? / pos.len() as f64;
        }
        if mu != 0.0 && !neg.is_empty() {
            for walk in neg {
                let cache = self.forward(&walk.nodes[..walk.nodes.len() - 1])?;
                let term: f64 = (0..walk.nodes.len() - 1)
                    .map(|i| cache.logp[[i, walk.nodes[i + 1] as usize]].max(floor))
                    .sum();
                loss += mu * term / neg.len() as f64;
            }
        }
        Ok(loss)
    }

    /// Flat parameter vector in checkpoint order: emb, pos, wq, wk, wv,
    /// wo, w1, w2, b1, b2.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for a in [
            &self.emb, &self.pos, &self.wq, &self.wk, &self.wv, &self.wo, &self.w1, &self.w2,
        ] {
            out.extend(a.iter().copied());
        }
        out.extend(self.b1.iter().copied());
        out.extend(self.b2.iter().copied());
        out
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) {
        let mut offset = 0;
        for a in [
            &mut self.emb,
            &mut self.pos,
            &mut self.wq,
            &mut self.wk,
            &mut self.wv,
            &mut self.wo,
            &mut self.w1,
            &mut self.w2,
        ] {
            for v in a.iter_mut() {
                *v = flat[offset];
                offset += 1;
            }
        }
        for v in self.b1.iter_mut().chain(self.b2.iter_mut()) {
            *v = flat[offset];
            offset += 1;
        }
        assert_eq!(offset, flat.len(), "parameter count mismatch");
    }
}

struct Cache {
    tokens: Vec<u32>,
    x: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    att: Vec<Array2<f64>>,
    z: Array2<f64>,
    x1: Array2<f64>,
    g1: Array2<f64>,
    h_act: Array2<f64>,
    x2: Array2<f64>,
    logp: Array2<f64>,
}

struct Grads {
    emb: Array2<f64>,
    pos: Array2<f64>,
    wq: Array2<f64>,
    wk: Array2<f64>,
    wv: Array2<f64>,
    wo: Array2<f64>,
    w1: Array2<f64>,
    b1: Array1<f64>,
    w2: Array2<f64>,
    b2: Array1<f64>,
}

impl Grads {
    fn zeros(m: &GeneratorModel) -> Self {
        Self {
            emb: Array2::zeros(m.emb.raw_dim()),
            pos: Array2::zeros(m.pos.raw_dim()),
            wq: Array2::zeros(m.wq.raw_dim()),
            wk: Array2::zeros(m.wk.raw_dim()),
            wv: Array2::zeros(m.wv.raw_dim()),
            wo: Array2::zeros(m.wo.raw_dim()),
            w1: Array2::zeros(m.w1.raw_dim()),
            b1: Array1::zeros(m.b1.raw_dim()),
            w2: Array2::zeros(m.w2.raw_dim()),
            b2: Array1::zeros(m.b2.raw_dim()),
        }
    }

    fn reset(&mut self) {
        self.emb.fill(0.0);
        self.pos.fill(0.0);
        self.wq.fill(0.0);
        self.wk.fill(0.0);
        self.wv.fill(0.0);
        self.wo.fill(0.0);
        self.w1.fill(0.0);
        self.b1.fill(0.0);
        self.w2.fill(0.0);
        self.b2.fill(0.0);
    }

    fn apply(&self, m: &mut GeneratorModel, lr: f64) {
        m.emb.scaled_add(-lr, &self.emb);
        m.pos.scaled_add(-lr, &self.pos);
        m.wq.scaled_add(-lr, &self.wq);
        m.wk.scaled_add(-lr, &self.wk);
        m.wv.scaled_add(-lr, &self.wv);
        m.wo.scaled_add(-lr, &self.wo);
        m.w1.scaled_add(-lr, &self.w1);
        m.b1.scaled_add(-lr, &self.b1);
        m.w2.scaled_add(-lr, &self.w2);
        m.b2.scaled_add(-lr, &self.b2);
    }
}

impl GeneratorModel {
    /// Accumulates gradients for one walk. `weight > 0` adds the
    /// negative log-likelihood (positive walks); `weight < 0` adds
    /// `|weight| * max(log p, floor)` per position (negative walks,
    /// gradient gated by the floor). Returns the walk's loss
    /// contribution.
    fn walk_backward(
        &self,
        nodes: &[u32],
        weight: f64,
        floor: f64,
        grads: &mut Grads,
    ) -> Result<f64, ModelError> {
        let cache = self.forward(&nodes[..nodes.len() - 1])?;
        let s = cache.tokens.len();
        let mut dlogits = Array2::zeros((s, self.n));
        let mut loss = 0.0;
        for i in 0..s {
            let target = nodes[i + 1] as usize;
            let lp = cache.logp[[i, target]];
            if weight > 0.0 {
                loss += -weight * lp;
                for (j, dl) in dlogits.row_mut(i).iter_mut().enumerate() {
                    *dl = weight * cache.logp[[i, j]].exp();
                }
                dlogits[[i, target]] -= weight;
            } else {
                let w = -weight;
                if lp > floor {
                    loss += w * lp;
                    for (j, dl) in dlogits.row_mut(i).iter_mut().enumerate() {
                        *dl = -w * cache.logp[[i, j]].exp();
                    }
                    dlogits[[i, target]] += w;
                } else {
                    loss += w * floor;
                }
            }
        }
        self.backward(&cache, &dlogits, grads);
        Ok(loss)
    }

    fn backward(&self, c: &Cache, dlogits: &Array2<f64>, g: &mut Grads) {
        let s = c.tokens.len();
        let d = self.cfg.dim;
        let heads = self.cfg.heads;
        let dk = d / heads;
        let scale = 1.0 / (dk as f64).sqrt();

        // logits = x2 emb'
        let mut dx2 = Array2::zeros((s, d));
        general_mat_mul(1.0, dlogits, &self.emb, 0.0, &mut dx2);
        general_mat_mul(1.0, &dlogits.t(), &c.x2, 1.0, &mut g.emb);

        // x2 = x1 + relu(x1 w1 + b1) w2 + b2
        let mut dh = Array2::zeros((s, self.cfg.ff_width));
        general_mat_mul(1.0, &dx2, &self.w2.t(), 0.0, &mut dh);
        general_mat_mul(1.0, &c.h_act.t(), &dx2, 1.0, &mut g.w2);
        g.b2.scaled_add(1.0, &dx2.sum_axis(Axis(0)));
        let mut dg1 = dh;
        dg1.zip_mut_with(&c.g1, |dv, &pre| {
            if pre <= 0.0 {
                *dv = 0.0;
            }
        });
        general_mat_mul(1.0, &c.x1.t(), &dg1, 1.0, &mut g.w1);
        g.b1.scaled_add(1.0, &dg1.sum_axis(Axis(0)));
        let mut dx1 = dx2;
        general_mat_mul(1.0, &dg1, &self.w1.t(), 1.0, &mut dx1);

        // x1 = x + z wo
        let mut dz = Array2::zeros((s, d));
        general_mat_mul(1.0, &dx1, &self.wo.t(), 0.0, &mut dz);
        general_mat_mul(1.0, &c.z.t(), &dx1, 1.0, &mut g.wo);

        let mut dq = Array2::zeros((s, d));
        let mut dkm = Array2::zeros((s, d));
        let mut dv = Array2::zeros((s, d));
        for h in 0..heads {
            let cols = s![.., h * dk..(h + 1) * dk];
            let qh = c.q.slice(cols);
            let kh = c.k.slice(cols);
            let vh = c.v.slice(cols);
            let ah = &c.att[h];
            let dzh = dz.slice(cols);

            let da = dzh.dot(&vh.t());
            {
                let mut dvh = dv.slice_mut(cols);
                general_mat_mul(1.0, &ah.t(), &dzh, 1.0, &mut dvh);
            }
            let mut ds = Array2::zeros((s, s));
            for i in 0..s {
                let mut dot = 0.0;
                for j in 0..=i {
                    dot += da[[i, j]] * ah[[i, j]];
                }
                for j in 0..=i {
                    ds[[i, j]] = ah[[i, j]] * (da[[i, j]] - dot);
                }
            }
            {
                let mut dqh = dq.slice_mut(cols);
                general_mat_mul(scale, &ds, &kh, 1.0, &mut dqh);
                let mut dkh = dkm.slice_mut(cols);
                general_mat_mul(scale, &ds.t(), &qh, 1.0, &mut dkh);
            }
        }
        general_mat_mul(1.0, &c.x.t(), &dq, 1.0, &mut g.wq);
        general_mat_mul(1.0, &c.x.t(), &dkm, 1.0, &mut g.wk);
        general_mat_mul(1.0, &c.x.t(), &dv, 1.0, &mut g.wv);

        let mut dx = dx1;
        general_mat_mul(1.0, &dq, &self.wq.t(), 1.0, &mut dx);
        general_mat_mul(1.0, &dkm, &self.wk.t(), 1.0, &mut dx);
        general_mat_mul(1.0, &dv, &self.wv.t(), 1.0, &mut dx);

        for (i, &tok) in c.tokens.iter().enumerate() {
            g.emb
                .row_mut(tok as usize)
                .scaled_add(1.0, &dx.row(i));
            g.pos.row_mut(i).scaled_add(1.0, &dx.row(i));
        }
    }
}

#[derive(Clone, Debug)]
pub struct GenTrainConfig {
    pub neg_weight: f64,
    pub neg_floor: f64,
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
}

impl Default for GenTrainConfig {
    fn default() -> Self {
        Self {
            neg_weight: 0.1,
            neg_floor: -10.0,
            steps: 200,
            batch: 128,
            lr: 0.01,
        }
    }
}

struct BatchCursor {
    order: Vec<usize>,
    cursor: usize,
    epoch: u64,
    stream: SeedStream,
}

impl BatchCursor {
    fn new(len: usize, stream: SeedStream) -> Self {
        let mut c = Self {
            order: (0..len).collect(),
            cursor: 0,
            epoch: 0,
            stream,
        };
        c.shuffle();
        c
    }

    fn shuffle(&mut self) {
        let mut rng = self.stream.rng(self.epoch);
        self.epoch += 1;
        for i in (1..self.order.len()).rev() {
            let j = rng.random_range(0..=i);
            self.order.swap(i, j);
        }
        self.cursor = 0;
    }

    fn take(&mut self, count: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(count);
        for _ in 0..count.min(self.order.len()) {
            if self.cursor >= self.order.len() {
                self.shuffle();
            }
            out.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        out
    }
}

/// SGD on the contrastive objective with seeded shuffling. Returns the
/// per-step loss trace.
pub fn train_generator(
    model: &mut GeneratorModel,
    pos: &WalkBatch,
    neg: &WalkBatch,
    cfg: &GenTrainConfig,
    stream: SeedStream,
) -> Result<Vec<f64>, ModelError> {
    if pos.is_empty() || neg.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    for batch in [pos, neg] {
        if batch.walk_length() != model.cfg.walk_length {
            return Err(ModelError::WalkLength {
                got: batch.walk_length(),
                want: model.cfg.walk_length,
            });
        }
    }
    let mut pos_cursor = BatchCursor::new(pos.len(), stream.with(0));
    let mut neg_cursor = BatchCursor::new(neg.len(), stream.with(1));
    let mut grads = Grads::zeros(model);
    let mut trace = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        grads.reset();
        let pos_ids = pos_cursor.take(cfg.batch);
        let neg_ids = neg_cursor.take(cfg.batch);
        let wp = 1.0 / pos_ids.len() as f64;
        let wn = cfg.neg_weight / neg_ids.len() as f64;
        let mut loss = 0.0;
        for &i in &pos_ids {
            loss += model.walk_backward(&pos.walks()[i].nodes, wp, cfg.neg_floor, &mut grads)?;
        }
        if cfg.neg_weight != 0.0 {
            for &i in &neg_ids {
                loss += model.walk_backward(&neg.walks()[i].nodes, -wn, cfg.neg_floor, &mut grads)?;
            }
        }
        if !loss.is_finite() {
            return Err(ModelError::NonFinite { step, loss });
        }
        grads.apply(model, cfg.lr);
        trace.push(loss);
    }
    Ok(trace)
}

/// Incremental decoder: appending a token computes only the new row of
/// the attention state, matching the full forward pass exactly.
struct Decoder<'m> {
    model: &'m GeneratorModel,
    len: usize,
    k: Array2<f64>,
    v: Array2<f64>,
}

impl<'m> Decoder<'m> {
    fn new(model: &'m GeneratorModel) -> Self {
        let ctx = model.context();
        Self {
            model,
            len: 0,
            k: Array2::zeros((ctx, model.cfg.dim)),
            v: Array2::zeros((ctx, model.cfg.dim)),
        }
    }

    /// Pushes `token` and returns the next-node probabilities.
    fn push(&mut self, token: u32) -> Vec<f64> {
        let m = self.model;
        let d = m.cfg.dim;
        let heads = m.cfg.heads;
        let dk = d / heads;
        let scale = 1.0 / (dk as f64).sqrt();
        let i = self.len;

        let x = &m.emb.row(token as usize) + &m.pos.row(i);
        let q = x.dot(&m.wq);
        self.k.row_mut(i).assign(&x.dot(&m.wk));
        self.v.row_mut(i).assign(&x.dot(&m.wv));
        self.len += 1;

        let mut z = Array1::zeros(d);
        for h in 0..heads {
            let range = h * dk..(h + 1) * dk;
            let qh = q.slice(s![range.clone()]);
            let mut scores = vec![0.0; i + 1];
            let mut max = f64::NEG_INFINITY;
            for (j, score) in scores.iter_mut().enumerate() {
                *score = qh.dot(&self.k.slice(s![j, range.clone()])) * scale;
                if *score > max {
                    max = *score;
                }
            }
            let mut total = 0.0;
            for score in &mut scores {
                *score = (*score - max).exp();
                total += *score;
            }
            for (j, score) in scores.iter().enumerate() {
                let a = score / total;
                z.slice_mut(s![range.clone()])
                    .scaled_add(a, &self.v.slice(s![j, range.clone()]));
            }
        }
        let x1 = &x + &z.dot(&m.wo);
        let g1 = &x1.dot(&m.w1) + &m.b1;
        let h_act = g1.mapv(|v| v.max(0.0));
        let x2 = &x1 + &(&h_act.dot(&m.w2) + &m.b2);
        let logits = m.emb.dot(&x2);
        let max = logits.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let mut probs: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
        let total: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= total;
        }
        probs
    }
}

fn validate_start_dist(dist: &[f64], n: usize) -> Result<Vec<f64>, ModelError> {
    if dist.len() != n {
        return Err(ModelError::BadStartDist("length must equal node count"));
    }
    let mut cumulative = Vec::with_capacity(n);
    let mut acc = 0.0;
    for &p in dist {
        if !p.is_finite() || p < 0.0 {
            return Err(ModelError::BadStartDist("entries must be finite and non-negative"));
        }
        acc += p;
        cumulative.push(acc);
    }
    if acc <= 0.0 {
        return Err(ModelError::BadStartDist("mass must be positive"));
    }
    Ok(cumulative)
}

fn draw_cumulative(cumulative: &[f64], rng: &mut rand_chacha::ChaCha8Rng) -> usize {
    let u = rng.random::<f64>() * cumulative.last().copied().unwrap();
    cumulative.partition_point(|&c| c <= u).min(cumulative.len() - 1)
}

fn generated_walk(
    model: &GeneratorModel,
    walk_length: usize,
    cumulative: &[f64],
    mut rng: rand_chacha::ChaCha8Rng,
) -> Walk {
    let mut nodes = Vec::with_capacity(walk_length);
    let mut decoder = Decoder::new(model);
    let start = draw_cumulative(cumulative, &mut rng) as u32;
    nodes.push(start);
    while nodes.len() < walk_length {
        let probs = decoder.push(*nodes.last().unwrap());
        let mut acc = 0.0;
        let u = rng.random::<f64>();
        let mut next = model.n - 1;
        for (j, &p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                next = j;
                break;
            }
        }
        nodes.push(next as u32);
    }
    Walk {
        nodes,
        origin: WalkOrigin::Generated,
    }
}

/// Samples `count` walks autoregressively; starts are drawn from
/// `start_dist`.
pub fn generate_walks(
    model: &GeneratorModel,
    count: usize,
    walk_length: usize,
    start_dist: &[f64],
    stream: SeedStream,
) -> Result<WalkBatch, ModelError> {
    if walk_length != model.cfg.walk_length {
        return Err(ModelError::WalkLength {
            got: walk_length,
            want: model.cfg.walk_length,
        });
    }
    let cumulative = validate_start_dist(start_dist, model.n)?;
    let walks = exec::map_indexed(count, |i| {
        generated_walk(model, walk_length, &cumulative, stream.rng(i as u64))
    });
    Ok(WalkBatch::from_walks(BatchRole::Negative, walks).expect("uniform length"))
}

/// Sequential twin of [`generate_walks`].
pub fn generate_walks_seq(
    model: &GeneratorModel,
    count: usize,
    walk_length: usize,
    start_dist: &[f64],
    stream: SeedStream,
) -> Result<WalkBatch, ModelError> {
    if walk_length != model.cfg.walk_length {
        return Err(ModelError::WalkLength {
            got: walk_length,
            want: model.cfg.walk_length,
        });
    }
    let cumulative = validate_start_dist(start_dist, model.n)?;
    let walks = exec::map_indexed_seq(count, |i| {
        generated_walk(model, walk_length, &cumulative, stream.rng(i as u64))
    });
    Ok(WalkBatch::from_walks(BatchRole::Negative, walks).expect("uniform length"))
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"FGCP";
const CHECKPOINT_VERSION: u32 = 1;

impl GeneratorModel {
    /// Versioned binary checkpoint: magic, version, header
    /// (n, dim, walk_length, heads, ff_width) as little-endian u32, then
    /// all parameter blocks as little-endian f32 in `params_flat` order.
    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<(), ModelError> {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(CHECKPOINT_MAGIC);
        for v in [
            CHECKPOINT_VERSION,
            self.n as u32,
            self.cfg.dim as u32,
            self.cfg.walk_length as u32,
            self.cfg.heads as u32,
            self.cfg.ff_width as u32,
        ] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        for v in self.params_flat() {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
        std::fs::write(path, bytes)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, ModelError> {
        let bytes = std::fs::read(path)?;
        if bytes.len() < 28 || &bytes[0..4] != CHECKPOINT_MAGIC {
            return Err(ModelError::BadCheckpoint("missing magic".into()));
        }
        let mut u32_at = |i: usize| {
            u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize
        };
        let version = u32_at(0);
        if version != CHECKPOINT_VERSION as usize {
            return Err(ModelError::BadCheckpoint(format!(
                "unsupported version {version}"
            )));
        }
        let n = u32_at(1);
        let cfg = GenModelConfig {
            dim: u32_at(2),
            walk_length: u32_at(3),
            heads: u32_at(4),
            ff_width: u32_at(5),
        };
        let mut model = GeneratorModel::zeroed(n, cfg)?;
        let expected = model.params_flat().len();
        let body = &bytes[28..];
        if body.len() != expected * 4 {
            return Err(ModelError::BadCheckpoint(format!(
                "expected {} parameter bytes, got {}",
                expected * 4,
                body.len()
            )));
        }
        let flat: Vec<f64> = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        model.set_params_flat(&flat);
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> GenModelConfig {
        GenModelConfig {
            dim: 8,
            heads: 2,
            ff_width: 16,
            walk_length: 4,
        }
    }

    fn random_table(n: usize, dim: usize, seed: u64) -> EmbeddingTable {
        let mut rng = SeedStream::new(seed, "table").rng(0);
        EmbeddingTable {
            vectors: Array2::from_shape_fn((n, dim), |_| rng.random::<f64>() - 0.5),
        }
    }

    fn walk(nodes: Vec<u32>) -> Walk {
        Walk {
            nodes,
            origin: WalkOrigin::UniformStart,
        }
    }

    #[test]
    fn zero_model_is_uniform() {
        let m = GeneratorModel::zeroed(7, small_cfg()).unwrap();
        let probs = m.next_node_distribution(&[3, 2]).unwrap();
        for &p in &probs {
            assert!((p - 1.0 / 7.0).abs() < 1e-12);
        }
    }

    #[test]
    fn distribution_is_normalized() {
        let table = random_table(9, 8, 1);
        let m = GeneratorModel::new(&table, small_cfg(), SeedStream::new(2, "gen")).unwrap();
        let probs = m.next_node_distribution(&[0, 4, 8]).unwrap();
        let total: f64 = probs.iter().sum();
        assert!((total - 1.0).abs() <= 1e-9);
        assert!(probs.iter().all(|&p| p >= 0.0));
    }

    #[test]
    fn prefix_bounds_enforced() {
        let m = GeneratorModel::zeroed(5, small_cfg()).unwrap();
        assert!(matches!(
            m.next_node_distribution(&[]),
            Err(ModelError::EmptyPrefix)
        ));
        assert!(matches!(
            m.next_node_distribution(&[0, 1, 2, 3]),
            Err(ModelError::PrefixTooLong { .. })
        ));
    }

    #[test]
    fn uniform_log_likelihood() {
        let cfg = GenModelConfig {
            dim: 8,
            heads: 2,
            ff_width: 16,
            walk_length: 2,
        };
        let m = GeneratorModel::zeroed(4, cfg).unwrap();
        let ll = m.walk_log_likelihood(&[1, 3]).unwrap();
        assert!((ll - 0.25f64.ln()).abs() < 1e-12);

        let m10 = GeneratorModel::zeroed(6, GenModelConfig { walk_length: 5, ..small_cfg() }).unwrap();
        let ll = m10.walk_log_likelihood(&[0, 1, 2, 3, 4]).unwrap();
        assert!((ll - 4.0 * (1.0f64 / 6.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn log_likelihood_matches_distribution_logs() {
        let table = random_table(6, 8, 3);
        let m = GeneratorModel::new(&table, small_cfg(), SeedStream::new(4, "gen")).unwrap();
        let nodes = [2u32, 5, 1, 4];
        let ll = m.walk_log_likelihood(&nodes).unwrap();
        let mut sum = 0.0;
        for t in 1..nodes.len() {
            let probs = m.next_node_distribution(&nodes[..t]).unwrap();
            sum += probs[nodes[t] as usize].ln();
        }
        assert!((ll - sum).abs() < 1e-10);
    }

    #[test]
    fn causal_prefix_consistency() {
        // The distribution after a prefix must not change when later
        // tokens are appended.
        let table = random_table(8, 8, 5);
        let m = GeneratorModel::new(&table, small_cfg(), SeedStream::new(6, "gen")).unwrap();
        let full = [1u32, 6, 3];
        let cache = m.forward(&full).unwrap();
        for t in 1..=full.len() {
            let probs = m.next_node_distribution(&full[..t]).unwrap();
            for (j, &p) in probs.iter().enumerate() {
                assert!(
                    (p - cache.logp[[t - 1, j]].exp()).abs() < 1e-12,
                    "prefix {t} entry {j}"
                );
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let table = random_table(10, 8, 7);
        let mut m = GeneratorModel::new(&table, small_cfg(), SeedStream::new(8, "gen")).unwrap();
        let pos = vec![walk(vec![0, 3, 7, 2]), walk(vec![5, 1, 9, 4])];
        let neg = vec![walk(vec![2, 2, 8, 6])];
        let mu = 0.1;
        let floor = -10.0;

        let mut grads = Grads::zeros(&m);
        for w in &pos {
            m.walk_backward(&w.nodes, 1.0 / pos.len() as f64, floor, &mut grads)
                .unwrap();
        }
        for w in &neg {
            m.walk_backward(&w.nodes, -mu / neg.len() as f64, floor, &mut grads)
                .unwrap();
        }
        let analytic: Vec<f64> = {
            let mut out = Vec::new();
            for a in [
                &grads.emb, &grads.pos, &grads.wq, &grads.wk, &grads.wv, &grads.wo, &grads.w1,
            ] {
                out.extend(a.iter().copied());
            }
            out.extend(grads.w2.iter().copied());
            out.extend(grads.b1.iter().copied());
            out.extend(grads.b2.iter().copied());
            out
        };
        // params_flat order: emb pos wq wk wv wo w1 w2 b1 b2
        let flat = m.params_flat();
        let step = 1e-5;
        let mut max_rel = 0.0f64;
        for idx in 0..flat.len() {
            let mut plus = flat.clone();
            plus[idx] += step;
            m.set_params_flat(&plus);
            let up = m.batch_objective(&pos, &neg, mu, floor).unwrap();
            let mut minus = flat.clone();
            minus[idx] -= step;
            m.set_params_flat(&minus);
            let down = m.batch_objective(&pos, &neg, mu, floor).unwrap();
            let numeric = (up - down) / (2.0 * step);
            let rel = (numeric - analytic[idx]).abs() / numeric.abs().max(analytic[idx].abs()).max(1e-8);
            max_rel = max_rel.max(rel);
        }
        m.set_params_flat(&flat);
        assert!(max_rel < 1e-4, "max relative gradient error {max_rel}");
    }

    fn cycle_batches(n: u32, t: usize, copies: usize) -> (WalkBatch, WalkBatch) {
        let mut pos = Vec::new();
        for c in 0..copies {
            let start = (c as u32) % n;
            let nodes: Vec<u32> = (0..t as u32).map(|i| (start + i) % n).collect();
            pos.push(walk(nodes));
        }
        let neg = vec![Walk {
            nodes: vec![0; t],
            origin: WalkOrigin::Generated,
        }];
        (
            WalkBatch::from_walks(BatchRole::Positive, pos).unwrap(),
            WalkBatch::from_walks(BatchRole::Negative, neg).unwrap(),
        )
    }

    #[test]
    fn training_is_deterministic() {
        let table = random_table(5, 8, 9);
        let cfg = GenTrainConfig {
            steps: 30,
            batch: 4,
            lr: 0.05,
            ..Default::default()
        };
        let (pos, neg) = cycle_batches(5, 4, 8);
        let mut m1 = GeneratorModel::new(&table, small_cfg(), SeedStream::new(10, "gen")).unwrap();
        let t1 = train_generator(&mut m1, &pos, &neg, &cfg, SeedStream::new(11, "train")).unwrap();
        let mut m2 = GeneratorModel::new(&table, small_cfg(), SeedStream::new(10, "gen")).unwrap();
        let t2 = train_generator(&mut m2, &pos, &neg, &cfg, SeedStream::new(11, "train")).unwrap();
        assert_eq!(t1, t2, "loss traces must be bitwise identical");
        assert_eq!(m1.params_flat(), m2.params_flat());
    }

    #[test]
    fn pure_mle_improves_likelihood() {
        let table = random_table(6, 8, 12);
        let mut m = GeneratorModel::new(&table, small_cfg(), SeedStream::new(13, "gen")).unwrap();
        let (pos, neg) = cycle_batches(6, 4, 12);
        let cfg = GenTrainConfig {
            neg_weight: 0.0,
            steps: 600,
            batch: 6,
            lr: 0.05,
            ..Default::default()
        };
        let trace = train_generator(&mut m, &pos, &neg, &cfg, SeedStream::new(14, "train")).unwrap();
        // Smoothed curve over 200-step windows must not rise.
        let window = 200;
        let means: Vec<f64> = trace
            .chunks(window)
            .map(|c| c.iter().sum::<f64>() / c.len() as f64)
            .collect();
        let drop = means.first().unwrap() - means.last().unwrap();
        assert!(drop > 0.0, "loss should decrease: {means:?}");
        for pair in means.windows(2) {
            assert!(
                pair[1] <= pair[0] + 0.05 * drop,
                "window means rose: {means:?}"
            );
        }
    }

    #[test]
    fn memorizes_single_walk() {
        let table = random_table(6, 8, 15);
        let mut m = GeneratorModel::new(
            &table,
            GenModelConfig {
                dim: 8,
                heads: 2,
                ff_width: 32,
                walk_length: 4,
            },
            SeedStream::new(16, "gen"),
        )
        .unwrap();
        let pos = WalkBatch::from_walks(BatchRole::Positive, vec![walk(vec![1, 4, 2, 5])]).unwrap();
        let neg = WalkBatch::from_walks(
            BatchRole::Negative,
            vec![Walk {
                nodes: vec![0, 0, 0, 0],
                origin: WalkOrigin::Generated,
            }],
        )
        .unwrap();
        let cfg = GenTrainConfig {
            neg_weight: 0.0,
            steps: 1500,
            batch: 1,
            lr: 0.1,
            ..Default::default()
        };
        train_generator(&mut m, &pos, &neg, &cfg, SeedStream::new(17, "train")).unwrap();
        let nats_per_token = -m.walk_log_likelihood(&[1, 4, 2, 5]).unwrap() / 3.0;
        assert!(nats_per_token < 0.1, "got {nats_per_token}");
    }

    #[test]
    fn fits_deterministic_cycle() {
        let table = random_table(3, 8, 18);
        let mut m = GeneratorModel::new(
            &table,
            GenModelConfig {
                dim: 8,
                heads: 2,
                ff_width: 32,
                walk_length: 4,
            },
            SeedStream::new(19, "gen"),
        )
        .unwrap();
        let (pos, neg) = cycle_batches(3, 4, 9);
        let cfg = GenTrainConfig {
            neg_weight: 0.0,
            steps: 1200,
            batch: 9,
            lr: 0.1,
            ..Default::default()
        };
        train_generator(&mut m, &pos, &neg, &cfg, SeedStream::new(20, "train")).unwrap();
        for start in 0..3u32 {
            let probs = m.next_node_distribution(&[start]).unwrap();
            let correct = ((start + 1) % 3) as usize;
            assert!(probs[correct] > 0.9, "start {start}: {probs:?}");
        }
    }

    #[test]
    fn generation_matches_full_forward() {
        let table = random_table(7, 8, 21);
        let m = GeneratorModel::new(&table, small_cfg(), SeedStream::new(22, "gen")).unwrap();
        let prefix = [4u32, 0, 6];
        let mut decoder = Decoder::new(&m);
        let mut probs = Vec::new();
        for &tok in &prefix {
            probs = decoder.push(tok);
        }
        let full = m.next_node_distribution(&prefix).unwrap();
        for (a, b) in probs.iter().zip(full.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn generation_counts_and_errors() {
        let m = GeneratorModel::zeroed(4, small_cfg()).unwrap();
        let dist = vec![0.25; 4];
        let empty = generate_walks(&m, 0, 4, &dist, SeedStream::new(0, "g")).unwrap();
        assert!(empty.is_empty());
        let batch = generate_walks(&m, 9, 4, &dist, SeedStream::new(0, "g")).unwrap();
        assert_eq!(batch.len(), 9);
        assert!(batch
            .walks()
            .iter()
            .all(|w| w.origin == WalkOrigin::Generated && w.nodes.len() == 4));
        assert!(matches!(
            generate_walks(&m, 1, 4, &[0.0; 4], SeedStream::new(0, "g")),
            Err(ModelError::BadStartDist(_))
        ));
        assert!(matches!(
            generate_walks(&m, 1, 4, &[0.5; 3], SeedStream::new(0, "g")),
            Err(ModelError::BadStartDist(_))
        ));
    }

    #[test]
    fn parallel_and_sequential_generation_agree() {
        let table = random_table(6, 8, 23);
        let m = GeneratorModel::new(&table, small_cfg(), SeedStream::new(24, "gen")).unwrap();
        let dist = vec![1.0; 6];
        let a = generate_walks(&m, 33, 4, &dist, SeedStream::new(25, "g")).unwrap();
        let b = generate_walks_seq(&m, 33, 4, &dist, SeedStream::new(25, "g")).unwrap();
        assert_eq!(a.walks(), b.walks());
    }

    #[test]
    fn checkpoint_roundtrip() {
        let table = random_table(9, 8, 26);
        let m = GeneratorModel::new(&table, small_cfg(), SeedStream::new(27, "gen")).unwrap();
        let tmp = tempfile::NamedTempFile::new().unwrap();
        m.save(tmp.path()).unwrap();
        let loaded = GeneratorModel::load(tmp.path()).unwrap();
        assert_eq!(loaded.n(), m.n());
        assert_eq!(loaded.config().dim, m.config().dim);
        let original = m.params_flat();
        let reloaded = loaded.params_flat();
        assert_eq!(original.len(), reloaded.len());
        for (a, b) in original.iter().zip(reloaded.iter()) {
            assert_eq!(*a as f32, *b as f32, "f32 quantization must be exact");
        }
        // Saving the loaded model reproduces the file byte for byte.
        let tmp2 = tempfile::NamedTempFile::new().unwrap();
        loaded.save(tmp2.path()).unwrap();
        assert_eq!(
            std::fs::read(tmp.path()).unwrap(),
            std::fs::read(tmp2.path()).unwrap()
        );
    }

    #[test]
    fn trained_clique_model_generates_clique_edges() {
        // Fit on walks inside one clique; consecutive generated pairs
        // should overwhelmingly be clique edges.
        use crate::graph::Graph;
        use crate::walk::{sample_context, SamplerConfig};
        let mut edges = Vec::new();
        for u in 0..6u32 {
            for v in (u + 1)..6 {
                edges.push((u, v));
            }
        }
        let g = Graph::from_edges(6, &edges).unwrap();
        let walks = sample_context(
            &g,
            None,
            &SamplerConfig {
                mix_ratio: 1.0,
                walk_length: 4,
                walks_per_batch: 60,
                ..Default::default()
            },
            SeedStream::new(28, "clique"),
        )
        .unwrap();
        let table = random_table(6, 8, 29);
        let mut m = GeneratorModel::new(
            &table,
            GenModelConfig {
                dim: 8,
                heads: 2,
                ff_width: 32,
                walk_length: 4,
            },
            SeedStream::new(30, "gen"),
        )
        .unwrap();
        let neg = WalkBatch::from_walks(
            BatchRole::Negative,
            vec![Walk {
                nodes: vec![0, 0, 0, 0],
                origin: WalkOrigin::Generated,
            }],
        )
        .unwrap();
        let cfg = GenTrainConfig {
            neg_weight: 0.0,
            steps: 800,
            batch: 32,
            lr: 0.05,
            ..Default::default()
        };
        train_generator(&mut m, &walks, &neg, &cfg, SeedStream::new(31, "train")).unwrap();
        let dist = vec![1.0; 6];
        let generated = generate_walks(&m, 2000, 4, &dist, SeedStream::new(32, "g")).unwrap();
        let mut total = 0usize;
        let mut real = 0usize;
        for w in generated.walks() {
            for pair in w.nodes.windows(2) {
                total += 1;
                if pair[0] != pair[1] && g.has_edge(pair[0], pair[1]) {
                    real += 1;
                }
            }
        }
        let frac = real as f64 / total as f64;
        assert!(frac >= 0.95, "edge fraction {frac}");
    }
}
