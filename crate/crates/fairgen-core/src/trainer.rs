//! The full training loop: initialize the discriminator and selection
//! vectors from the labeled nodes, sample initial positive and negative
//! walk pools, then run self-paced cycles that alternately train the
//! sequence model on the pools, refresh the pools (new context walks as
//! positives, generated walks as negatives), raise the selection
//! threshold, propagate pseudo-labels, and take discriminator steps.

use rand::Rng;
use thiserror::Error;

use crate::assembler::{accumulate_scores, AssembleError, ScoreMatrix};
use crate::embedding::{pretrain_embeddings, EmbedConfig, EmbedError, EmbeddingTable};
use crate::fair::{
    fairness_loss, label_prop_loss, parity_terms, prediction_loss, pseudo_labels,
    train_discriminator_step, update_self_paced, Discriminator, FairError, FairLossWeights,
    SelfPacedState,
};
use crate::generator::{
    generate_walks, train_generator, GenModelConfig, GenTrainConfig, GeneratorModel, ModelError,
};
use crate::graph::{Graph, GraphError, GroupMembership, LabelSet};
use crate::rng::SeedStream;
use crate::walk::{sample_context, BatchRole, SampleError, SamplerConfig, Walk, WalkBatch, WalkOrigin};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid run config: {0}")]
    Config(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("cycle {cycle}: {source}")]
    Sample {
        cycle: usize,
        #[source]
        source: SampleError,
    },
    #[error("cycle {cycle}: {source}")]
    Model {
        cycle: usize,
        #[source]
        source: ModelError,
    },
    #[error("cycle {cycle}: {source}")]
    Fair {
        cycle: usize,
        #[source]
        source: FairError,
    },
    #[error(transparent)]
    Assemble(#[from] AssembleError),
}

/// Every knob of a training run. Paper-reported defaults where they
/// exist; the rest are exposed, documented choices.
#[derive(Clone, Debug)]
pub struct TrainRunConfig {
    pub seed: u64,
    pub sampler: SamplerConfig,
    pub embed: EmbedConfig,
    pub heads: usize,
    /// Feed-forward width; `None` resolves to twice the embedding dim.
    pub ff_width: Option<usize>,
    pub gen_lr: f64,
    pub gen_batch: usize,
    pub neg_weight: f64,
    pub neg_floor: f64,
    /// Generator passes over the pool per cycle.
    pub epochs: usize,
    pub weights: FairLossWeights,
    pub hidden_dim: usize,
    pub disc_lr: f64,
    /// Discriminator batch size N1.
    pub batch_size: usize,
    /// Discriminator iterations T1 per cycle.
    pub disc_iters: usize,
    /// Self-paced cycles p.
    pub cycles: usize,
    pub lambda0: f64,
    pub lambda_growth: f64,
    pub pool_cap: usize,
    /// Generated transitions per original edge when synthesizing scores.
    pub gen_volume_factor: f64,
    pub assemble_tol: f64,
    /// Walk cap for the per-cycle objective evaluation.
    pub objective_eval_cap: usize,
    /// Ablation: force the mix ratio to 1 (uniform starts only).
    pub uniform_sampling: bool,
    /// Ablation: keep selection vectors fixed to the ground truth.
    pub no_self_paced: bool,
    /// Ablation: drop the parity regularizer.
    pub no_parity: bool,
    /// Initial negatives as shuffled real walks instead of unigram draws.
    pub neg_init_shuffled: bool,
    pub allow_isolated: bool,
}

impl Default for TrainRunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            sampler: SamplerConfig::default(),
            embed: EmbedConfig::default(),
            heads: 4,
            ff_width: None,
            gen_lr: 0.01,
            gen_batch: 128,
            neg_weight: 0.1,
            neg_floor: -10.0,
            epochs: 20,
            weights: FairLossWeights::default(),
            hidden_dim: 64,
            disc_lr: 0.01,
            batch_size: 128,
            disc_iters: 3,
            cycles: 10,
            lambda0: 0.105,
            lambda_growth: 1.5,
            pool_cap: 200_000,
            gen_volume_factor: 20.0,
            assemble_tol: 0.1,
            objective_eval_cap: 2000,
            uniform_sampling: false,
            no_self_paced: false,
            no_parity: false,
            neg_init_shuffled: false,
            allow_isolated: false,
        }
    }
}

impl TrainRunConfig {
    pub fn resolved_ff_width(&self) -> usize {
        self.ff_width.unwrap_or(2 * self.embed.dim)
    }

    pub fn model_config(&self) -> GenModelConfig {
        GenModelConfig {
            dim: self.embed.dim,
            heads: self.heads,
            ff_width: self.resolved_ff_width(),
            walk_length: self.sampler.walk_length,
        }
    }

    /// Sampler with ablations applied.
    pub fn effective_sampler(&self) -> SamplerConfig {
        let mut s = self.sampler.clone();
        if self.uniform_sampling {
            s.mix_ratio = 1.0;
        }
        s
    }

    pub fn effective_weights(&self) -> FairLossWeights {
        let mut w = self.weights;
        if self.no_parity {
            w.gamma = 0.0;
        }
        w
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        self.sampler
            .validate()
            .map_err(|e| TrainError::Config(e.to_string()))?;
        self.model_config()
            .validate()
            .map_err(|e| TrainError::Config(e.to_string()))?;
        if self.cycles == 0 {
            return Err(TrainError::Config("cycles must be at least 1".into()));
        }
        if self.batch_size == 0 || self.gen_batch == 0 {
            return Err(TrainError::Config("batch sizes must be at least 1".into()));
        }
        if self.sampler.walks_per_batch == 0 {
            return Err(TrainError::Config("walks_per_batch must be at least 1".into()));
        }
        if !(self.lambda0 > 0.0) || !(self.lambda_growth > 1.0) {
            return Err(TrainError::Config(
                "lambda0 must be positive and lambda_growth above 1".into(),
            ));
        }
        if self.gen_volume_factor <= 0.0 {
            return Err(TrainError::Config("gen_volume_factor must be positive".into()));
        }
        Ok(())
    }
}

/// Per-cycle values of the five objective terms and their sum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CycleObjectives {
    pub cycle: usize,
    pub generator: f64,
    pub prediction: f64,
    pub fairness: f64,
    pub label_prop: f64,
    pub self_paced: f64,
    pub total: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CycleStats {
    pub cycle: usize,
    pub lambda: f64,
    pub selected: usize,
    pub pseudo: usize,
    pub pool_pos: usize,
    pub pool_neg: usize,
}

/// One pseudo-label audit entry: "node<TAB>class<TAB>confidence<TAB>cycle".
#[derive(Clone, Debug, PartialEq)]
pub struct AuditRow {
    pub node: u32,
    pub class: usize,
    pub confidence: f64,
    pub cycle: usize,
}

pub struct RunArtifacts {
    pub embeddings: EmbeddingTable,
    pub unvisited: Vec<u32>,
    pub generator: GeneratorModel,
    pub discriminator: Discriminator,
    pub self_paced: SelfPacedState,
    pub final_labels: LabelSet,
    pub objectives: Vec<CycleObjectives>,
    pub cycle_stats: Vec<CycleStats>,
    pub gen_loss: Vec<Vec<f64>>,
    pub disc_loss: Vec<Vec<f64>>,
    pub audit: Vec<AuditRow>,
    /// Empirical start-node distribution of the final positive pool.
    pub start_dist: Vec<f64>,
}

fn empirical_start_dist(pool: &WalkBatch, n: usize) -> Vec<f64> {
    let mut dist = vec![0.0; n];
    for walk in pool.walks() {
        dist[walk.nodes[0] as usize] += 1.0;
    }
    dist
}

fn unigram_negatives(
    pool: &WalkBatch,
    n: usize,
    count: usize,
    walk_length: usize,
    stream: SeedStream,
) -> WalkBatch {
    let mut freq = vec![0u64; n];
    for walk in pool.walks() {
        for &node in &walk.nodes {
            freq[node as usize] += 1;
        }
    }
    let mut cumulative = Vec::with_capacity(n);
    let mut nodes = Vec::with_capacity(n);
    let mut acc = 0.0;
    for (u, &c) in freq.iter().enumerate() {
        if c > 0 {
            acc += (c as f64).powf(0.75);
            nodes.push(u as u32);
            cumulative.push(acc);
        }
    }
    let walks: Vec<Walk> = (0..count)
        .map(|i| {
            let mut rng = stream.rng(i as u64);
            let nodes: Vec<u32> = (0..walk_length)
                .map(|_| {
                    let u = rng.random::<f64>() * acc;
                    let idx = cumulative.partition_point(|&c| c <= u).min(nodes.len() - 1);
                    nodes[idx]
                })
                .collect();
            Walk {
                nodes,
                origin: WalkOrigin::Generated,
            }
        })
        .collect();
    WalkBatch::from_walks(BatchRole::Negative, walks).expect("uniform length")
}

fn shuffled_negatives(pool: &WalkBatch, count: usize, stream: SeedStream) -> WalkBatch {
    let walks: Vec<Walk> = (0..count)
        .map(|i| {
            let mut rng = stream.rng(i as u64);
            let src = &pool.walks()[rng.random_range(0..pool.len())];
            let mut nodes = src.nodes.clone();
            for i in (1..nodes.len()).rev() {
                let j = rng.random_range(0..=i);
                nodes.swap(i, j);
            }
            Walk {
                nodes,
                origin: WalkOrigin::Generated,
            }
        })
        .collect();
    WalkBatch::from_walks(BatchRole::Negative, walks).expect("uniform length")
}

fn gen_steps(pool_len: usize, cfg: &TrainRunConfig) -> usize {
    cfg.epochs * pool_len.div_ceil(cfg.gen_batch)
}

fn disc_batch(labels: &LabelSet, size: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<u32> {
    let mut nodes = labels.nodes();
    if nodes.len() <= size {
        return nodes;
    }
    for i in 0..size {
        let j = rng.random_range(i..nodes.len());
        nodes.swap(i, j);
    }
    nodes.truncate(size);
    nodes
}

/// Runs the full loop. All randomness is derived from `cfg.seed` via
/// stage-keyed streams, so reruns are bit-identical.
pub fn run(
    g: &Graph,
    labels: &LabelSet,
    groups: &GroupMembership,
    cfg: &TrainRunConfig,
) -> Result<RunArtifacts, TrainError> {
    cfg.validate()?;
    labels.validate_for(g)?;
    labels.require_full_class_coverage()?;
    if labels.is_empty() {
        return Err(TrainError::Config("at least one labeled node is required".into()));
    }
    if groups.protected().is_empty() || groups.unprotected().is_empty() {
        return Err(TrainError::Config(
            "both protected and unprotected groups must be non-empty".into(),
        ));
    }
    let classes = labels.classes();
    let sampler = cfg.effective_sampler();
    let weights = cfg.effective_weights();
    let walk_length = sampler.walk_length;
    let k = sampler.walks_per_batch;

    // Initial pools.
    let fs_stream = SeedStream::new(cfg.seed, "context-sample");
    let mut pos_pool = sample_context(g, Some(labels), &sampler, fs_stream.with(0))
        .map_err(|source| TrainError::Sample { cycle: 0, source })?;
    let mut neg_pool = if cfg.neg_init_shuffled {
        shuffled_negatives(&pos_pool, k, SeedStream::new(cfg.seed, "negative-init"))
    } else {
        unigram_negatives(
            &pos_pool,
            g.n(),
            k,
            walk_length,
            SeedStream::new(cfg.seed, "negative-init"),
        )
    };

    // Node features and models.
    let pretrain = pretrain_embeddings(
        g.n(),
        &pos_pool,
        &cfg.embed,
        SeedStream::new(cfg.seed, "embed"),
    )?;
    let embeddings = pretrain.table;
    let mut generator = GeneratorModel::new(
        &embeddings,
        cfg.model_config(),
        SeedStream::new(cfg.seed, "generator-init"),
    )
    .map_err(|source| TrainError::Model { cycle: 0, source })?;
    let mut discriminator = Discriminator::new(
        cfg.embed.dim,
        cfg.hidden_dim,
        classes,
        SeedStream::new(cfg.seed, "discriminator-init"),
    );
    let mut sp = SelfPacedState::init(g.n(), classes, labels, cfg.lambda0, cfg.lambda_growth)
        .map_err(|source| TrainError::Fair { cycle: 0, source })?;
    let mut current_labels = labels.clone();

    let mut objectives = Vec::with_capacity(cfg.cycles);
    let mut cycle_stats = Vec::with_capacity(cfg.cycles);
    let mut gen_loss = Vec::with_capacity(cfg.cycles);
    let mut disc_loss = Vec::with_capacity(cfg.cycles);
    let mut audit = Vec::new();

    for cycle in 1..=cfg.cycles {
        // Train the generator on the accumulated pools.
        let gen_cfg = GenTrainConfig {
            neg_weight: cfg.neg_weight,
            neg_floor: cfg.neg_floor,
            steps: gen_steps(pos_pool.len(), cfg),
            batch: cfg.gen_batch,
            lr: cfg.gen_lr,
        };
        let trace = train_generator(
            &mut generator,
            &pos_pool,
            &neg_pool,
            &gen_cfg,
            SeedStream::new(cfg.seed, "generator-train").with(cycle as u64),
        )
        .map_err(|source| TrainError::Model { cycle, source })?;
        gen_loss.push(trace);

        // New positives via the context sampler (labels include any
        // pseudo-labels from the previous cycle's selection).
        let new_pos = sample_context(
            g,
            Some(&current_labels),
            &sampler,
            fs_stream.with(cycle as u64),
        )
        .map_err(|source| TrainError::Sample { cycle, source })?;
        pos_pool
            .extend(new_pos.walks().to_vec())
            .map_err(|source| TrainError::Sample { cycle, source })?;
        pos_pool.truncate_front(cfg.pool_cap);

        // New negatives from the current generator.
        let start_dist = empirical_start_dist(&pos_pool, g.n());
        let generated = generate_walks(
            &generator,
            k,
            walk_length,
            &start_dist,
            SeedStream::new(cfg.seed, "generator-sample").with(cycle as u64),
        )
        .map_err(|source| TrainError::Model { cycle, source })?;
        neg_pool
            .extend(generated.walks().to_vec())
            .map_err(|source| TrainError::Sample { cycle, source })?;
        neg_pool.truncate_front(cfg.pool_cap);

        // Raise the threshold, refresh selections and pseudo-labels.
        sp.augment_lambda();
        let mut pseudo_count = 0usize;
        if !cfg.no_self_paced {
            sp = update_self_paced(&discriminator, &embeddings, &sp);
            let pseudo = pseudo_labels(&sp);
            pseudo_count = pseudo.len();
            for p in &pseudo {
                audit.push(AuditRow {
                    node: p.node,
                    class: p.class,
                    confidence: p.confidence,
                    cycle,
                });
            }
            let pairs: Vec<(u32, usize)> = pseudo.iter().map(|p| (p.node, p.class)).collect();
            current_labels = labels.extended(&pairs);
        }

        // Discriminator steps on batches of labeled/pseudo-labeled nodes.
        let batch_stream = SeedStream::new(cfg.seed, "discriminator-batch").with(cycle as u64);
        let mut cycle_disc_loss = Vec::with_capacity(cfg.disc_iters);
        for iter in 0..cfg.disc_iters {
            let mut rng = batch_stream.rng(iter as u64);
            let batch = disc_batch(&current_labels, cfg.batch_size, &mut rng);
            let loss = train_discriminator_step(
                &mut discriminator,
                &embeddings,
                &current_labels,
                groups,
                &sp,
                &weights,
                &batch,
                cfg.disc_lr,
            )
            .map_err(|source| TrainError::Fair { cycle, source })?;
            cycle_disc_loss.push(loss);
        }
        disc_loss.push(cycle_disc_loss);

        // Objective report for this cycle.
        let eval_walks = pos_pool.walks().len().min(cfg.objective_eval_cap);
        let mut j_g = 0.0;
        for walk in &pos_pool.walks()[..eval_walks] {
            j_g -= generator
                .walk_log_likelihood(&walk.nodes)
                .map_err(|source| TrainError::Model { cycle, source })?;
        }
        j_g /= eval_walks as f64;
        let j_p = prediction_loss(
            &discriminator,
            &embeddings,
            &current_labels,
            groups,
            weights.alpha,
        )
        .map_err(|source| TrainError::Fair { cycle, source })?;
        let (m_plus, m_minus) = parity_terms(&discriminator, &embeddings, groups)
            .map_err(|source| TrainError::Fair { cycle, source })?;
        let j_f = fairness_loss(&m_plus, &m_minus, weights.gamma);
        let j_l = label_prop_loss(&discriminator, &embeddings, &sp, weights.beta);
        let j_s = -sp.lambda() * sp.selected_count() as f64;
        objectives.push(CycleObjectives {
            cycle,
            generator: j_g,
            prediction: j_p,
            fairness: j_f,
            label_prop: j_l,
            self_paced: j_s,
            total: j_g + j_p + j_f + j_l + j_s,
        });
        cycle_stats.push(CycleStats {
            cycle,
            lambda: sp.lambda(),
            selected: sp.selected_count(),
            pseudo: pseudo_count,
            pool_pos: pos_pool.len(),
            pool_neg: neg_pool.len(),
        });
    }

    let start_dist = empirical_start_dist(&pos_pool, g.n());
    Ok(RunArtifacts {
        embeddings,
        unvisited: pretrain.unvisited,
        generator,
        discriminator,
        self_paced: sp,
        final_labels: current_labels,
        objectives,
        cycle_stats,
        gen_loss,
        disc_loss,
        audit,
        start_dist,
    })
}

/// The generator-only path: identical pools, streams, and updates, with
/// the fair learner removed. With the uniform-sampling and
/// no-self-paced ablations on (and the parity weight zeroed), [`run`]
/// produces exactly this model.
pub fn generator_only_run(g: &Graph, cfg: &TrainRunConfig) -> Result<GeneratorModel, TrainError> {
    cfg.validate()?;
    let mut sampler = cfg.effective_sampler();
    sampler.mix_ratio = 1.0;
    let walk_length = sampler.walk_length;
    let k = sampler.walks_per_batch;

    let fs_stream = SeedStream::new(cfg.seed, "context-sample");
    let mut pos_pool = sample_context(g, None, &sampler, fs_stream.with(0))
        .map_err(|source| TrainError::Sample { cycle: 0, source })?;
    let mut neg_pool = if cfg.neg_init_shuffled {
        shuffled_negatives(&pos_pool, k, SeedStream::new(cfg.seed, "negative-init"))
    } else {
        unigram_negatives(
            &pos_pool,
            g.n(),
            k,
            walk_length,
            SeedStream::new(cfg.seed, "negative-init"),
        )
    };
    let pretrain = pretrain_embeddings(
        g.n(),
        &pos_pool,
        &cfg.embed,
        SeedStream::new(cfg.seed, "embed"),
    )?;
    let mut generator = GeneratorModel::new(
        &pretrain.table,
        cfg.model_config(),
        SeedStream::new(cfg.seed, "generator-init"),
    )
    .map_err(|source| TrainError::Model { cycle: 0, source })?;

    for cycle in 1..=cfg.cycles {
        let gen_cfg = GenTrainConfig {
            neg_weight: cfg.neg_weight,
            neg_floor: cfg.neg_floor,
            steps: gen_steps(pos_pool.len(), cfg),
            batch: cfg.gen_batch,
            lr: cfg.gen_lr,
        };
        train_generator(
            &mut generator,
            &pos_pool,
            &neg_pool,
            &gen_cfg,
            SeedStream::new(cfg.seed, "generator-train").with(cycle as u64),
        )
        .map_err(|source| TrainError::Model { cycle, source })?;
        let new_pos = sample_context(g, None, &sampler, fs_stream.with(cycle as u64))
            .map_err(|source| TrainError::Sample { cycle, source })?;
        pos_pool
            .extend(new_pos.walks().to_vec())
            .map_err(|source| TrainError::Sample { cycle, source })?;
        pos_pool.truncate_front(cfg.pool_cap);
        let start_dist = empirical_start_dist(&pos_pool, g.n());
        let generated = generate_walks(
            &generator,
            k,
            walk_length,
            &start_dist,
            SeedStream::new(cfg.seed, "generator-sample").with(cycle as u64),
        )
        .map_err(|source| TrainError::Model { cycle, source })?;
        neg_pool
            .extend(generated.walks().to_vec())
            .map_err(|source| TrainError::Sample { cycle, source })?;
        neg_pool.truncate_front(cfg.pool_cap);
    }
    Ok(generator)
}

/// Generates `gen_volume_factor * m` walk transitions from the trained
/// model and accumulates them into a score matrix.
pub fn synthesize_scores(
    g: &Graph,
    artifacts: &RunArtifacts,
    cfg: &TrainRunConfig,
) -> Result<ScoreMatrix, TrainError> {
    let transitions = (cfg.gen_volume_factor * g.m() as f64).ceil() as usize;
    let per_walk = cfg.sampler.walk_length - 1;
    let count = transitions.div_ceil(per_walk);
    let batch = generate_walks(
        &artifacts.generator,
        count,
        cfg.sampler.walk_length,
        &artifacts.start_dist,
        SeedStream::new(cfg.seed, "assembly-generate"),
    )
    .map_err(|source| TrainError::Model { cycle: cfg.cycles, source })?;
    Ok(accumulate_scores(g.n(), &batch)?)
}

/// CSV with one row per cycle: the five objective terms and their sum.
pub fn objectives_csv(rows: &[CycleObjectives]) -> String {
    let mut out = String::from("cycle,j_g,j_p,j_f,j_l,j_s,j_total\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.cycle, r.generator, r.prediction, r.fairness, r.label_prop, r.self_paced, r.total
        ));
    }
    out
}

/// Pseudo-label audit in "node<TAB>class<TAB>confidence<TAB>cycle" form,
/// with nodes as external ids.
pub fn audit_tsv(rows: &[AuditRow], g: &Graph) -> String {
    let mut out = String::new();
    for r in rows {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            g.external_id(r.node),
            r.class,
            r.confidence,
            r.cycle
        ));
    }
    out
}
