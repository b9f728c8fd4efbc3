//! Fairness-aware graph generation toolkit.
//!
//! The pipeline models an undirected graph through lazy random walks,
//! trains a small autoregressive sequence model on label-informed walk
//! context, propagates labels under a self-paced schedule with a
//! statistical-parity regularizer, and assembles a synthetic graph from
//! generated walk transitions while protecting the volume of a designated
//! node group. A nine-statistic evaluation harness measures overall and
//! protected-group discrepancy between the input and the output graph.

/// Graph representation, group and label bookkeeping, subgraph extraction.
pub mod graph;

/// Lazy-walk transition matrix and sparse matrix-vector products.
pub mod transition;

/// Biased second-order walks and the label-informed context sampler.
pub mod walk;

/// Escape probabilities, diffusion cores, and the walk-containment bound.
pub mod diffusion;

/// Skip-gram embedding pretraining over walk corpora.
pub mod embedding;

/// Autoregressive next-node sequence model trained contrastively.
pub mod generator;

/// Discriminator, cost-sensitive and parity losses, self-paced updates.
pub mod fair;

/// The full training loop coupling sampler, generator, and fair learner.
pub mod trainer;

/// Score-matrix accumulation, fair thresholding, edge augmentation.
pub mod assembler;

/// Graph statistics, discrepancy measures, and baseline generators.
pub mod metrics;

/// File formats: edge lists, labels, groups, walks, score triples.
pub mod io;

/// Flat key=value run configuration.
pub mod config;

/// Deterministic RNG streams derived from a single run seed.
pub mod rng;

pub(crate) mod exec;

pub use graph::{Graph, GroupMembership, LabelSet};
pub use io::load_edge_list;
pub use rng::SeedStream;
