//! Joint embedding of one language's KG and grounded corpus.
//!
//! Entities are encoded by a stack of GCN layers over the undirected KG and
//! trained with a translational log-softmax loss. Tokens of the grounded
//! corpus are trained with a distance-based skip-gram loss; entity tokens share
//! the GCN output, so both objectives shape the same entity vectors.

mod config;
mod gcn;
mod io;
mod loss;
mod optim;
mod sampling;
mod train;

pub use config::{Activation, NegativeSampler, OptimizerConfig};
pub use gcn::{gcn_backward, gcn_forward, gcn_forward_cached, GcnCache};
pub use io::{entity_path, read_embeddings, relation_path, render_embeddings, write_embeddings, EmbeddingTable};
pub use loss::{kg_loss, text_loss, triple_score, KgSample, TextSample};
pub use optim::AmsGrad;
pub use sampling::{context_pairs, negative_triples, TokenSampler};
pub use train::{train, EpochLoss, StepKind, Trainer};

use ndarray::Array2;
use rand::Rng;

use crate::error::{Error, Result};
use crate::grounding::Token;
use crate::kg::GraphStructure;

/// Trainable tables of one language plus the materialized entity outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSpace {
    pub dim: usize,
    /// Input features `E^(0)`, one row per KG entity.
    pub entity_base: Array2<f64>,
    pub relations: Array2<f64>,
    /// Lexemes that are not entities, in lexicon order.
    pub lexemes: Array2<f64>,
    pub gcn_weights: Vec<Array2<f64>>,
    pub activation: Activation,
    pub gcn_enabled: bool,
    /// Final entity representations (`E^(n)`, or `E^(0)` without the GCN).
    pub entity_output: Array2<f64>,
}

fn xavier(rows: usize, cols: usize, rng: &mut impl Rng) -> Array2<f64> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..bound))
}

impl EmbeddingSpace {
    /// Xavier-uniform initialization of every trainable table.
    pub fn init(
        n_entities: usize,
        n_relations: usize,
        n_lexemes: usize,
        cfg: &OptimizerConfig,
        rng: &mut impl Rng,
    ) -> Self {
        let k = cfg.dim;
        let entity_base = xavier(n_entities, k, rng);
        let relations = xavier(n_relations, k, rng);
        let lexemes = xavier(n_lexemes, k, rng);
        let layers = if cfg.gcn_enabled { cfg.gcn_layers } else { 0 };
        let gcn_weights = (0..layers).map(|_| xavier(k, k, rng)).collect();
        let entity_output = entity_base.clone();
        EmbeddingSpace {
            dim: k,
            entity_base,
            relations,
            lexemes,
            gcn_weights,
            activation: cfg.activation,
            gcn_enabled: cfg.gcn_enabled,
            entity_output,
        }
    }

    pub fn n_entities(&self) -> usize {
        self.entity_base.nrows()
    }

    /// Recomputes `entity_output` from the current parameters.
    pub fn refresh_output(&mut self, graph: &GraphStructure) -> Result<()> {
        self.entity_output = if self.gcn_enabled {
            gcn_forward(self, graph)?
        } else {
            self.entity_base.clone()
        };
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        let all = |a: &Array2<f64>| a.iter().all(|v| v.is_finite());
        all(&self.entity_base)
            && all(&self.relations)
            && all(&self.lexemes)
            && self.gcn_weights.iter().all(all)
            && all(&self.entity_output)
    }

    pub(crate) fn check_token(&self, tok: Token) -> Result<()> {
        let ok = match tok {
            Token::Entity(e) => e < self.n_entities(),
            Token::Lexeme(w) => w < self.lexemes.nrows(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Input(format!("token {tok:?} outside the embedding tables")))
        }
    }
}

/// Gradients with the same layout as [`EmbeddingSpace`]'s trainables.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub entity_base: Array2<f64>,
    pub relations: Array2<f64>,
    pub lexemes: Array2<f64>,
    pub gcn_weights: Vec<Array2<f64>>,
}

impl Gradients {
    pub fn zeros_like(space: &EmbeddingSpace) -> Self {
        Gradients {
            entity_base: Array2::zeros(space.entity_base.raw_dim()),
            relations: Array2::zeros(space.relations.raw_dim()),
            lexemes: Array2::zeros(space.lexemes.raw_dim()),
            gcn_weights: space
                .gcn_weights
                .iter()
                .map(|w| Array2::zeros(w.raw_dim()))
                .collect(),
        }
    }
}
