//! Knowledge-graph embedding models: score functions with analytic
//! gradients, negative sampling, and the self-adversarial loss.

mod loss;
mod sampling;
mod score;

pub use loss::{
    adversarial_weights, batch_grad, log_sigmoid, loss, loss_with_weights, triple_grad, TripleExample,
};
pub use sampling::{sample_negatives, CorruptionMode, CorruptionSide, NegativeBatch, NegativePool};
pub use score::{accumulate_score_grad, score};

use crate::embedding::{EmbeddingMatrix, RowInit};
use crate::kg::Labels;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Norm {
    L1,
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    TransE { norm: Norm },
    DistMult,
    /// Rows hold `dim / 2` complex numbers, real and imaginary parts interleaved.
    ComplEx,
    /// Entity rows as in ComplEx; relation rows hold `dim / 2` phase angles.
    RotatE,
}

impl ModelKind {
    pub const TRANSE: ModelKind = ModelKind::TransE { norm: Norm::L2 };

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::TransE { .. } => "transe",
            ModelKind::DistMult => "distmult",
            ModelKind::ComplEx => "complex",
            ModelKind::RotatE => "rotate",
        }
    }

    /// Distance-based models score with a negated norm, so scores are ≤ 0.
    pub fn is_distance(self) -> bool {
        matches!(self, ModelKind::TransE { .. } | ModelKind::RotatE)
    }

    pub fn relation_dim(self, entity_dim: usize) -> usize {
        match self {
            ModelKind::RotatE => entity_dim / 2,
            _ => entity_dim,
        }
    }

    pub fn validate_dim(self, entity_dim: usize) -> Result<()> {
        if entity_dim == 0 {
            return Err(Error::config("embedding dimension must be positive"));
        }
        if matches!(self, ModelKind::ComplEx | ModelKind::RotatE) && !entity_dim.is_multiple_of(2) {
            return Err(Error::config(format!(
                "{} needs an even embedding dimension, got {entity_dim}",
                self.name()
            )));
        }
        Ok(())
    }
}

/// How the margin enters the logistic loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum MarginMode {
    /// Positive logit `f - γ` for bilinear models and `γ + f` for
    /// distance-based models, whose scores are never positive.
    #[default]
    Auto,
    /// Positive logit `f - γ` for every model.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainHyper {
    pub gamma: f64,
    pub alpha: f64,
    pub negatives: usize,
    pub dim: usize,
    pub corruption: CorruptionMode,
    /// Reject negatives that are known training triples, not only the
    /// positive itself.
    pub strict_negatives: bool,
    pub margin: MarginMode,
}

impl Default for TrainHyper {
    fn default() -> Self {
        TrainHyper {
            gamma: 10.0,
            alpha: 1.0,
            negatives: 256,
            dim: 256,
            corruption: CorruptionMode::Alternate,
            strict_negatives: false,
            margin: MarginMode::Auto,
        }
    }
}

impl TrainHyper {
    /// Logit of a triple with score `f` inside the logistic loss.
    pub fn logit(&self, kind: ModelKind, f: f64) -> f64 {
        match (self.margin, kind.is_distance()) {
            (MarginMode::Auto, true) => self.gamma + f,
            _ => f - self.gamma,
        }
    }
}

/// Entity and relation embeddings of one model instance.
#[derive(Debug, Clone, PartialEq)]
pub struct KgeModel {
    pub kind: ModelKind,
    pub entities: EmbeddingMatrix,
    pub relations: EmbeddingMatrix,
}

impl KgeModel {
    /// Initial entity bound is `0.5 / sqrt(dim)`; RotatE phases are uniform
    /// on the circle. Each row is keyed by its label and the seed.
    pub fn init(kind: ModelKind, entities: &Labels, relations: &Labels, dim: usize, seed: u64) -> Self {
        KgeModel {
            kind,
            entities: init_entities(entities.iter(), dim, seed),
            relations: init_relations(kind, relations.iter(), dim, seed),
        }
    }

    pub fn score(&self, head: u32, relation: u32, tail: u32) -> f64 {
        score(
            self.kind,
            self.entities.row(head as usize),
            self.relations.row(relation as usize),
            self.entities.row(tail as usize),
        )
    }
}

pub fn entity_bound(dim: usize) -> f64 {
    0.5 / (dim as f64).sqrt()
}

pub fn init_entities<'a>(labels: impl IntoIterator<Item = &'a str>, dim: usize, seed: u64) -> EmbeddingMatrix {
    EmbeddingMatrix::init_keyed(labels, dim, seed, "entity", RowInit::Uniform(entity_bound(dim)))
}

pub fn init_relations<'a>(
    kind: ModelKind,
    labels: impl IntoIterator<Item = &'a str>,
    dim: usize,
    seed: u64,
) -> EmbeddingMatrix {
    let init = match kind {
        ModelKind::RotatE => RowInit::Phase,
        _ => RowInit::Uniform(entity_bound(dim)),
    };
    EmbeddingMatrix::init_keyed(labels, kind.relation_dim(dim), seed, "relation", init)
}
