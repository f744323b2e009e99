//! Per-client fusion of two scorers of the same client (one trained alone,
//! one trained in the federation) through a linear combiner of their scores,
//! fitted with a margin ranking loss.

use rand::Rng;
use rayon::prelude::*;

use crate::eval::TripleScorer;
use crate::kg::{SplitKind, Triple};
use crate::rng::SeededRng;
use crate::{Error, Result};

/// `s = w[0] * f_single + w[1] * f_fed + bias`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionModel {
    pub weights: [f64; 2],
    pub bias: f64,
}

impl Default for FusionModel {
    fn default() -> Self {
        FusionModel {
            weights: [0.5, 0.5],
            bias: 0.0,
        }
    }
}

impl FusionModel {
    /// Keeps only one component: 0 for the single scorer, 1 for the federated one.
    pub fn basis(component: usize) -> Self {
        let mut weights = [0.0; 2];
        weights[component] = 1.0;
        FusionModel { weights, bias: 0.0 }
    }

    pub fn combine(&self, features: [f64; 2]) -> f64 {
        self.weights[0] * features[0] + self.weights[1] * features[1] + self.bias
    }
}

pub fn fused_score<A: TripleScorer + ?Sized, B: TripleScorer + ?Sized>(
    model: &FusionModel,
    single: &A,
    fed: &B,
    t: Triple,
) -> f64 {
    model.combine(features(single, fed, t))
}

fn features<A: TripleScorer + ?Sized, B: TripleScorer + ?Sized>(single: &A, fed: &B, t: Triple) -> [f64; 2] {
    [
        single.score(t.head, t.relation, t.tail),
        fed.score(t.head, t.relation, t.tail),
    ]
}

/// The fused model as a scorer, for ranking.
pub struct FusedScorer<'a, A: ?Sized, B: ?Sized> {
    pub model: FusionModel,
    pub single: &'a A,
    pub fed: &'a B,
}

impl<A: TripleScorer + ?Sized, B: TripleScorer + ?Sized> TripleScorer for FusedScorer<'_, A, B> {
    fn score(&self, head: u32, relation: u32, tail: u32) -> f64 {
        fused_score(&self.model, self.single, self.fed, Triple::new(head, relation, tail))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionConfig {
    pub margin: f64,
    /// Corrupted triples per positive.
    pub negatives: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Split whose triples the combiner is fitted on.
    pub fit_split: SplitKind,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            margin: 10.0,
            negatives: 1,
            epochs: 100,
            lr: 0.01,
            batch_size: 128,
            fit_split: SplitKind::Valid,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.margin.is_nan() || self.margin <= 0.0 {
            return Err(Error::config(format!("fusion margin must be positive, got {}", self.margin)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config(format!("fusion learning rate must be positive, got {}", self.lr)));
        }
        if self.negatives == 0 || self.batch_size == 0 {
            return Err(Error::config("fusion negatives and batch size must be positive"));
        }
        Ok(())
    }
}

/// Hinge loss of one positive/negative feature pair and its gradient with
/// respect to the weights. The bias cancels in the difference, so its
/// gradient is always zero.
pub fn pair_loss(model: &FusionModel, positive: [f64; 2], negative: [f64; 2], margin: f64) -> (f64, [f64; 2]) {
    let loss = margin - model.combine(positive) + model.combine(negative);
    if loss > 0.0 {
        (loss, [negative[0] - positive[0], negative[1] - positive[1]])
    } else {
        (0.0, [0.0, 0.0])
    }
}

fn corrupt(t: Triple, num_entities: u32, rng: &mut SeededRng) -> Triple {
    let tail = rng.gen_bool(0.5);
    let original = if tail { t.tail } else { t.head };
    let mut e = rng.gen_range(0..num_entities - 1);
    if e >= original {
        e += 1;
    }
    if tail {
        Triple::new(t.head, t.relation, e)
    } else {
        Triple::new(e, t.relation, t.tail)
    }
}

/// Fits the combiner by mini-batch gradient descent on the summed hinge loss,
/// drawing fresh uniform head-or-tail corruptions every epoch. The two
/// scorers are only read. Returns the mean loss of each epoch.
#[allow(clippy::too_many_arguments)]
pub fn train_fusion<A: TripleScorer + ?Sized, B: TripleScorer + ?Sized>(
    model: &mut FusionModel,
    single: &A,
    fed: &B,
    triples: &[Triple],
    num_entities: u32,
    cfg: &FusionConfig,
    rng: &mut SeededRng,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if triples.is_empty() {
        return Ok(Vec::new());
    }
    if num_entities < 2 {
        return Err(Error::config("fusion needs at least two entities to corrupt triples"));
    }
    let positives: Vec<[f64; 2]> = triples.par_iter().map(|&t| features(single, fed, t)).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let negatives: Vec<Triple> = triples
            .iter()
            .flat_map(|&t| std::iter::repeat_n(t, cfg.negatives))
            .map(|t| corrupt(t, num_entities, rng))
            .collect();
        let negative_features: Vec<[f64; 2]> = negatives.par_iter().map(|&t| features(single, fed, t)).collect();
        let mut epoch_loss = 0.0;
        for (k, chunk) in negative_features.chunks(cfg.batch_size).enumerate() {
            let start = k * cfg.batch_size;
            let mut grad = [0.0; 2];
            for (j, neg) in chunk.iter().enumerate() {
                let pos = positives[(start + j) / cfg.negatives];
                let (loss, g) = pair_loss(model, pos, *neg, cfg.margin);
                epoch_loss += loss;
                grad[0] += g[0];
                grad[1] += g[1];
            }
            let scale = cfg.lr;
            model.weights[0] -= scale * grad[0];
            model.weights[1] -= scale * grad[1];
        }
        history.push(epoch_loss / negative_features.len() as f64);
    }
    Ok(history)
}
