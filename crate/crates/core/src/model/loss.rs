use super::{accumulate_score_grad, score, KgeModel, NegativeBatch, TrainHyper};
use crate::embedding::SparseGrad;
use crate::kg::Triple;

/// A positive triple with its sampled corruptions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TripleExample {
    pub positive: Triple,
    pub negatives: NegativeBatch,
}

/// Numerically stable `ln σ(x)`.
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Self-adversarial weights: softmax of `alpha · score` over the negatives.
/// The weights are constants for differentiation purposes.
pub fn adversarial_weights(scores: &[f64], alpha: f64) -> Vec<f64> {
    assert!(!scores.is_empty(), "adversarial weights need at least one score");
    let max = scores
        .iter()
        .map(|s| alpha * s)
        .fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (alpha * s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn negative_scores(model: &KgeModel, ex: &TripleExample) -> Vec<f64> {
    ex.negatives
        .triples(ex.positive)
        .map(|t| model.score(t.head, t.relation, t.tail))
        .collect()
}

/// `-ln σ(z⁺) - Σ pᵢ ln σ(-zᵢ)` where `z` is the margin-shifted logit of a
/// score and `pᵢ` are the self-adversarial weights.
pub fn loss(model: &KgeModel, ex: &TripleExample, hyper: &TrainHyper) -> f64 {
    let scores = negative_scores(model, ex);
    let weights = adversarial_weights(&scores, hyper.alpha);
    loss_from_scores(model, ex, hyper, &scores, &weights)
}

/// Loss with externally fixed negative weights.
pub fn loss_with_weights(model: &KgeModel, ex: &TripleExample, hyper: &TrainHyper, weights: &[f64]) -> f64 {
    let scores = negative_scores(model, ex);
    loss_from_scores(model, ex, hyper, &scores, weights)
}

fn loss_from_scores(
    model: &KgeModel,
    ex: &TripleExample,
    hyper: &TrainHyper,
    neg_scores: &[f64],
    weights: &[f64],
) -> f64 {
    let p = ex.positive;
    let pos = hyper.logit(model.kind, model.score(p.head, p.relation, p.tail));
    let neg: f64 = neg_scores
        .iter()
        .zip(weights)
        .map(|(f, w)| w * log_sigmoid(-hyper.logit(model.kind, *f)))
        .sum();
    -log_sigmoid(pos) - neg
}

/// Accumulates the gradient of [`loss`] into `entity_grad` and
/// `relation_grad` and returns the loss value.
pub fn triple_grad(
    model: &KgeModel,
    ex: &TripleExample,
    hyper: &TrainHyper,
    entity_grad: &mut SparseGrad,
    relation_grad: &mut SparseGrad,
) -> f64 {
    let kind = model.kind;
    let p = ex.positive;
    let h = model.entities.row(p.head as usize);
    let r = model.relations.row(p.relation as usize);
    let t = model.entities.row(p.tail as usize);
    let dim = h.len();

    let mut gh = vec![0.0; dim];
    let mut gr = vec![0.0; r.len()];
    let mut gt = vec![0.0; dim];
    let mut gn = vec![0.0; dim];

    let z_pos = hyper.logit(kind, score(kind, h, r, t));
    // d/dz of -ln σ(z) is σ(z) - 1.
    accumulate_score_grad(kind, h, r, t, -sigmoid(-z_pos), &mut gh, &mut gr, &mut gt);

    let scores = negative_scores(model, ex);
    let weights = adversarial_weights(&scores, hyper.alpha);
    let mut neg_loss = 0.0;
    for ((&entity, &f), &w) in ex.negatives.entities.iter().zip(&scores).zip(&weights) {
        let z = hyper.logit(kind, f);
        neg_loss += w * log_sigmoid(-z);
        // d/dz of -w ln σ(-z) is w σ(z).
        let c = w * sigmoid(z);
        let e = model.entities.row(entity as usize);
        gn.iter_mut().for_each(|g| *g = 0.0);
        match ex.negatives.side {
            super::CorruptionSide::Tail => accumulate_score_grad(kind, h, r, e, c, &mut gh, &mut gr, &mut gn),
            super::CorruptionSide::Head => accumulate_score_grad(kind, e, r, t, c, &mut gn, &mut gr, &mut gt),
        }
        entity_grad.add_row(entity, &gn);
    }

    entity_grad.add_row(p.head, &gh);
    entity_grad.add_row(p.tail, &gt);
    relation_grad.add_row(p.relation, &gr);
    -log_sigmoid(z_pos) - neg_loss
}

/// Sum of [`triple_grad`] over a batch; returns the summed loss.
pub fn batch_grad(
    model: &KgeModel,
    batch: &[TripleExample],
    hyper: &TrainHyper,
    entity_grad: &mut SparseGrad,
    relation_grad: &mut SparseGrad,
) -> f64 {
    batch
        .iter()
        .map(|ex| triple_grad(model, ex, hyper, entity_grad, relation_grad))
        .sum()
}
