//! Mini-batch training of one model over one or more triple sources.
//!
//! A source is a list of training triples with its own negative pool and its
//! own random stream. Each epoch every source shuffles its triples, and batch
//! `k` is the concatenation of every source's `k`-th chunk. With a single
//! source this is ordinary local training; with one source per client it is
//! pooled training whose randomness still decomposes per client.

use rand::seq::SliceRandom;

use crate::embedding::SparseGrad;
use crate::kg::{FilterIndex, Triple};
use crate::model::{batch_grad, sample_negatives, KgeModel, NegativePool, TrainHyper, TripleExample};
use crate::optim::{step, AdamState, OptimizerConfig};
use crate::rng::SeededRng;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct TrainSource {
    pub triples: Vec<Triple>,
    pub pool: NegativePool,
    /// Known triples rejected as negatives in strict mode.
    pub known: Option<FilterIndex>,
    pub rng: SeededRng,
}

impl TrainSource {
    pub fn new(triples: Vec<Triple>, pool: NegativePool, rng: SeededRng) -> Self {
        TrainSource {
            triples,
            pool,
            known: None,
            rng,
        }
    }

    /// Enables strict negative filtering against this source's own triples.
    pub fn with_strict_filter(mut self) -> Self {
        let mut index = FilterIndex::new();
        for t in &self.triples {
            index.insert(*t);
        }
        self.known = Some(index);
        self
    }
}

/// A model with its optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct Trainer {
    pub model: KgeModel,
    pub entity_opt: AdamState,
    pub relation_opt: AdamState,
}

impl Trainer {
    pub fn new(model: KgeModel) -> Self {
        Trainer {
            entity_opt: AdamState::for_params(&model.entities),
            relation_opt: AdamState::for_params(&model.relations),
            model,
        }
    }

    pub fn reset_optimizer(&mut self) {
        self.entity_opt.reset();
        self.relation_opt.reset();
    }

    /// One pass over every source. Returns the mean per-triple loss.
    pub fn run_epoch(
        &mut self,
        sources: &mut [TrainSource],
        hyper: &TrainHyper,
        opt: &OptimizerConfig,
        batch_size: usize,
    ) -> Result<f64> {
        if batch_size == 0 {
            return Err(Error::config("batch size must be positive"));
        }
        let orders: Vec<Vec<usize>> = sources
            .iter_mut()
            .map(|s| {
                let mut order: Vec<usize> = (0..s.triples.len()).collect();
                order.shuffle(&mut s.rng);
                order
            })
            .collect();
        let batches = orders
            .iter()
            .map(|o| o.len().div_ceil(batch_size))
            .max()
            .unwrap_or(0);

        let mut entity_grad = SparseGrad::new(self.model.entities.dim());
        let mut relation_grad = SparseGrad::new(self.model.relations.dim());
        let mut examples = Vec::new();
        let mut total_loss = 0.0;
        let mut total_triples = 0usize;
        for k in 0..batches {
            examples.clear();
            for (source, order) in sources.iter_mut().zip(&orders) {
                let Some(chunk) = order.chunks(batch_size).nth(k) else {
                    continue;
                };
                for (position, &i) in chunk.iter().enumerate() {
                    let positive = source.triples[i];
                    let negatives = sample_negatives(
                        positive,
                        hyper.corruption.side_for(position),
                        &source.pool,
                        hyper.negatives,
                        source.known.as_ref(),
                        &mut source.rng,
                    );
                    examples.push(TripleExample { positive, negatives });
                }
            }
            entity_grad.clear();
            relation_grad.clear();
            total_loss += batch_grad(&self.model, &examples, hyper, &mut entity_grad, &mut relation_grad);
            total_triples += examples.len();
            step(&mut self.model.entities, &entity_grad, &mut self.entity_opt, opt)?;
            step(&mut self.model.relations, &relation_grad, &mut self.relation_opt, opt)?;
        }
        Ok(if total_triples == 0 {
            0.0
        } else {
            total_loss / total_triples as f64
        })
    }
}

/// Mean per-triple loss over `triples` with freshly drawn negatives from a
/// throwaway stream.
pub fn mean_loss(
    model: &KgeModel,
    triples: &[Triple],
    pool: &NegativePool,
    hyper: &TrainHyper,
    rng: &mut SeededRng,
) -> f64 {
    if triples.is_empty() {
        return 0.0;
    }
    let total: f64 = triples
        .iter()
        .enumerate()
        .map(|(i, &positive)| {
            let negatives = sample_negatives(
                positive,
                hyper.corruption.side_for(i),
                pool,
                hyper.negatives,
                None,
                rng,
            );
            crate::model::loss(model, &TripleExample { positive, negatives }, hyper)
        })
        .sum();
    total / triples.len() as f64
}
