//! Bookkeeping shared by the training settings: per-shard evaluation
//! contexts, training sources, and early-stopping progress.

use crate::eval::{evaluate, weighted_average, Directions, Metrics, MetricsRecord, TripleScorer};
use crate::kg::{ClientShard, FilterIndex, SplitKind};
use crate::model::{NegativePool, TrainHyper};
use crate::rng::derive_rng;
use crate::train::TrainSource;
use crate::{Error, Result};

/// Random stream of client `c`'s batching and negative sampling. Every
/// setting uses the same stream for the same client.
pub fn client_stream(seed: u64, client: usize) -> crate::rng::SeededRng {
    derive_rng(seed, &["client", &client.to_string()])
}

/// Training source over a shard's train split in its local id space.
pub fn local_source(shard: &ClientShard, hyper: &TrainHyper, seed: u64) -> Result<TrainSource> {
    mapped_source(shard, hyper, seed, None)
}

/// Training source whose ids are mapped through `entity_map`/`relation_map`
/// into a larger id space; negatives are drawn from the shard's own entities.
pub fn mapped_source(
    shard: &ClientShard,
    hyper: &TrainHyper,
    seed: u64,
    maps: Option<(&[u32], &[u32])>,
) -> Result<TrainSource> {
    let n = shard.vocab.num_entities();
    if !shard.train.is_empty() && n < 2 {
        return Err(Error::config(format!(
            "client {} has fewer than two entities; negatives cannot be sampled",
            shard.id
        )));
    }
    let (triples, pool) = match maps {
        None => (shard.train.triples().to_vec(), NegativePool::Range(n as u32)),
        Some((entities, relations)) => (
            shard
                .train
                .triples()
                .iter()
                .map(|t| {
                    crate::kg::Triple::new(
                        entities[t.head as usize],
                        relations[t.relation as usize],
                        entities[t.tail as usize],
                    )
                })
                .collect(),
            NegativePool::Ids(entities.to_vec()),
        ),
    };
    let source = TrainSource::new(triples, pool, client_stream(seed, shard.id));
    Ok(if hyper.strict_negatives {
        source.with_strict_filter()
    } else {
        source
    })
}

/// Evaluation context of one shard: the shard plus its filter over all splits.
#[derive(Debug, Clone)]
pub struct ShardEval<'a> {
    pub shard: &'a ClientShard,
    pub filter: FilterIndex,
}

impl<'a> ShardEval<'a> {
    pub fn new(shard: &'a ClientShard) -> Self {
        ShardEval {
            filter: shard.filter(),
            shard,
        }
    }

    pub fn all(shards: &'a [ClientShard]) -> Vec<Self> {
        shards.iter().map(ShardEval::new).collect()
    }

    pub fn evaluate<S: TripleScorer + ?Sized>(&self, scorer: &S, split: SplitKind, directions: Directions) -> Metrics {
        evaluate(
            scorer,
            self.shard.split(split).triples(),
            self.shard.vocab.num_entities() as u32,
            &self.filter,
            directions,
        )
    }
}

/// Per-client records plus the weighted average, for one evaluation point.
pub fn records(step: u64, split: SplitKind, per_client: &[Metrics]) -> (Vec<MetricsRecord>, Metrics) {
    let avg = weighted_average(per_client);
    let mut out: Vec<MetricsRecord> = per_client
        .iter()
        .enumerate()
        .map(|(c, m)| MetricsRecord {
            step,
            client: Some(c),
            split,
            metrics: *m,
        })
        .collect();
    out.push(MetricsRecord {
        step,
        client: None,
        split,
        metrics: avg,
    });
    (out, avg)
}

/// Early-stopping tracker over validation MRR.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Progress {
    pub best_mrr: f64,
    pub best_step: u64,
    /// Consecutive evaluations without a new best.
    pub bad_evals: u32,
    pub stopped: bool,
}

impl Default for Progress {
    fn default() -> Self {
        Progress {
            best_mrr: f64::NEG_INFINITY,
            best_step: 0,
            bad_evals: 0,
            stopped: false,
        }
    }
}

impl Progress {
    /// Records an evaluation. Returns `true` on a new best. Training stops
    /// once an evaluation fails to improve and `patience` consecutive
    /// evaluations have done so.
    pub fn observe(&mut self, step: u64, mrr: f64, patience: u32) -> bool {
        if mrr > self.best_mrr {
            self.best_mrr = mrr;
            self.best_step = step;
            self.bad_evals = 0;
            true
        } else {
            self.bad_evals += 1;
            if self.bad_evals >= patience {
                self.stopped = true;
            }
            false
        }
    }
}
