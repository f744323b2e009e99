//! The two non-federated settings that federated training is compared with:
//! every client training alone, and one model trained on the pooled triples
//! of all clients.

use rayon::prelude::*;

use crate::eval::{Directions, Metrics, MappedScorer, MetricsRecord};
use crate::kg::{FederatedDataset, SplitKind};
use crate::model::{KgeModel, ModelKind, TrainHyper};
use crate::optim::OptimizerConfig;
use crate::run::{local_source, mapped_source, records, Progress, ShardEval};
use crate::train::{TrainSource, Trainer};
use crate::{Error, Result};

/// Epoch budget and early stopping for the non-federated settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalConfig {
    pub max_epochs: u64,
    pub batch_size: usize,
    /// Evaluate on validation every this many epochs; 0 disables evaluation.
    pub eval_every: u64,
    pub patience: u32,
}

impl Default for LocalConfig {
    fn default() -> Self {
        LocalConfig {
            max_epochs: 1000,
            batch_size: 512,
            eval_every: 10,
            patience: 15,
        }
    }
}

impl LocalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be positive"));
        }
        Ok(())
    }
}

/// One isolated client: its trainer, source, stopping state and best model.
#[derive(Debug, Clone)]
pub struct LocalRun {
    pub trainer: Trainer,
    pub source: TrainSource,
    pub epoch: u64,
    pub progress: Progress,
    pub best: Option<KgeModel>,
    pub history: Vec<MetricsRecord>,
}

impl LocalRun {
    fn train(
        &mut self,
        client: usize,
        eval: &ShardEval,
        cfg: &LocalConfig,
        hyper: &TrainHyper,
        opt: &OptimizerConfig,
        directions: Directions,
    ) -> Result<()> {
        while self.epoch < cfg.max_epochs && !self.progress.stopped {
            self.trainer
                .run_epoch(std::slice::from_mut(&mut self.source), hyper, opt, cfg.batch_size)?;
            self.epoch += 1;
            if cfg.eval_every > 0 && self.epoch.is_multiple_of(cfg.eval_every) {
                let metrics = eval.evaluate(&self.trainer.model, SplitKind::Valid, directions);
                self.history.push(MetricsRecord {
                    step: self.epoch,
                    client: Some(client),
                    split: SplitKind::Valid,
                    metrics,
                });
                if self.progress.observe(self.epoch, metrics.mrr, cfg.patience) {
                    self.best = Some(self.trainer.model.clone());
                }
            }
        }
        Ok(())
    }

    pub fn best_or_current(&self) -> &KgeModel {
        self.best.as_ref().unwrap_or(&self.trainer.model)
    }
}

/// Every client trains on its own triples only, with its own early stopping.
#[derive(Debug, Clone)]
pub struct SingleRun {
    pub kind: ModelKind,
    pub clients: Vec<LocalRun>,
}

impl SingleRun {
    pub fn new(dataset: &FederatedDataset, kind: ModelKind, hyper: &TrainHyper, seed: u64) -> Result<Self> {
        kind.validate_dim(hyper.dim)?;
        let clients = dataset
            .shards
            .iter()
            .map(|shard| {
                let model = KgeModel::init(kind, &shard.vocab.entities, &shard.vocab.relations, hyper.dim, seed);
                Ok(LocalRun {
                    trainer: Trainer::new(model),
                    source: local_source(shard, hyper, seed)?,
                    epoch: 0,
                    progress: Progress::default(),
                    best: None,
                    history: Vec::new(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SingleRun { kind, clients })
    }

    /// Trains all clients independently (in parallel).
    pub fn train(
        &mut self,
        evals: &[ShardEval],
        cfg: &LocalConfig,
        hyper: &TrainHyper,
        opt: &OptimizerConfig,
        directions: Directions,
    ) -> Result<()> {
        cfg.validate()?;
        opt.validate()?;
        self.clients
            .par_iter_mut()
            .zip(evals)
            .enumerate()
            .map(|(c, (run, eval))| run.train(c, eval, cfg, hyper, opt, directions))
            .collect()
    }

    /// Validation history of all clients, ordered by client then epoch.
    pub fn history(&self) -> Vec<MetricsRecord> {
        self.clients.iter().flat_map(|c| c.history.iter().copied()).collect()
    }

    pub fn models(&self) -> Vec<&KgeModel> {
        self.clients.iter().map(|c| &c.trainer.model).collect()
    }

    pub fn best_models(&self) -> Vec<&KgeModel> {
        self.clients.iter().map(LocalRun::best_or_current).collect()
    }

    pub fn evaluate(&self, evals: &[ShardEval], split: SplitKind, directions: Directions, best: bool) -> Vec<Metrics> {
        let models = if best { self.best_models() } else { self.models() };
        evals
            .iter()
            .zip(models)
            .map(|(e, m)| e.evaluate(m, split, directions))
            .collect()
    }
}

/// One model over the union of all clients' triples. Each client keeps its
/// own source, so batches and negatives decompose per client; negatives
/// are drawn from the client's own entities.
#[derive(Debug, Clone)]
pub struct EntireRun {
    pub trainer: Trainer,
    pub sources: Vec<TrainSource>,
    pub entity_maps: Vec<Vec<u32>>,
    pub relation_maps: Vec<Vec<u32>>,
    pub epoch: u64,
    pub progress: Progress,
    pub best: Option<KgeModel>,
    pub history: Vec<MetricsRecord>,
}

impl EntireRun {
    pub fn new(dataset: &FederatedDataset, kind: ModelKind, hyper: &TrainHyper, seed: u64) -> Result<Self> {
        kind.validate_dim(hyper.dim)?;
        let model = KgeModel::init(kind, &dataset.entities, &dataset.relations, hyper.dim, seed);
        let entity_maps: Vec<Vec<u32>> = (0..dataset.num_clients()).map(|c| dataset.entity_map(c)).collect();
        let relation_maps: Vec<Vec<u32>> = (0..dataset.num_clients()).map(|c| dataset.relation_map(c)).collect();
        let sources = dataset
            .shards
            .iter()
            .enumerate()
            .map(|(c, shard)| mapped_source(shard, hyper, seed, Some((&entity_maps[c], &relation_maps[c]))))
            .collect::<Result<Vec<_>>>()?;
        Ok(EntireRun {
            trainer: Trainer::new(model),
            sources,
            entity_maps,
            relation_maps,
            epoch: 0,
            progress: Progress::default(),
            best: None,
            history: Vec::new(),
        })
    }

    /// An epoch's batch `k` holds every client's `k`-th chunk of
    /// `batch_size` triples.
    pub fn train(
        &mut self,
        evals: &[ShardEval],
        cfg: &LocalConfig,
        hyper: &TrainHyper,
        opt: &OptimizerConfig,
        directions: Directions,
    ) -> Result<()> {
        cfg.validate()?;
        opt.validate()?;
        while self.epoch < cfg.max_epochs && !self.progress.stopped {
            self.trainer.run_epoch(&mut self.sources, hyper, opt, cfg.batch_size)?;
            self.epoch += 1;
            if cfg.eval_every > 0 && self.epoch.is_multiple_of(cfg.eval_every) {
                let per_client = self.evaluate_model(&self.trainer.model, evals, SplitKind::Valid, directions);
                let (recs, avg) = records(self.epoch, SplitKind::Valid, &per_client);
                self.history.extend(recs);
                log::info!("epoch {}: valid MRR {:.4}", self.epoch, avg.mrr);
                if self.progress.observe(self.epoch, avg.mrr, cfg.patience) {
                    self.best = Some(self.trainer.model.clone());
                }
            }
        }
        Ok(())
    }

    pub fn best_or_current(&self) -> &KgeModel {
        self.best.as_ref().unwrap_or(&self.trainer.model)
    }

    /// Client `c`'s slice of `model`, in the client's local id space.
    pub fn client_model(&self, model: &KgeModel, client: usize) -> KgeModel {
        KgeModel {
            kind: model.kind,
            entities: model.entities.gather(&self.entity_maps[client]),
            relations: model.relations.gather(&self.relation_maps[client]),
        }
    }

    pub fn evaluate_model(
        &self,
        model: &KgeModel,
        evals: &[ShardEval],
        split: SplitKind,
        directions: Directions,
    ) -> Vec<Metrics> {
        evals
            .iter()
            .enumerate()
            .map(|(c, e)| {
                let scorer = MappedScorer {
                    inner: model,
                    entities: &self.entity_maps[c],
                    relations: &self.relation_maps[c],
                };
                e.evaluate(&scorer, split, directions)
            })
            .collect()
    }
}
