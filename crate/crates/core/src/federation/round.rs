use rayon::prelude::*;

use super::{ClientState, EntityTable, Message, ServerState};
use crate::embedding::EmbeddingMatrix;
use crate::eval::{Directions, Metrics, MetricsRecord};
use crate::kg::{FederatedDataset, SplitKind};
use crate::model::{KgeModel, ModelKind, TrainHyper};
use crate::optim::OptimizerConfig;
use crate::run::{records, Progress, ShardEval};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundConfig {
    /// Fraction of clients trained per round.
    pub fraction: f64,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub max_rounds: u64,
    /// Evaluate on validation every this many rounds; 0 disables evaluation.
    pub eval_every: u64,
    /// Consecutive non-improving evaluations tolerated before stopping.
    pub patience: u32,
    /// Clear each selected client's optimizer moments at the start of a round.
    pub reset_optimizer: bool,
}

impl Default for RoundConfig {
    fn default() -> Self {
        RoundConfig {
            fraction: 1.0,
            local_epochs: 3,
            batch_size: 512,
            max_rounds: 1000,
            eval_every: 5,
            patience: 15,
            reset_optimizer: false,
        }
    }
}

impl RoundConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(Error::config(format!("client fraction must lie in (0, 1], got {}", self.fraction)));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundReport {
    /// Round index that was executed (the server counter before the round).
    pub round: u64,
    pub selected: Vec<usize>,
}

/// Global entity rows plus every client's relation rows at one round.
#[derive(Debug, Clone, PartialEq)]
pub struct FedSnapshot {
    pub round: u64,
    pub entities: EmbeddingMatrix,
    pub relations: Vec<EmbeddingMatrix>,
}

impl FedSnapshot {
    /// Client `c`'s view: its relations with the global rows of its entities.
    pub fn client_model(&self, table: &EntityTable, kind: ModelKind, client: usize) -> KgeModel {
        KgeModel {
            kind,
            entities: self.entities.gather(&table.maps[client]),
            relations: self.relations[client].clone(),
        }
    }
}

/// A federated training run: server, clients, history and best snapshot.
#[derive(Debug, Clone)]
pub struct FedRun {
    pub kind: ModelKind,
    pub server: ServerState,
    pub clients: Vec<ClientState>,
    pub progress: Progress,
    pub history: Vec<MetricsRecord>,
    pub best: Option<FedSnapshot>,
}

impl FedRun {
    /// Creates the clients, passes their REGISTER messages through the wire
    /// encoding, and builds the server from them.
    pub fn new(dataset: &FederatedDataset, kind: ModelKind, hyper: &TrainHyper, seed: u64) -> Result<Self> {
        kind.validate_dim(hyper.dim)?;
        let clients = dataset
            .shards
            .iter()
            .map(|s| ClientState::new(s, kind, hyper, seed))
            .collect::<Result<Vec<_>>>()?;
        let registrations = clients
            .iter()
            .map(|c| Message::decode(&c.register().encode()))
            .collect::<Result<Vec<_>>>()?;
        let server = ServerState::from_registrations(&registrations, hyper.dim, seed)?;
        Ok(FedRun {
            kind,
            server,
            clients,
            progress: Progress::default(),
            history: Vec::new(),
            best: None,
        })
    }

    /// One round: select clients, distribute, train selected clients in
    /// parallel, aggregate.
    pub fn run_round(&mut self, cfg: &RoundConfig, hyper: &TrainHyper, opt: &OptimizerConfig) -> Result<RoundReport> {
        let round = self.server.round;
        let selected = self.server.select_clients(cfg.fraction);
        let outgoing = selected
            .iter()
            .map(|&c| Ok((c, self.server.distribute_message(c)?.encode())))
            .collect::<Result<Vec<_>>>()?;

        let updates: Vec<Vec<u8>> = self
            .clients
            .par_iter_mut()
            .filter_map(|client| {
                let (_, bytes) = outgoing.iter().find(|(c, _)| *c == client.id)?;
                Some((client, bytes))
            })
            .map(|(client, bytes)| {
                if cfg.reset_optimizer {
                    client.trainer.reset_optimizer();
                }
                let msg = Message::decode(bytes)?;
                let reply = client.handle_distribute(&msg, cfg.local_epochs, cfg.batch_size, hyper, opt)?;
                Ok(reply.encode())
            })
            .collect::<Result<_>>()?;

        let messages = updates
            .iter()
            .map(|b| Message::decode(b))
            .collect::<Result<Vec<_>>>()?;
        self.server.apply_updates(&messages)?;
        Ok(RoundReport { round, selected })
    }

    /// Client `c`'s current scoring view: its local relations with the
    /// current global rows of its entities.
    pub fn client_model(&self, client: usize) -> Result<KgeModel> {
        Ok(KgeModel {
            kind: self.kind,
            entities: self.server.distribute(client)?,
            relations: self.clients[client].trainer.model.relations.clone(),
        })
    }

    pub fn snapshot(&self) -> FedSnapshot {
        FedSnapshot {
            round: self.server.round,
            entities: self.server.entities.clone(),
            relations: self
                .clients
                .iter()
                .map(|c| c.trainer.model.relations.clone())
                .collect(),
        }
    }

    /// The best snapshot so far, or the current state if none was recorded.
    pub fn best_or_current(&self) -> FedSnapshot {
        self.best.clone().unwrap_or_else(|| self.snapshot())
    }

    /// Per-client metrics of the current state on `split`.
    pub fn evaluate(&self, evals: &[ShardEval], split: SplitKind, directions: Directions) -> Result<Vec<Metrics>> {
        evals
            .iter()
            .enumerate()
            .map(|(c, e)| Ok(e.evaluate(&self.client_model(c)?, split, directions)))
            .collect()
    }

    /// Runs rounds until `max_rounds` or early stopping. Every `eval_every`
    /// rounds the weighted-average validation MRR is checked and the best
    /// state snapshotted. Can be called again on a resumed run.
    pub fn train(
        &mut self,
        evals: &[ShardEval],
        cfg: &RoundConfig,
        hyper: &TrainHyper,
        opt: &OptimizerConfig,
        directions: Directions,
    ) -> Result<()> {
        cfg.validate()?;
        opt.validate()?;
        while self.server.round < cfg.max_rounds && !self.progress.stopped {
            self.run_round(cfg, hyper, opt)?;
            let round = self.server.round;
            if cfg.eval_every > 0 && round.is_multiple_of(cfg.eval_every) {
                let per_client = self.evaluate(evals, SplitKind::Valid, directions)?;
                let (recs, avg) = records(round, SplitKind::Valid, &per_client);
                self.history.extend(recs);
                log::info!("round {round}: valid MRR {:.4}", avg.mrr);
                if self.progress.observe(round, avg.mrr, cfg.patience) {
                    self.best = Some(self.snapshot());
                }
            }
        }
        Ok(())
    }
}
