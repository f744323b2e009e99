use log::warn;

use super::Message;
use crate::embedding::EmbeddingMatrix;
use crate::kg::ClientShard;
use crate::model::{KgeModel, ModelKind, TrainHyper};
use crate::optim::OptimizerConfig;
use crate::run::local_source;
use crate::train::{TrainSource, Trainer};
use crate::{Error, Result};

/// One client's private training context. The relation matrix and the
/// training triples stay here; only entity labels and entity rows are ever
/// encoded into messages.
#[derive(Debug, Clone)]
pub struct ClientState {
    pub id: usize,
    pub entity_labels: Vec<String>,
    pub trainer: Trainer,
    pub source: TrainSource,
}

impl ClientState {
    pub fn new(shard: &ClientShard, kind: ModelKind, hyper: &TrainHyper, seed: u64) -> Result<Self> {
        let model = KgeModel::init(kind, &shard.vocab.entities, &shard.vocab.relations, hyper.dim, seed);
        Ok(ClientState {
            id: shard.id,
            entity_labels: shard.vocab.entities.names().to_vec(),
            trainer: Trainer::new(model),
            source: local_source(shard, hyper, seed)?,
        })
    }

    pub fn register(&self) -> Message {
        Message::Register {
            client: self.id as u32,
            entities: self.entity_labels.clone(),
        }
    }

    /// Replaces the local entity matrix with `incoming`, trains for `epochs`
    /// local epochs and returns the resulting entity matrix.
    pub fn client_update(
        &mut self,
        incoming: EmbeddingMatrix,
        epochs: usize,
        batch_size: usize,
        hyper: &TrainHyper,
        opt: &OptimizerConfig,
    ) -> Result<EmbeddingMatrix> {
        if !incoming.same_shape(&self.trainer.model.entities) {
            return Err(Error::contract(format!(
                "client {} expects a {}x{} entity matrix, got {}x{}",
                self.id,
                self.trainer.model.entities.rows(),
                self.trainer.model.entities.dim(),
                incoming.rows(),
                incoming.dim()
            )));
        }
        self.trainer.model.entities = incoming;
        if self.source.triples.is_empty() {
            warn!("client {} has no training triples; returning its entities unchanged", self.id);
            return Ok(self.trainer.model.entities.clone());
        }
        for _ in 0..epochs {
            self.trainer
                .run_epoch(std::slice::from_mut(&mut self.source), hyper, opt, batch_size)?;
        }
        Ok(self.trainer.model.entities.clone())
    }

    /// Answers a DISTRIBUTE message with an UPDATE message.
    pub fn handle_distribute(
        &mut self,
        message: &Message,
        epochs: usize,
        batch_size: usize,
        hyper: &TrainHyper,
        opt: &OptimizerConfig,
    ) -> Result<Message> {
        let Message::Distribute { round, client, entities } = message else {
            return Err(Error::contract(format!("client expected DISTRIBUTE, got kind {}", message.kind())));
        };
        if *client as usize != self.id {
            return Err(Error::contract(format!(
                "message for client {client} delivered to client {}",
                self.id
            )));
        }
        let updated = self.client_update(entities.clone(), epochs, batch_size, hyper, opt)?;
        Ok(Message::Update {
            round: *round,
            client: *client,
            entities: updated,
        })
    }
}
