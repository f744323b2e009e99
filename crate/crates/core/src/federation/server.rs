use rand::seq::index::sample;

use super::{EntityTable, Message};
use crate::embedding::EmbeddingMatrix;
use crate::model::init_entities;
use crate::rng::{derive_rng, SeededRng};
use crate::{Error, Result};

/// Server-side state. It holds entity labels and entity embeddings only;
/// relations and triples never reach it.
#[derive(Debug, Clone)]
pub struct ServerState {
    pub table: EntityTable,
    pub entities: EmbeddingMatrix,
    pub round: u64,
    pub sampler: SeededRng,
}

impl ServerState {
    /// Builds the entity table from REGISTER messages (ordered by client id)
    /// and initializes the global entity matrix.
    pub fn from_registrations(messages: &[Message], dim: usize, seed: u64) -> Result<Self> {
        let mut labels = Vec::with_capacity(messages.len());
        for (expected, msg) in messages.iter().enumerate() {
            match msg {
                Message::Register { client, entities } if *client as usize == expected => {
                    labels.push(entities.clone());
                }
                Message::Register { client, .. } => {
                    return Err(Error::contract(format!(
                        "registration from client {client} arrived in slot {expected}"
                    )))
                }
                other => {
                    return Err(Error::contract(format!(
                        "expected REGISTER, got message kind {}",
                        other.kind()
                    )))
                }
            }
        }
        let table = EntityTable::build(&labels)?;
        Ok(Self::new(table, dim, seed))
    }

    pub fn new(table: EntityTable, dim: usize, seed: u64) -> Self {
        let entities = init_entities(table.entities.iter(), dim, seed);
        ServerState {
            table,
            entities,
            round: 0,
            sampler: derive_rng(seed, &["server", "sampler"]),
        }
    }

    /// The global rows of one client's entities, in the client's local order.
    pub fn distribute(&self, client: usize) -> Result<EmbeddingMatrix> {
        Ok(self.entities.gather(self.table.map(client)?))
    }

    pub fn distribute_message(&self, client: usize) -> Result<Message> {
        Ok(Message::Distribute {
            round: self.round,
            client: client as u32,
            entities: self.distribute(client)?,
        })
    }

    /// Samples `ceil(fraction · C)` distinct clients uniformly, returned in
    /// ascending order.
    pub fn select_clients(&mut self, fraction: f64) -> Vec<usize> {
        let total = self.table.num_clients();
        let k = clients_per_round(fraction, total);
        let mut picked = if k == total {
            (0..total).collect()
        } else {
            sample(&mut self.sampler, total, k).into_vec()
        };
        picked.sort_unstable();
        picked
    }

    /// Replaces the global matrix with the aggregate of UPDATE messages and
    /// advances the round counter.
    pub fn apply_updates(&mut self, messages: &[Message]) -> Result<()> {
        let mut updates = Vec::with_capacity(messages.len());
        for msg in messages {
            match msg {
                Message::Update { round, client, entities } if *round == self.round => {
                    updates.push((*client as usize, entities));
                }
                Message::Update { round, .. } => {
                    return Err(Error::contract(format!(
                        "update for round {round} received in round {}",
                        self.round
                    )))
                }
                other => {
                    return Err(Error::contract(format!(
                        "expected UPDATE, got message kind {}",
                        other.kind()
                    )))
                }
            }
        }
        self.entities = aggregate(&self.table, &self.entities, &updates)?;
        self.round += 1;
        Ok(())
    }
}

pub fn clients_per_round(fraction: f64, total: usize) -> usize {
    ((fraction * total as f64).ceil() as usize).clamp(1, total.max(1))
}

/// Existence-weighted average of client entity matrices.
///
/// For each global entity held by at least one updating client, the new row
/// is the sum of those clients' local rows (added in ascending client order)
/// multiplied by the reciprocal of their count. Entities held by no updating
/// client keep their `previous` row.
pub fn aggregate(
    table: &EntityTable,
    previous: &EmbeddingMatrix,
    updates: &[(usize, &EmbeddingMatrix)],
) -> Result<EmbeddingMatrix> {
    let dim = previous.dim();
    if previous.rows() != table.num_entities() {
        return Err(Error::contract("global matrix does not match the entity table"));
    }
    let mut order: Vec<&(usize, &EmbeddingMatrix)> = updates.iter().collect();
    order.sort_by_key(|(c, _)| *c);
    if order.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::contract("duplicate update from one client"));
    }

    let mut sums = EmbeddingMatrix::zeros(previous.rows(), dim);
    let mut counts = vec![0u32; previous.rows()];
    for (client, local) in order {
        let map = table.map(*client)?;
        if local.rows() != map.len() || local.dim() != dim {
            return Err(Error::contract(format!(
                "update from client {client} has shape {}x{}, expected {}x{dim}",
                local.rows(),
                local.dim(),
                map.len()
            )));
        }
        for (j, &i) in map.iter().enumerate() {
            for (s, v) in sums.row_mut(i as usize).iter_mut().zip(local.row(j)) {
                *s += v;
            }
            counts[i as usize] += 1;
        }
    }

    let mut next = previous.clone();
    for (i, &count) in counts.iter().enumerate() {
        if count == 0 {
            continue;
        }
        let inv = 1.0 / count as f64;
        for (dst, s) in next.row_mut(i).iter_mut().zip(sums.row(i)) {
            *dst = s * inv;
        }
    }
    Ok(next)
}
