use rand::seq::SliceRandom;

use super::{ClientShard, FederatedDataset, Triple, TripleStore, Vocabulary};
use crate::rng::derive_rng;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SplitConfig {
    pub clients: usize,
    pub valid_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl SplitConfig {
    pub fn new(clients: usize, seed: u64) -> Self {
        SplitConfig {
            clients,
            valid_fraction: 0.1,
            test_fraction: 0.1,
            seed,
        }
    }
}

/// Partitions relations uniformly at random across clients and gives each
/// client every triple of its relations, shuffled and cut into train, valid
/// and test. Valid and test sizes are floored; train takes the remainder.
pub fn federate_split(
    store: &TripleStore,
    vocab: &Vocabulary,
    cfg: &SplitConfig,
) -> Result<FederatedDataset> {
    if cfg.clients == 0 {
        return Err(Error::config("client count must be at least 1"));
    }
    if store.is_empty() {
        return Err(Error::config("cannot split an empty triple store"));
    }
    let fractions_ok = (0.0..1.0).contains(&cfg.valid_fraction)
        && (0.0..1.0).contains(&cfg.test_fraction)
        && cfg.valid_fraction + cfg.test_fraction < 1.0;
    if !fractions_ok {
        return Err(Error::config(format!(
            "valid/test fractions {}/{} leave no training triples",
            cfg.valid_fraction, cfg.test_fraction
        )));
    }
    let mut relations = store.relation_ids();
    if cfg.clients > relations.len() {
        return Err(Error::config(format!(
            "{} clients requested but the store has only {} relations",
            cfg.clients,
            relations.len()
        )));
    }

    relations.shuffle(&mut derive_rng(cfg.seed, &["split", "relations"]));
    let mut owner = vec![usize::MAX; vocab.num_relations()];
    for (i, r) in relations.iter().enumerate() {
        owner[*r as usize] = i % cfg.clients;
    }

    let mut per_client: Vec<Vec<Triple>> = vec![Vec::new(); cfg.clients];
    for t in store.triples() {
        per_client[owner[t.relation as usize]].push(*t);
    }

    let mut shards = Vec::with_capacity(cfg.clients);
    for (c, mut triples) in per_client.into_iter().enumerate() {
        triples.shuffle(&mut derive_rng(cfg.seed, &["split", "client", &c.to_string()]));
        let n = triples.len();
        let n_valid = (n as f64 * cfg.valid_fraction).floor() as usize;
        let n_test = (n as f64 * cfg.test_fraction).floor() as usize;
        let n_train = n - n_valid - n_test;
        shards.push(encode_shard(
            c,
            vocab,
            &triples[..n_train],
            &triples[n_train..n_train + n_valid],
            &triples[n_train + n_valid..],
        ));
    }
    FederatedDataset::from_shards(shards)
}

/// Re-encodes source triples against a fresh local vocabulary.
fn encode_shard(
    id: usize,
    source: &Vocabulary,
    train: &[Triple],
    valid: &[Triple],
    test: &[Triple],
) -> ClientShard {
    let mut local = Vocabulary::new();
    let mut encode = |triples: &[Triple]| {
        TripleStore::from_triples(triples.iter().map(|t| {
            let head = local.entities.intern(source.entities.name(t.head));
            let relation = local.relations.intern(source.relations.name(t.relation));
            let tail = local.entities.intern(source.entities.name(t.tail));
            Triple::new(head, relation, tail)
        }))
        .0
    };
    let train = encode(train);
    let valid = encode(valid);
    let test = encode(test);
    ClientShard {
        id,
        vocab: local,
        train,
        valid,
        test,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClientStats {
    pub relations: usize,
    pub entities: usize,
    pub triples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShardStats {
    pub clients: Vec<ClientStats>,
    pub mean_relations: f64,
    pub mean_entities: f64,
    pub mean_triples: f64,
}

pub fn shard_stats(dataset: &FederatedDataset) -> ShardStats {
    let clients: Vec<ClientStats> = dataset
        .shards
        .iter()
        .map(|s| ClientStats {
            relations: s.vocab.num_relations(),
            entities: s.vocab.num_entities(),
            triples: s.num_triples(),
        })
        .collect();
    let n = clients.len().max(1) as f64;
    let mean = |f: fn(&ClientStats) -> usize| clients.iter().map(f).sum::<usize>() as f64 / n;
    ShardStats {
        mean_relations: mean(|c| c.relations),
        mean_entities: mean(|c| c.entities),
        mean_triples: mean(|c| c.triples),
        clients,
    }
}

impl std::fmt::Display for ShardStats {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "client\t#rel\t#ent\t#tri")?;
        for (c, s) in self.clients.iter().enumerate() {
            writeln!(f, "{c}\t{}\t{}\t{}", s.relations, s.entities, s.triples)?;
        }
        write!(
            f,
            "avg\t{:.1}\t{:.1}\t{:.1}",
            self.mean_relations, self.mean_entities, self.mean_triples
        )
    }
}

/// Entity labels that two shards share.
pub fn entity_overlap(a: &ClientShard, b: &ClientShard) -> usize {
    a.vocab
        .entities
        .iter()
        .filter(|e| b.vocab.entities.id(e).is_some())
        .count()
}
