//! Knowledge-graph data model: integer-encoded triples, label vocabularies,
//! triple stores with filter indexes, and the relation-partitioned federated
//! dataset built from them.

mod io;
mod manifest;
mod split;

use std::collections::{HashMap, HashSet};

pub use io::{load_triples, load_triples_into, write_triples};
pub use manifest::{load_manifest, write_split, MANIFEST_FILE};
pub use split::{entity_overlap, federate_split, shard_stats, ClientStats, ShardStats, SplitConfig};

/// An integer-encoded `(head, relation, tail)` fact. Ids index into the
/// vocabulary that produced them; self-loops are allowed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub head: u32,
    pub relation: u32,
    pub tail: u32,
}

impl Triple {
    pub const fn new(head: u32, relation: u32, tail: u32) -> Self {
        Triple {
            head,
            relation,
            tail,
        }
    }
}

/// Ordered label list with its exact inverse; the id of a label is its position.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Labels {
    names: Vec<String>,
    index: HashMap<String, u32>,
}

impl Labels {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn id(&self, label: &str) -> Option<u32> {
        self.index.get(label).copied()
    }

    pub fn name(&self, id: u32) -> &str {
        &self.names[id as usize]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Returns the id of `label`, appending it if unseen.
    pub fn intern(&mut self, label: &str) -> u32 {
        if let Some(id) = self.index.get(label) {
            return *id;
        }
        let id = self.names.len() as u32;
        self.names.push(label.to_owned());
        self.index.insert(label.to_owned(), id);
        id
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }
}

impl<S: AsRef<str>> FromIterator<S> for Labels {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        let mut labels = Labels::new();
        for s in iter {
            labels.intern(s.as_ref());
        }
        labels
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    pub entities: Labels,
    pub relations: Labels,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }
}

/// Known-triple lookup used to filter ranking candidates and, optionally,
/// to reject negatives that are actually true.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FilterIndex {
    tails: HashMap<(u32, u32), HashSet<u32>>,
    heads: HashMap<(u32, u32), HashSet<u32>>,
}

impl FilterIndex {
    pub fn new() -> Self {
        Self::default()
    }

    /// Index over the union of several stores (typically train, valid and test
    /// of one shard).
    pub fn from_stores<'a>(stores: impl IntoIterator<Item = &'a TripleStore>) -> Self {
        let mut index = FilterIndex::new();
        for store in stores {
            for t in store.triples() {
                index.insert(*t);
            }
        }
        index
    }

    pub fn insert(&mut self, t: Triple) -> bool {
        self.heads
            .entry((t.tail, t.relation))
            .or_default()
            .insert(t.head);
        self.tails
            .entry((t.head, t.relation))
            .or_default()
            .insert(t.tail)
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.tails
            .get(&(t.head, t.relation))
            .is_some_and(|s| s.contains(&t.tail))
    }

    pub fn tails(&self, head: u32, relation: u32) -> Option<&HashSet<u32>> {
        self.tails.get(&(head, relation))
    }

    pub fn heads(&self, tail: u32, relation: u32) -> Option<&HashSet<u32>> {
        self.heads.get(&(tail, relation))
    }

    pub fn len(&self) -> usize {
        self.tails.values().map(HashSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.tails.is_empty()
    }
}

/// Duplicate-free list of triples plus its filter index.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TripleStore {
    triples: Vec<Triple>,
    index: FilterIndex,
}

impl TripleStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a store, silently dropping repeated triples. Returns the number
    /// of duplicates dropped alongside the store.
    pub fn from_triples(triples: impl IntoIterator<Item = Triple>) -> (Self, usize) {
        let mut store = TripleStore::new();
        let mut dropped = 0;
        for t in triples {
            if !store.push(t) {
                dropped += 1;
            }
        }
        (store, dropped)
    }

    /// Appends `t` unless already present; returns whether it was added.
    pub fn push(&mut self, t: Triple) -> bool {
        if self.index.insert(t) {
            self.triples.push(t);
            true
        } else {
            false
        }
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn index(&self) -> &FilterIndex {
        &self.index
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.index.contains(t)
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    /// Distinct relation ids in ascending order.
    pub fn relation_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.triples.iter().map(|t| t.relation).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

/// Which split of a shard an operation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitKind {
    Train,
    Valid,
    Test,
}

impl SplitKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitKind::Train => "train",
            SplitKind::Valid => "valid",
            SplitKind::Test => "test",
        }
    }
}

impl std::fmt::Display for SplitKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SplitKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(SplitKind::Train),
            "valid" => Ok(SplitKind::Valid),
            "test" => Ok(SplitKind::Test),
            other => Err(format!("unknown split `{other}` (expected train, valid or test)")),
        }
    }
}

/// One client's private knowledge graph, encoded against its own local vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClientShard {
    pub id: usize,
    pub vocab: Vocabulary,
    pub train: TripleStore,
    pub valid: TripleStore,
    pub test: TripleStore,
}

impl ClientShard {
    /// Builds a shard from labelled splits. The local vocabulary is filled in
    /// first-occurrence order over train, then valid, then test, which is also
    /// the order a reload from files produces.
    pub fn from_labelled(
        id: usize,
        train: &[[&str; 3]],
        valid: &[[&str; 3]],
        test: &[[&str; 3]],
    ) -> Self {
        let mut vocab = Vocabulary::new();
        let mut encode = |rows: &[[&str; 3]]| {
            TripleStore::from_triples(rows.iter().map(|[h, r, t]| {
                let head = vocab.entities.intern(h);
                let relation = vocab.relations.intern(r);
                let tail = vocab.entities.intern(t);
                Triple::new(head, relation, tail)
            }))
            .0
        };
        let train = encode(train);
        let valid = encode(valid);
        let test = encode(test);
        ClientShard {
            id,
            vocab,
            train,
            valid,
            test,
        }
    }

    pub fn split(&self, kind: SplitKind) -> &TripleStore {
        match kind {
            SplitKind::Train => &self.train,
            SplitKind::Valid => &self.valid,
            SplitKind::Test => &self.test,
        }
    }

    pub fn num_triples(&self) -> usize {
        self.train.len() + self.valid.len() + self.test.len()
    }

    /// Filter index over all three splits of this shard.
    pub fn filter(&self) -> FilterIndex {
        FilterIndex::from_stores([&self.train, &self.valid, &self.test])
    }
}

/// A set of client shards plus the global vocabulary they jointly induce.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FederatedDataset {
    pub shards: Vec<ClientShard>,
    /// Union of client entity labels, in client order then local order.
    pub entities: Labels,
    /// Union of client relation labels, in client order then local order.
    pub relations: Labels,
}

impl FederatedDataset {
    pub fn from_shards(shards: Vec<ClientShard>) -> crate::Result<Self> {
        let mut entities = Labels::new();
        let mut relations = Labels::new();
        for shard in &shards {
            for e in shard.vocab.entities.iter() {
                entities.intern(e);
            }
            for r in shard.vocab.relations.iter() {
                if relations.id(r).is_some() {
                    return Err(crate::Error::contract(format!(
                        "relation `{r}` is held by more than one client"
                    )));
                }
                relations.intern(r);
            }
        }
        Ok(FederatedDataset {
            shards,
            entities,
            relations,
        })
    }

    pub fn num_clients(&self) -> usize {
        self.shards.len()
    }

    /// Maps a client's local entity ids to ids in the global entity labels.
    pub fn entity_map(&self, client: usize) -> Vec<u32> {
        self.shards[client]
            .vocab
            .entities
            .iter()
            .map(|e| self.entities.id(e).expect("client entity missing from global labels"))
            .collect()
    }

    /// Maps a client's local relation ids to ids in the global relation labels.
    pub fn relation_map(&self, client: usize) -> Vec<u32> {
        self.shards[client]
            .vocab
            .relations
            .iter()
            .map(|r| self.relations.id(r).expect("client relation missing from global labels"))
            .collect()
    }
}
