use rand::Rng;

use crate::kg::{FilterIndex, Triple};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CorruptionSide {
    Head,
    Tail,
}

/// Which side of each positive gets corrupted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum CorruptionMode {
    /// Tail at even batch positions, head at odd ones.
    #[default]
    Alternate,
    TailOnly,
}

impl CorruptionMode {
    pub fn side_for(self, position: usize) -> CorruptionSide {
        match self {
            CorruptionMode::TailOnly => CorruptionSide::Tail,
            CorruptionMode::Alternate if position.is_multiple_of(2) => CorruptionSide::Tail,
            CorruptionMode::Alternate => CorruptionSide::Head,
        }
    }
}

/// Entities a corruption may draw from, as ids in the model's id space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NegativePool {
    /// Every id in `0..n`.
    Range(u32),
    /// An explicit list of ids, e.g. one client's entities inside a pooled table.
    Ids(Vec<u32>),
}

impl NegativePool {
    pub fn len(&self) -> usize {
        match self {
            NegativePool::Range(n) => *n as usize,
            NegativePool::Ids(ids) => ids.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        match self {
            NegativePool::Range(n) => rng.gen_range(0..*n),
            // Drawn as u32 so a pool of n ids consumes the stream exactly like `Range(n)`.
            NegativePool::Ids(ids) => ids[rng.gen_range(0..ids.len() as u32) as usize],
        }
    }
}

/// Replacement entities for one positive, all on the same side.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NegativeBatch {
    pub side: CorruptionSide,
    pub entities: Vec<u32>,
}

impl NegativeBatch {
    pub fn corrupt(&self, positive: Triple, entity: u32) -> Triple {
        match self.side {
            CorruptionSide::Head => Triple::new(entity, positive.relation, positive.tail),
            CorruptionSide::Tail => Triple::new(positive.head, positive.relation, entity),
        }
    }

    pub fn triples(&self, positive: Triple) -> impl Iterator<Item = Triple> + '_ {
        self.entities.iter().map(move |&e| self.corrupt(positive, e))
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }
}

/// Attempts per negative before the strict filter gives up on a saturated
/// query and keeps the last draw that differs from the positive.
const STRICT_ATTEMPTS: usize = 64;

/// Draws `count` corruptions of `positive` on `side`, uniformly from `pool`,
/// resampling any draw equal to the entity being replaced. With `known` set,
/// draws forming a known triple are resampled as well.
pub fn sample_negatives<R: Rng + ?Sized>(
    positive: Triple,
    side: CorruptionSide,
    pool: &NegativePool,
    count: usize,
    known: Option<&FilterIndex>,
    rng: &mut R,
) -> NegativeBatch {
    assert!(pool.len() >= 2, "negative sampling needs at least two candidate entities");
    let original = match side {
        CorruptionSide::Head => positive.head,
        CorruptionSide::Tail => positive.tail,
    };
    let mut batch = NegativeBatch {
        side,
        entities: Vec::with_capacity(count),
    };
    for _ in 0..count {
        let mut attempts = 0;
        let entity = loop {
            let e = pool.draw(rng);
            if e == original {
                continue;
            }
            attempts += 1;
            match known {
                Some(index) if attempts < STRICT_ATTEMPTS && index.contains(&batch.corrupt(positive, e)) => {}
                _ => break e,
            }
        };
        batch.entities.push(entity);
    }
    batch
}
