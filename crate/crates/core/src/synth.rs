//! Small synthetic knowledge graphs with a known translational structure.
//!
//! Entities sit on a `width x height` grid; every relation is a fixed small
//! offset on the grid, and `(h, r, t)` holds when `t` is `h` moved by `r`'s
//! offset without leaving the grid. A target number of such facts is sampled
//! uniformly.

use rand::seq::index::sample;
use rand::seq::SliceRandom;

use crate::kg::{Triple, TripleStore, Vocabulary};
use crate::rng::derive_rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthConfig {
    pub width: u32,
    pub height: u32,
    pub relations: u32,
    pub triples: usize,
    pub seed: u64,
}

impl SynthConfig {
    /// 200 entities, 12 relations, 2000 triples.
    pub fn new(seed: u64) -> Self {
        SynthConfig {
            width: 20,
            height: 10,
            relations: 12,
            triples: 2000,
            seed,
        }
    }

    pub fn entities(&self) -> u32 {
        self.width * self.height
    }
}

/// Offsets of at most two columns and one row.
fn offsets() -> Vec<(i64, i64)> {
    let mut out = Vec::new();
    for dy in -1..=1 {
        for dx in -2..=2 {
            if (dx, dy) != (0, 0) {
                out.push((dx, dy));
            }
        }
    }
    out
}

pub fn generate(cfg: &SynthConfig) -> Result<(TripleStore, Vocabulary)> {
    let available = offsets();
    if cfg.relations as usize > available.len() {
        return Err(Error::config(format!(
            "at most {} synthetic relations are supported, got {}",
            available.len(),
            cfg.relations
        )));
    }
    let mut rng = derive_rng(cfg.seed, &["synth"]);
    let chosen: Vec<(i64, i64)> = available
        .choose_multiple(&mut rng, cfg.relations as usize)
        .copied()
        .collect();

    let (w, h) = (cfg.width as i64, cfg.height as i64);
    let mut facts = Vec::new();
    for (r, (dx, dy)) in chosen.iter().enumerate() {
        for y in 0..h {
            for x in 0..w {
                let (tx, ty) = (x + dx, y + dy);
                if (0..w).contains(&tx) && (0..h).contains(&ty) {
                    facts.push(Triple::new((y * w + x) as u32, r as u32, (ty * w + tx) as u32));
                }
            }
        }
    }
    if cfg.triples > facts.len() {
        return Err(Error::config(format!(
            "grid only holds {} facts, {} requested",
            facts.len(),
            cfg.triples
        )));
    }
    let mut picked = sample(&mut rng, facts.len(), cfg.triples).into_vec();
    picked.sort_unstable();

    let mut vocab = Vocabulary::new();
    for e in 0..cfg.entities() {
        vocab.entities.intern(&format!("e{e}"));
    }
    for r in 0..cfg.relations {
        vocab.relations.intern(&format!("r{r}"));
    }
    let (store, _) = TripleStore::from_triples(picked.into_iter().map(|i| facts[i]));
    Ok((store, vocab))
}
