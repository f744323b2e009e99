//! Helpers shared by the integration tests.
#![allow(dead_code)]

use fede_core::checkpoint::{Checkpoint, RunState};
use fede_core::config::{RunConfig, Setting};
use fede_core::eval::Metrics;
use fede_core::experiment::{advance, evaluate_checkpoint, new_state};
use fede_core::kg::{federate_split, FederatedDataset, SplitConfig, SplitKind};
use fede_core::run::ShardEval;
use fede_core::synth::{generate, SynthConfig};

/// Settings small enough for one laptop core: 32-dimensional TransE on the
/// 200-entity synthetic graph.
pub fn desk_config(setting: Setting, seed: u64) -> RunConfig {
    let mut cfg = RunConfig {
        setting,
        seed,
        ..RunConfig::default()
    };
    cfg.model.dim = 32;
    cfg.model.negatives = 32;
    cfg.model.gamma = 4.0;
    cfg.optimizer.lr = 0.05;
    cfg.federation.batch_size = 128;
    cfg.federation.max_rounds = 200;
    cfg.federation.eval_every = 5;
    cfg.federation.patience = 5;
    cfg.local.batch_size = 128;
    cfg.local.max_epochs = 600;
    cfg.local.eval_every = 10;
    cfg.local.patience = 5;
    cfg.fusion.epochs = 3000;
    cfg.fusion.negatives = 8;
    cfg
}

/// The synthetic graph for `seed`, split by relation over `clients` clients.
pub fn synth_dataset(seed: u64, clients: usize) -> FederatedDataset {
    let (store, vocab) = generate(&SynthConfig::new(seed)).unwrap();
    federate_split(&store, &vocab, &SplitConfig::new(clients, seed)).unwrap()
}

/// Trains to completion in memory, without touching the file system.
pub fn train(cfg: &RunConfig, dataset: &FederatedDataset) -> Checkpoint {
    let mut state: RunState = new_state(cfg, dataset).unwrap();
    let evals = ShardEval::all(&dataset.shards);
    assert!(advance(&mut state, cfg, &evals, u64::MAX).unwrap());
    Checkpoint {
        config: cfg.clone(),
        state,
    }
}

/// Per-client and weighted metrics of a checkpoint's best parameters.
pub fn metrics(ckpt: &Checkpoint, dataset: &FederatedDataset, split: SplitKind) -> (Vec<Metrics>, Metrics) {
    evaluate_checkpoint(ckpt, dataset, split, ckpt.config.directions(), 1).unwrap()
}
