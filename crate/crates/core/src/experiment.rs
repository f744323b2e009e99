//! End-to-end runs: training with periodic checkpoints and metrics logs,
//! evaluation of saved checkpoints, fusion, and hyperparameter sweeps.

use std::fs;
use std::path::{Path, PathBuf};

use crate::checkpoint::{Checkpoint, FusedRun, RunState};
use crate::config::{RunConfig, Setting};
use crate::eval::{format_log, weighted_average, Directions, Metrics, MetricsRecord};
use crate::federation::FedRun;
use crate::fusion::{train_fusion, FusedScorer, FusionModel};
use crate::kg::{load_manifest, FederatedDataset, SplitKind};
use crate::model::KgeModel;
use crate::rng::derive_rng;
use crate::run::{records, ShardEval};
use crate::settings::{EntireRun, SingleRun};
use crate::{Error, Result};

pub const CONFIG_FILE: &str = "config.toml";
pub const METRICS_FILE: &str = "metrics.tsv";
pub const CHECKPOINT_FILE: &str = "model.ckpt";

/// Runs `f` on a dedicated pool of `threads` workers.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::config(format!("cannot start {threads} worker threads: {e}")))?;
    Ok(pool.install(f))
}

pub fn load_dataset(cfg: &RunConfig) -> Result<FederatedDataset> {
    Ok(load_manifest(&cfg.data.manifest)?.0)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn new_state(cfg: &RunConfig, dataset: &FederatedDataset) -> Result<RunState> {
    let (kind, hyper, seed) = (cfg.kind(), cfg.hyper(), cfg.seed);
    Ok(match cfg.setting {
        Setting::Single => RunState::Single(SingleRun::new(dataset, kind, &hyper, seed)?),
        Setting::Entire => RunState::Entire(EntireRun::new(dataset, kind, &hyper, seed)?),
        Setting::Fed => RunState::Fed(FedRun::new(dataset, kind, &hyper, seed)?),
    })
}

/// Trains up to epoch or round `limit` (capped by the configured maximum).
/// Returns `true` once the run has nothing left to do.
pub fn advance(state: &mut RunState, cfg: &RunConfig, evals: &[ShardEval], limit: u64) -> Result<bool> {
    let (hyper, opt, dirs) = (cfg.hyper(), cfg.optimizer(), cfg.directions());
    match state {
        RunState::Single(run) => {
            let mut local = cfg.local();
            local.max_epochs = local.max_epochs.min(limit);
            run.train(evals, &local, &hyper, &opt, dirs)?;
            Ok(run
                .clients
                .iter()
                .all(|c| c.progress.stopped || c.epoch >= cfg.local.max_epochs))
        }
        RunState::Entire(run) => {
            let mut local = cfg.local();
            local.max_epochs = local.max_epochs.min(limit);
            run.train(evals, &local, &hyper, &opt, dirs)?;
            Ok(run.progress.stopped || run.epoch >= cfg.local.max_epochs)
        }
        RunState::Fed(run) => {
            let mut rounds = cfg.rounds();
            rounds.max_rounds = rounds.max_rounds.min(limit);
            run.train(evals, &rounds, &hyper, &opt, dirs)?;
            Ok(run.progress.stopped || run.server.round >= cfg.federation.max_rounds)
        }
        RunState::Fused(_) => Err(Error::config("a fused checkpoint cannot be trained further")),
    }
}

fn step_of(state: &RunState) -> u64 {
    match state {
        // Clients stop independently; the slowest one still training sets the pace.
        RunState::Single(run) => run
            .clients
            .iter()
            .filter(|c| !c.progress.stopped)
            .map(|c| c.epoch)
            .min()
            .unwrap_or_else(|| run.clients.iter().map(|c| c.epoch).max().unwrap_or(0)),
        RunState::Entire(run) => run.epoch,
        RunState::Fed(run) => run.server.round,
        RunState::Fused(_) => 0,
    }
}

/// Outcome of a training run.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub checkpoint: Checkpoint,
    pub test: Vec<Metrics>,
    pub test_average: Metrics,
    pub output: PathBuf,
}

/// Trains per `cfg`, writing into `cfg.output`: the effective config, the
/// metrics log and a checkpoint refreshed at every evaluation point. With
/// `resume`, training continues from the checkpoint already there.
pub fn train(cfg: &RunConfig, dataset: &FederatedDataset, resume: bool) -> Result<TrainReport> {
    cfg.validate()?;
    let out = cfg.output.clone();
    fs::create_dir_all(&out).map_err(|e| Error::io(format!("creating {}", out.display()), e))?;
    write_file(&out.join(CONFIG_FILE), &cfg.to_toml())?;
    let ckpt_path = out.join(CHECKPOINT_FILE);

    let mut state = if resume && ckpt_path.exists() {
        let ckpt = Checkpoint::load(&ckpt_path, dataset)?;
        // Thread count does not affect results, so it may change between sessions.
        let stored = RunConfig {
            threads: cfg.threads,
            ..ckpt.config.clone()
        };
        if stored != *cfg {
            return Err(Error::config(format!(
                "{} was written with a different configuration",
                ckpt_path.display()
            )));
        }
        log::info!("resuming {} from step {}", cfg.setting.as_str(), step_of(&ckpt.state));
        ckpt.state
    } else {
        new_state(cfg, dataset)?
    };

    let evals = ShardEval::all(&dataset.shards);
    let chunk = match cfg.setting {
        Setting::Fed => cfg.federation.eval_every,
        _ => cfg.local.eval_every,
    }
    .max(1);
    let checkpoint = with_threads(cfg.threads, || -> Result<Checkpoint> {
        loop {
            let limit = (step_of(&state) / chunk + 1) * chunk;
            let done = advance(&mut state, cfg, &evals, limit)?;
            let ckpt = Checkpoint {
                config: cfg.clone(),
                state,
            };
            ckpt.save(&ckpt_path, dataset)?;
            write_file(&out.join(METRICS_FILE), &format_log(&ckpt.state.history()))?;
            state = ckpt.state;
            if done {
                return Ok(Checkpoint {
                    config: cfg.clone(),
                    state,
                });
            }
        }
    })??;

    let (test, avg) = evaluate_checkpoint(&checkpoint, dataset, SplitKind::Test, cfg.directions(), cfg.threads)?;
    let mut log = checkpoint.state.history();
    log.extend(records(step_of(&checkpoint.state), SplitKind::Test, &test).0);
    write_file(&out.join(METRICS_FILE), &format_log(&log))?;
    Ok(TrainReport {
        checkpoint,
        test,
        test_average: avg,
        output: out,
    })
}

/// Per-client metrics of a checkpoint's best parameters on `split`, plus
/// the weighted average. Fused checkpoints are scored by their combiners.
pub fn evaluate_checkpoint(
    ckpt: &Checkpoint,
    dataset: &FederatedDataset,
    split: SplitKind,
    directions: Directions,
    threads: usize,
) -> Result<(Vec<Metrics>, Metrics)> {
    let evals = ShardEval::all(&dataset.shards);
    let per_client = with_threads(threads, || -> Result<Vec<Metrics>> {
        Ok(match &ckpt.state {
            RunState::Fused(run) => evals
                .iter()
                .enumerate()
                .map(|(c, e)| {
                    let scorer = FusedScorer {
                        model: run.combiners[c],
                        single: &run.single[c],
                        fed: &run.fed[c],
                    };
                    e.evaluate(&scorer, split, directions)
                })
                .collect(),
            _ => {
                let models = ckpt.client_models(dataset)?;
                evals
                    .iter()
                    .zip(&models)
                    .map(|(e, m)| e.evaluate(m, split, directions))
                    .collect()
            }
        })
    })??;
    let avg = weighted_average(&per_client);
    Ok((per_client, avg))
}

/// Per-client metrics on one split before and after fusion.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionReport {
    pub split: SplitKind,
    pub single: Vec<Metrics>,
    pub fed: Vec<Metrics>,
    pub fused: Vec<Metrics>,
}

impl FusionReport {
    pub fn records(&self) -> Vec<MetricsRecord> {
        let mut out = Vec::new();
        for (step, per_client) in [(0, &self.single), (1, &self.fed), (2, &self.fused)] {
            out.extend(records(step, self.split, per_client).0);
        }
        out
    }
}

/// Fits one combiner per client over the single-setting and federated
/// models, on `cfg.fusion.fit_split`. Each client's negatives come from its
/// own stream.
pub fn fuse_models(
    cfg: &RunConfig,
    dataset: &FederatedDataset,
    single: Vec<KgeModel>,
    fed: Vec<KgeModel>,
) -> Result<FusedRun> {
    let fusion = cfg.fusion();
    let combiners = with_threads(cfg.threads, || {
        dataset
            .shards
            .iter()
            .enumerate()
            .map(|(c, shard)| {
                let mut model = FusionModel::default();
                let mut rng = derive_rng(cfg.seed, &["fusion", &c.to_string()]);
                train_fusion(
                    &mut model,
                    &single[c],
                    &fed[c],
                    shard.split(fusion.fit_split).triples(),
                    shard.vocab.num_entities() as u32,
                    &fusion,
                    &mut rng,
                )?;
                Ok(model)
            })
            .collect::<Result<Vec<_>>>()
    })??;
    Ok(FusedRun {
        single,
        fed,
        combiners,
        history: Vec::new(),
    })
}

/// Fuses two checkpoints of the same dataset and reports every split in
/// `splits` for the two components and the fused scorer.
pub fn fuse(
    single: &Checkpoint,
    fed: &Checkpoint,
    cfg: &RunConfig,
    dataset: &FederatedDataset,
    splits: &[SplitKind],
) -> Result<(Checkpoint, Vec<FusionReport>)> {
    cfg.fusion().validate()?;
    let mut run = fuse_models(cfg, dataset, single.client_models(dataset)?, fed.client_models(dataset)?)?;
    let evals = ShardEval::all(&dataset.shards);
    let dirs = cfg.directions();
    let reports = with_threads(cfg.threads, || {
        splits
            .iter()
            .map(|&split| {
                let component = |models: &[KgeModel]| -> Vec<Metrics> {
                    evals.iter().zip(models).map(|(e, m)| e.evaluate(m, split, dirs)).collect()
                };
                let fused = evals
                    .iter()
                    .enumerate()
                    .map(|(c, e)| {
                        let scorer = FusedScorer {
                            model: run.combiners[c],
                            single: &run.single[c],
                            fed: &run.fed[c],
                        };
                        e.evaluate(&scorer, split, dirs)
                    })
                    .collect();
                FusionReport {
                    split,
                    single: component(&run.single),
                    fed: component(&run.fed),
                    fused,
                }
            })
            .collect::<Vec<_>>()
    })?;
    run.history = reports.iter().flat_map(FusionReport::records).collect();
    Ok((
        Checkpoint {
            config: cfg.clone(),
            state: RunState::Fused(run),
        },
        reports,
    ))
}

/// One federated run of a sweep grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub fraction: f64,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// First round whose weighted validation Hits@10 reached the threshold.
    pub rounds_to_threshold: Option<u64>,
    pub rounds: u64,
    pub best_valid_mrr: f64,
}

pub const SWEEP_HEADER: &str = "#fraction\tlocal_epochs\tbatch_size\tseed\trounds_to_threshold\trounds\tbest_valid_mrr";

impl std::fmt::Display for SweepPoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let reached = self.rounds_to_threshold.map_or("-".to_string(), |r| r.to_string());
        write!(
            f,
            "{}\t{}\t{}\t{}\t{reached}\t{}\t{:.6}",
            self.fraction, self.local_epochs, self.batch_size, self.seed, self.rounds, self.best_valid_mrr
        )
    }
}

/// Federated training that evaluates validation metrics after every round,
/// until the weighted Hits@10 reaches `threshold` or `cfg.federation.max_rounds`.
pub fn rounds_to_threshold(cfg: &RunConfig, dataset: &FederatedDataset, threshold: f64) -> Result<SweepPoint> {
    let (hyper, opt, dirs) = (cfg.hyper(), cfg.optimizer(), cfg.directions());
    let rounds = cfg.rounds();
    rounds.validate()?;
    let evals = ShardEval::all(&dataset.shards);
    let mut run = FedRun::new(dataset, cfg.kind(), &hyper, cfg.seed)?;
    let mut point = SweepPoint {
        fraction: rounds.fraction,
        local_epochs: rounds.local_epochs,
        batch_size: rounds.batch_size,
        seed: cfg.seed,
        rounds_to_threshold: None,
        rounds: 0,
        best_valid_mrr: f64::NEG_INFINITY,
    };
    while run.server.round < rounds.max_rounds {
        run.run_round(&rounds, &hyper, &opt)?;
        let avg = weighted_average(&run.evaluate(&evals, SplitKind::Valid, dirs)?);
        point.best_valid_mrr = point.best_valid_mrr.max(avg.mrr);
        if avg.hits10 >= threshold {
            point.rounds_to_threshold = Some(run.server.round);
            break;
        }
    }
    point.rounds = run.server.round;
    Ok(point)
}

/// Every combination of the given fractions, local epochs, batch sizes and
/// seeds, in that nesting order.
pub fn sweep(
    base: &RunConfig,
    dataset: &FederatedDataset,
    fractions: &[f64],
    epochs: &[usize],
    batch_sizes: &[usize],
    seeds: &[u64],
    threshold: f64,
) -> Result<Vec<SweepPoint>> {
    let mut out = Vec::new();
    for &fraction in fractions {
        for &local_epochs in epochs {
            for &batch_size in batch_sizes {
                for &seed in seeds {
                    let mut cfg = base.clone();
                    cfg.federation.fraction = fraction;
                    cfg.federation.local_epochs = local_epochs;
                    cfg.federation.batch_size = batch_size;
                    cfg.seed = seed;
                    cfg.validate()?;
                    let point = with_threads(cfg.threads, || rounds_to_threshold(&cfg, dataset, threshold))??;
                    log::info!("{point}");
                    out.push(point);
                }
            }
        }
    }
    Ok(out)
}
