use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fede_core::checkpoint::Checkpoint;
use fede_core::config::{KindName, RunConfig, Setting};
use fede_core::eval::{Directions, Metrics};
use fede_core::experiment::{self, SWEEP_HEADER};
use fede_core::kg::{federate_split, load_manifest, load_triples, shard_stats, write_split, write_triples, SplitConfig, SplitKind};
use fede_core::synth::{generate, SynthConfig};
use fede_core::{Error, Result};

#[derive(Parser)]
#[command(name = "fede", version, about = "Federated knowledge graph embedding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Partition a triple file into client shards by relation.
    Split {
        /// Tab-separated head, relation, tail file.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        clients: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.1)]
        valid_fraction: f64,
        #[arg(long, default_value_t = 0.1)]
        test_fraction: f64,
        /// Output directory for the shards and manifest.tsv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic grid-structured knowledge graph.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        width: u32,
        #[arg(long, default_value_t = 10)]
        height: u32,
        #[arg(long, default_value_t = 12)]
        relations: u32,
        #[arg(long, default_value_t = 2000)]
        triples: usize,
    },
    /// Train in the single, entire or fed setting.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Continue from the checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Fit per-client combiners over a single-setting and a fed checkpoint.
    Fuse {
        #[arg(long)]
        single: PathBuf,
        #[arg(long)]
        fed: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Evaluate a checkpoint's best parameters.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        split: SplitKind,
        /// Defaults to the directions stored in the checkpoint's config.
        #[arg(long)]
        directions: Option<Directions>,
        /// Dataset manifest; defaults to the one in the checkpoint's config.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Federated runs over a grid of client fractions, local epochs and
    /// batch sizes, reporting rounds until validation Hits@10 reaches a threshold.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',', default_value = "0.2,0.6,1.0")]
        fractions: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        epochs: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        batch_sizes: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
    },
}

/// Config file plus command-line overrides.
#[derive(Args)]
struct RunArgs {
    /// TOML run configuration; every field is optional.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    setting: Option<Setting>,
    #[arg(long)]
    model: Option<KindName>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    fraction: Option<f64>,
    #[arg(long)]
    max_rounds: Option<u64>,
    #[arg(long)]
    max_epochs: Option<u64>,
    #[arg(long)]
    directions: Option<Directions>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($field:expr, $value:expr) => {
                if let Some(v) = $value.clone() {
                    $field = v;
                }
            };
        }
        set!(cfg.setting, self.setting);
        set!(cfg.model.kind, self.model);
        set!(cfg.data.manifest, self.manifest);
        set!(cfg.output, self.output);
        set!(cfg.seed, self.seed);
        set!(cfg.threads, self.threads);
        set!(cfg.model.dim, self.dim);
        set!(cfg.optimizer.lr, self.lr);
        set!(cfg.federation.fraction, self.fraction);
        set!(cfg.federation.max_rounds, self.max_rounds);
        set!(cfg.local.max_epochs, self.max_epochs);
        set!(cfg.eval.directions, self.directions);
        cfg.validate()?;
        Ok(cfg)
    }
}

fn print_metrics(label: &str, per_client: &[Metrics], avg: &Metrics) {
    println!("{label}\tclient\tmrr\thits1\thits5\thits10\tqueries");
    let row = |name: String, m: &Metrics| {
        println!(
            "{label}\t{name}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{}",
            m.mrr, m.hits1, m.hits5, m.hits10, m.count
        )
    };
    for (c, m) in per_client.iter().enumerate() {
        row(c.to_string(), m);
    }
    row("avg".into(), avg);
}

fn load_checkpoint(path: &Path, manifest: Option<&Path>) -> Result<(Checkpoint, fede_core::kg::FederatedDataset)> {
    let bytes = fs::read(path).map_err(|e| Error::Io {
        context: format!("reading {}", path.display()),
        source: e,
    })?;
    let manifest = match manifest {
        Some(m) => m.to_path_buf(),
        None => Checkpoint::read_config(&bytes)?.data.manifest,
    };
    let (dataset, _) = load_manifest(&manifest)?;
    Ok((Checkpoint::decode(&bytes, &dataset)?, dataset))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Split {
            input,
            clients,
            seed,
            valid_fraction,
            test_fraction,
            out,
        } => {
            let (store, vocab) = load_triples(&input, None)?;
            let cfg = SplitConfig {
                clients,
                valid_fraction,
                test_fraction,
                seed,
            };
            let dataset = federate_split(&store, &vocab, &cfg)?;
            let manifest = write_split(&dataset, &out, seed)?;
            println!("{}", shard_stats(&dataset));
            println!("wrote {}", manifest.display());
        }
        Command::Synth {
            out,
            seed,
            width,
            height,
            relations,
            triples,
        } => {
            let cfg = SynthConfig {
                width,
                height,
                relations,
                triples,
                seed,
            };
            let (store, vocab) = generate(&cfg)?;
            write_triples(&out, &store, &vocab)?;
            println!("wrote {} triples over {} entities to {}", store.len(), vocab.num_entities(), out.display());
        }
        Command::Train { run, resume } => {
            let cfg = run.resolve()?;
            eprintln!("# effective configuration\n{}", cfg.to_toml());
            let dataset = experiment::load_dataset(&cfg)?;
            let report = experiment::train(&cfg, &dataset, resume)?;
            print_metrics("test", &report.test, &report.test_average);
            println!("wrote {}", report.output.display());
        }
        Command::Fuse { single, fed, run } => {
            let cfg = run.resolve()?;
            let (single, dataset) = load_checkpoint(&single, run.manifest.as_deref())?;
            let (fed, _) = load_checkpoint(&fed, Some(&single.config.data.manifest))?;
            let mut cfg = cfg;
            cfg.data.manifest = single.config.data.manifest.clone();
            let (fused, reports) =
                experiment::fuse(&single, &fed, &cfg, &dataset, &[SplitKind::Valid, SplitKind::Test])?;
            for r in &reports {
                for (name, per_client) in [("single", &r.single), ("fed", &r.fed), ("fused", &r.fused)] {
                    let avg = fede_core::eval::weighted_average(per_client);
                    print_metrics(&format!("{}/{name}", r.split), per_client, &avg);
                }
            }
            fs::create_dir_all(&cfg.output).map_err(|e| Error::Io {
                context: format!("creating {}", cfg.output.display()),
                source: e,
            })?;
            let path = cfg.output.join("fused.ckpt");
            fused.save(&path, &dataset)?;
            let log = fede_core::eval::format_log(&fused.state.history());
            fs::write(cfg.output.join(experiment::METRICS_FILE), log).map_err(|e| Error::Io {
                context: "writing the fusion metrics".into(),
                source: e,
            })?;
            println!("wrote {}", path.display());
        }
        Command::Eval {
            checkpoint,
            split,
            directions,
            manifest,
            threads,
        } => {
            let (ckpt, dataset) = load_checkpoint(&checkpoint, manifest.as_deref())?;
            let dirs = directions.unwrap_or(ckpt.config.eval.directions);
            let (per_client, avg) = experiment::evaluate_checkpoint(&ckpt, &dataset, split, dirs, threads)?;
            print_metrics(split.as_str(), &per_client, &avg);
        }
        Command::Sweep {
            run,
            fractions,
            epochs,
            batch_sizes,
            seeds,
            threshold,
        } => {
            let cfg = run.resolve()?;
            let dataset = experiment::load_dataset(&cfg)?;
            let epochs = if epochs.is_empty() { vec![cfg.federation.local_epochs] } else { epochs };
            let batch_sizes = if batch_sizes.is_empty() { vec![cfg.federation.batch_size] } else { batch_sizes };
            println!("{SWEEP_HEADER}");
            let points = experiment::sweep(&cfg, &dataset, &fractions, &epochs, &batch_sizes, &seeds, threshold)?;
            for p in points {
                println!("{p}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
