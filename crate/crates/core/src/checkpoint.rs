//! Binary checkpoints.
//!
//! Layout: the 8-byte magic `FEDECKPT`, a little-endian `u32` format
//! version, then sections. Each section is a 4-byte tag, a `u64` payload
//! length and the payload:
//!
//! - `CONF`: the effective run configuration as TOML text;
//! - `VOCB`: per client, its entity labels and relation labels;
//! - `STAT`: a setting byte followed by that setting's training state
//!   (embeddings, optimizer moments and step counters, generator positions,
//!   epoch or round counters, early-stopping record, best parameters);
//! - `HIST`: the metrics history.
//!
//! All integers and floats are little-endian; matrices are row-major `f64`.
//! Training triples are not stored: loading takes the dataset and rebuilds
//! them, after checking that the vocabularies agree.

use std::path::Path;

use crate::config::{RunConfig, Setting};
use crate::embedding::EmbeddingMatrix;
use crate::eval::{Metrics, MetricsRecord};
use crate::federation::{FedRun, FedSnapshot};
use crate::fusion::FusionModel;
use crate::kg::{FederatedDataset, Labels, SplitKind};
use crate::model::{KgeModel, ModelKind};
use crate::optim::AdamState;
use crate::rng::RngState;
use crate::run::Progress;
use crate::settings::{EntireRun, SingleRun};
use crate::train::Trainer;
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"FEDECKPT";
pub const VERSION: u32 = 1;

/// Per-client component models and the fitted combiners.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedRun {
    pub single: Vec<KgeModel>,
    pub fed: Vec<KgeModel>,
    pub combiners: Vec<FusionModel>,
    pub history: Vec<MetricsRecord>,
}

#[derive(Debug, Clone)]
pub enum RunState {
    Single(SingleRun),
    Entire(EntireRun),
    Fed(FedRun),
    Fused(FusedRun),
}

impl RunState {
    fn tag(&self) -> u8 {
        match self {
            RunState::Single(_) => 1,
            RunState::Entire(_) => 2,
            RunState::Fed(_) => 3,
            RunState::Fused(_) => 4,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            RunState::Single(_) => "single",
            RunState::Entire(_) => "entire",
            RunState::Fed(_) => "fed",
            RunState::Fused(_) => "fused",
        }
    }

    pub fn history(&self) -> Vec<MetricsRecord> {
        match self {
            RunState::Single(run) => run.history(),
            RunState::Entire(run) => run.history.clone(),
            RunState::Fed(run) => run.history.clone(),
            RunState::Fused(run) => run.history.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub state: RunState,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn len(&mut self, n: usize) {
        self.u64(n as u64);
    }
    fn str(&mut self, s: &str) {
        self.len(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }
    fn labels<S: AsRef<str>>(&mut self, labels: &[S]) {
        self.len(labels.len());
        for l in labels {
            self.str(l.as_ref());
        }
    }
    fn matrix(&mut self, m: &EmbeddingMatrix) {
        self.len(m.rows());
        self.len(m.dim());
        for v in m.as_slice() {
            self.f64(*v);
        }
    }
    fn adam(&mut self, s: &AdamState) {
        self.matrix(&s.m);
        self.matrix(&s.v);
        self.len(s.steps.len());
        for v in &s.steps {
            self.u64(*v);
        }
    }
    fn model(&mut self, m: &KgeModel) {
        self.matrix(&m.entities);
        self.matrix(&m.relations);
    }
    fn trainer(&mut self, t: &Trainer) {
        self.model(&t.model);
        self.adam(&t.entity_opt);
        self.adam(&t.relation_opt);
    }
    fn rng(&mut self, s: &RngState) {
        self.0.extend_from_slice(&s.seed);
        self.u64(s.stream);
        self.0.extend_from_slice(&s.word_pos.to_le_bytes());
    }
    fn progress(&mut self, p: &Progress) {
        self.f64(p.best_mrr);
        self.u64(p.best_step);
        self.u32(p.bad_evals);
        self.u8(p.stopped as u8);
    }
    fn optional_model(&mut self, m: Option<&KgeModel>) {
        match m {
            None => self.u8(0),
            Some(m) => {
                self.u8(1);
                self.model(m);
            }
        }
    }
    fn records(&mut self, records: &[MetricsRecord]) {
        self.len(records.len());
        for r in records {
            self.u64(r.step);
            self.u64(r.client.map_or(u64::MAX, |c| c as u64));
            self.u8(match r.split {
                SplitKind::Train => 0,
                SplitKind::Valid => 1,
                SplitKind::Test => 2,
            });
            let m = &r.metrics;
            for v in [m.mrr, m.hits1, m.hits5, m.hits10] {
                self.f64(v);
            }
            self.len(m.count);
        }
    }
    fn section(&mut self, tag: &[u8; 4], payload: Writer) {
        self.0.extend_from_slice(tag);
        self.len(payload.0.len());
        self.0.extend_from_slice(&payload.0);
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

fn malformed(message: impl Into<String>) -> Error {
    Error::Format {
        what: "checkpoint",
        message: message.into(),
    }
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| malformed(format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }
    fn len(&mut self) -> Result<usize> {
        let n = self.u64()?;
        let n = usize::try_from(n).map_err(|_| malformed("length overflows"))?;
        if n > self.bytes.len() {
            return Err(malformed(format!("length {n} exceeds the file size")));
        }
        Ok(n)
    }
    fn bool(&mut self) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(malformed(format!("invalid flag byte {b}"))),
        }
    }
    fn str(&mut self) -> Result<&'a str> {
        let n = self.len()?;
        std::str::from_utf8(self.take(n)?).map_err(|_| malformed("label is not UTF-8"))
    }
    fn labels(&mut self) -> Result<Vec<&'a str>> {
        let n = self.len()?;
        (0..n).map(|_| self.str()).collect()
    }
    fn matrix(&mut self) -> Result<EmbeddingMatrix> {
        let rows = self.len()?;
        let dim = self.len()?;
        let count = rows
            .checked_mul(dim)
            .filter(|c| c.saturating_mul(8) <= self.bytes.len() - self.pos)
            .ok_or_else(|| malformed("matrix exceeds the file size"))?;
        let data = (0..count).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
        Ok(EmbeddingMatrix::from_vec(rows, dim, data))
    }
    fn matrix_like(&mut self, like: &EmbeddingMatrix, what: &str) -> Result<EmbeddingMatrix> {
        let m = self.matrix()?;
        if !m.same_shape(like) {
            return Err(malformed(format!(
                "{what} is {}x{}, the dataset implies {}x{}",
                m.rows(),
                m.dim(),
                like.rows(),
                like.dim()
            )));
        }
        Ok(m)
    }
    fn adam_like(&mut self, like: &EmbeddingMatrix, what: &str) -> Result<AdamState> {
        let m = self.matrix_like(like, what)?;
        let v = self.matrix_like(like, what)?;
        let n = self.len()?;
        if n != like.rows() {
            return Err(malformed(format!("{what} has {n} step counters for {} rows", like.rows())));
        }
        let steps = (0..n).map(|_| self.u64()).collect::<Result<Vec<_>>>()?;
        Ok(AdamState { m, v, steps })
    }
    fn model_like(&mut self, like: &KgeModel) -> Result<KgeModel> {
        Ok(KgeModel {
            kind: like.kind,
            entities: self.matrix_like(&like.entities, "entity matrix")?,
            relations: self.matrix_like(&like.relations, "relation matrix")?,
        })
    }
    fn trainer_like(&mut self, like: &Trainer) -> Result<Trainer> {
        let model = self.model_like(&like.model)?;
        let entity_opt = self.adam_like(&model.entities, "entity optimizer state")?;
        let relation_opt = self.adam_like(&model.relations, "relation optimizer state")?;
        Ok(Trainer {
            model,
            entity_opt,
            relation_opt,
        })
    }
    fn rng(&mut self) -> Result<RngState> {
        Ok(RngState {
            seed: self.array()?,
            stream: self.u64()?,
            word_pos: u128::from_le_bytes(self.array()?),
        })
    }
    fn progress(&mut self) -> Result<Progress> {
        Ok(Progress {
            best_mrr: self.f64()?,
            best_step: self.u64()?,
            bad_evals: self.u32()?,
            stopped: self.bool()?,
        })
    }
    fn optional_model_like(&mut self, like: &KgeModel) -> Result<Option<KgeModel>> {
        Ok(if self.bool()? { Some(self.model_like(like)?) } else { None })
    }
    fn records(&mut self) -> Result<Vec<MetricsRecord>> {
        let n = self.len()?;
        (0..n)
            .map(|_| {
                let step = self.u64()?;
                let client = match self.u64()? {
                    u64::MAX => None,
                    c => Some(c as usize),
                };
                let split = match self.u8()? {
                    0 => SplitKind::Train,
                    1 => SplitKind::Valid,
                    2 => SplitKind::Test,
                    b => return Err(malformed(format!("invalid split byte {b}"))),
                };
                let metrics = Metrics {
                    mrr: self.f64()?,
                    hits1: self.f64()?,
                    hits5: self.f64()?,
                    hits10: self.f64()?,
                    count: usize::try_from(self.u64()?).map_err(|_| malformed("query count overflows"))?,
                };
                Ok(MetricsRecord {
                    step,
                    client,
                    split,
                    metrics,
                })
            })
            .collect()
    }
    fn section(&mut self, tag: &[u8; 4]) -> Result<Reader<'a>> {
        let found = self.array::<4>()?;
        if &found != tag {
            return Err(malformed(format!(
                "expected section {}, found {}",
                String::from_utf8_lossy(tag),
                String::from_utf8_lossy(&found)
            )));
        }
        let n = self.len()?;
        Ok(Reader::new(self.take(n)?))
    }
    fn finish(&self, what: &str) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(malformed(format!("{} trailing bytes in {what}", self.bytes.len() - self.pos)));
        }
        Ok(())
    }
}

fn client_vocab(dataset: &FederatedDataset) -> Vec<(&Labels, &Labels)> {
    dataset
        .shards
        .iter()
        .map(|s| (&s.vocab.entities, &s.vocab.relations))
        .collect()
}

fn encode_state(state: &RunState, w: &mut Writer) {
    w.u8(state.tag());
    match state {
        RunState::Single(run) => {
            w.len(run.clients.len());
            for c in &run.clients {
                w.trainer(&c.trainer);
                w.rng(&RngState::capture(&c.source.rng));
                w.u64(c.epoch);
                w.progress(&c.progress);
                w.optional_model(c.best.as_ref());
            }
        }
        RunState::Entire(run) => {
            w.trainer(&run.trainer);
            w.len(run.sources.len());
            for s in &run.sources {
                w.rng(&RngState::capture(&s.rng));
            }
            w.u64(run.epoch);
            w.progress(&run.progress);
            w.optional_model(run.best.as_ref());
        }
        RunState::Fed(run) => {
            w.matrix(&run.server.entities);
            w.u64(run.server.round);
            w.rng(&RngState::capture(&run.server.sampler));
            w.len(run.clients.len());
            for c in &run.clients {
                w.trainer(&c.trainer);
                w.rng(&RngState::capture(&c.source.rng));
            }
            w.progress(&run.progress);
            match &run.best {
                None => w.u8(0),
                Some(best) => {
                    w.u8(1);
                    w.u64(best.round);
                    w.matrix(&best.entities);
                    for r in &best.relations {
                        w.matrix(r);
                    }
                }
            }
        }
        RunState::Fused(run) => {
            w.len(run.combiners.len());
            for ((s, f), m) in run.single.iter().zip(&run.fed).zip(&run.combiners) {
                w.model(s);
                w.model(f);
                w.f64(m.weights[0]);
                w.f64(m.weights[1]);
                w.f64(m.bias);
            }
        }
    }
}

fn expect_clients(r: &mut Reader, n: usize) -> Result<()> {
    let found = r.len()?;
    if found != n {
        return Err(malformed(format!("state holds {found} clients, the dataset has {n}")));
    }
    Ok(())
}

fn decode_state(
    r: &mut Reader,
    config: &RunConfig,
    dataset: &FederatedDataset,
    history: Vec<MetricsRecord>,
) -> Result<RunState> {
    let (kind, hyper, seed) = (config.kind(), config.hyper(), config.seed);
    let n = dataset.num_clients();
    let tag = r.u8()?;
    let state = match tag {
        1 => {
            let mut run = SingleRun::new(dataset, kind, &hyper, seed)?;
            expect_clients(r, n)?;
            for c in &mut run.clients {
                c.trainer = r.trainer_like(&c.trainer)?;
                c.source.rng = r.rng()?.restore();
                c.epoch = r.u64()?;
                c.progress = r.progress()?;
                c.best = r.optional_model_like(&c.trainer.model)?;
            }
            let mut per_client = vec![Vec::new(); n];
            for rec in history {
                let c = rec.client.filter(|&c| c < n).ok_or_else(|| {
                    malformed("single-setting history record without a valid client")
                })?;
                per_client[c].push(rec);
            }
            for (c, h) in run.clients.iter_mut().zip(per_client) {
                c.history = h;
            }
            RunState::Single(run)
        }
        2 => {
            let mut run = EntireRun::new(dataset, kind, &hyper, seed)?;
            run.trainer = r.trainer_like(&run.trainer)?;
            expect_clients(r, n)?;
            for s in &mut run.sources {
                s.rng = r.rng()?.restore();
            }
            run.epoch = r.u64()?;
            run.progress = r.progress()?;
            run.best = r.optional_model_like(&run.trainer.model)?;
            run.history = history;
            RunState::Entire(run)
        }
        3 => {
            let mut run = FedRun::new(dataset, kind, &hyper, seed)?;
            run.server.entities = r.matrix_like(&run.server.entities, "server entity matrix")?;
            run.server.round = r.u64()?;
            run.server.sampler = r.rng()?.restore();
            expect_clients(r, n)?;
            for c in &mut run.clients {
                c.trainer = r.trainer_like(&c.trainer)?;
                c.source.rng = r.rng()?.restore();
            }
            run.progress = r.progress()?;
            run.best = if r.bool()? {
                let round = r.u64()?;
                let entities = r.matrix_like(&run.server.entities, "best entity matrix")?;
                let relations = run
                    .clients
                    .iter()
                    .map(|c| r.matrix_like(&c.trainer.model.relations, "best relation matrix"))
                    .collect::<Result<Vec<_>>>()?;
                Some(FedSnapshot {
                    round,
                    entities,
                    relations,
                })
            } else {
                None
            };
            run.history = history;
            RunState::Fed(run)
        }
        4 => {
            expect_clients(r, n)?;
            let mut out = FusedRun {
                single: Vec::with_capacity(n),
                fed: Vec::with_capacity(n),
                combiners: Vec::with_capacity(n),
                history,
            };
            for shard in &dataset.shards {
                let like = KgeModel::init(kind, &shard.vocab.entities, &shard.vocab.relations, hyper.dim, seed);
                out.single.push(r.model_like(&like)?);
                out.fed.push(r.model_like(&like)?);
                out.combiners.push(FusionModel {
                    weights: [r.f64()?, r.f64()?],
                    bias: r.f64()?,
                });
            }
            RunState::Fused(out)
        }
        other => return Err(malformed(format!("unknown state tag {other}"))),
    };
    Ok(state)
}

impl Checkpoint {
    pub fn encode(&self, dataset: &FederatedDataset) -> Vec<u8> {
        let mut out = Writer(Vec::new());
        out.0.extend_from_slice(MAGIC);
        out.u32(VERSION);

        let mut conf = Writer(Vec::new());
        conf.0.extend_from_slice(self.config.to_toml().as_bytes());
        out.section(b"CONF", conf);

        let mut vocab = Writer(Vec::new());
        let vocabularies = client_vocab(dataset);
        vocab.len(vocabularies.len());
        for (e, r) in vocabularies {
            vocab.labels(e.names());
            vocab.labels(r.names());
        }
        out.section(b"VOCB", vocab);

        let mut state = Writer(Vec::new());
        encode_state(&self.state, &mut state);
        out.section(b"STAT", state);

        let mut hist = Writer(Vec::new());
        hist.records(&self.state.history());
        out.section(b"HIST", hist);
        out.0
    }

    /// Reads only the header and configuration.
    pub fn read_config(bytes: &[u8]) -> Result<RunConfig> {
        let mut r = Reader::new(bytes);
        Self::header(&mut r)?;
        Self::config_section(&mut r)
    }

    fn header(r: &mut Reader) -> Result<()> {
        if r.take(MAGIC.len()).ok() != Some(MAGIC.as_slice()) {
            return Err(malformed("bad magic"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(malformed(format!("unsupported version {version}")));
        }
        Ok(())
    }

    fn config_section(r: &mut Reader) -> Result<RunConfig> {
        let conf = r.section(b"CONF")?;
        let text = std::str::from_utf8(conf.bytes).map_err(|_| malformed("configuration is not UTF-8"))?;
        RunConfig::from_toml(text)
    }

    /// Decodes a checkpoint against the dataset it was trained on.
    pub fn decode(bytes: &[u8], dataset: &FederatedDataset) -> Result<Self> {
        let mut r = Reader::new(bytes);
        Self::header(&mut r)?;
        let config = Self::config_section(&mut r)?;

        let mut vocab = r.section(b"VOCB")?;
        let expected = client_vocab(dataset);
        let clients = vocab.len()?;
        if clients != expected.len() {
            return Err(Error::VocabMismatch(format!(
                "checkpoint has {clients} clients, dataset has {}",
                expected.len()
            )));
        }
        for (c, (e, rel)) in expected.iter().enumerate() {
            if vocab.labels()? != e.names() {
                return Err(Error::VocabMismatch(format!("entity labels of client {c} differ")));
            }
            if vocab.labels()? != rel.names() {
                return Err(Error::VocabMismatch(format!("relation labels of client {c} differ")));
            }
        }
        vocab.finish("vocabulary section")?;

        let mut stat = r.section(b"STAT")?;
        let mut hist = r.section(b"HIST")?;
        let history = hist.records()?;
        hist.finish("history section")?;
        let state = decode_state(&mut stat, &config, dataset, history)?;
        stat.finish("state section")?;
        r.finish("checkpoint")?;

        let setting_matches = matches!(
            (&state, config.setting),
            (RunState::Single(_), Setting::Single)
                | (RunState::Entire(_), Setting::Entire)
                | (RunState::Fed(_), Setting::Fed)
                | (RunState::Fused(_), _)
        );
        if !setting_matches {
            return Err(malformed(format!(
                "state is `{}` but the configuration says `{}`",
                state.name(),
                config.setting.as_str()
            )));
        }
        Ok(Checkpoint { config, state })
    }

    /// Writes through a temporary file so a crash never leaves a torn checkpoint.
    pub fn save(&self, path: &Path, dataset: &FederatedDataset) -> Result<()> {
        let bytes = self.encode(dataset);
        let tmp = path.with_extension("ckpt.tmp");
        std::fs::write(&tmp, &bytes).map_err(|e| Error::io(format!("writing {}", tmp.display()), e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(format!("renaming to {}", path.display()), e))
    }

    pub fn load(path: &Path, dataset: &FederatedDataset) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::decode(&bytes, dataset)
    }

    /// Per-client models in each client's local id space, as used for
    /// evaluation: the best parameters where a best was recorded.
    /// For a fused checkpoint these are the federated components.
    pub fn client_models(&self, dataset: &FederatedDataset) -> Result<Vec<KgeModel>> {
        let kind: ModelKind = self.config.kind();
        Ok(match &self.state {
            RunState::Single(run) => run.best_models().into_iter().cloned().collect(),
            RunState::Entire(run) => (0..dataset.num_clients())
                .map(|c| run.client_model(run.best_or_current(), c))
                .collect(),
            RunState::Fed(run) => {
                let best = run.best_or_current();
                (0..dataset.num_clients())
                    .map(|c| best.client_model(&run.server.table, kind, c))
                    .collect()
            }
            RunState::Fused(run) => run.fed.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::Directions;
    use crate::kg::ClientShard;
    use crate::run::ShardEval;

    fn dataset() -> FederatedDataset {
        let a = ClientShard::from_labelled(
            0,
            &[["a", "r1", "b"], ["b", "r1", "c"], ["c", "r2", "a"], ["a", "r2", "b"]],
            &[["b", "r2", "a"]],
            &[["c", "r1", "b"]],
        );
        let b = ClientShard::from_labelled(
            1,
            &[["c", "r3", "d"], ["d", "r3", "e"], ["e", "r4", "c"]],
            &[["d", "r4", "c"]],
            &[["e", "r3", "d"]],
        );
        FederatedDataset::from_shards(vec![a, b]).unwrap()
    }

    fn config(setting: Setting) -> RunConfig {
        let mut cfg = RunConfig {
            setting,
            ..RunConfig::default()
        };
        cfg.model.dim = 4;
        cfg.model.negatives = 2;
        cfg.local.max_epochs = 4;
        cfg.local.eval_every = 2;
        cfg.local.batch_size = 2;
        cfg.federation.max_rounds = 4;
        cfg.federation.eval_every = 2;
        cfg.federation.batch_size = 2;
        cfg.federation.local_epochs = 1;
        cfg
    }

    fn trained(setting: Setting, ds: &FederatedDataset) -> Checkpoint {
        let cfg = config(setting);
        let (kind, hyper, opt, dirs) = (cfg.kind(), cfg.hyper(), cfg.optimizer(), Directions::Both);
        let evals = ShardEval::all(&ds.shards);
        let state = match setting {
            Setting::Single => {
                let mut run = SingleRun::new(ds, kind, &hyper, 3).unwrap();
                run.train(&evals, &cfg.local(), &hyper, &opt, dirs).unwrap();
                RunState::Single(run)
            }
            Setting::Entire => {
                let mut run = EntireRun::new(ds, kind, &hyper, 3).unwrap();
                run.train(&evals, &cfg.local(), &hyper, &opt, dirs).unwrap();
                RunState::Entire(run)
            }
            Setting::Fed => {
                let mut run = FedRun::new(ds, kind, &hyper, 3).unwrap();
                run.train(&evals, &cfg.rounds(), &hyper, &opt, dirs).unwrap();
                RunState::Fed(run)
            }
        };
        Checkpoint { config: cfg, state }
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let ds = dataset();
        for setting in [Setting::Single, Setting::Entire, Setting::Fed] {
            let ckpt = trained(setting, &ds);
            let bytes = ckpt.encode(&ds);
            let back = Checkpoint::decode(&bytes, &ds).unwrap();
            assert_eq!(back.encode(&ds), bytes, "{setting:?}");
            assert_eq!(back.client_models(&ds).unwrap(), ckpt.client_models(&ds).unwrap());
            assert_eq!(back.state.history(), ckpt.state.history());
        }
    }

    #[test]
    fn fused_state_round_trips() {
        let ds = dataset();
        let models = trained(Setting::Fed, &ds).client_models(&ds).unwrap();
        let ckpt = Checkpoint {
            config: config(Setting::Fed),
            state: RunState::Fused(FusedRun {
                single: models.clone(),
                fed: models,
                combiners: vec![FusionModel { weights: [0.25, -1.5], bias: 3.0 }, FusionModel::default()],
                // Query counts are plain integers, not lengths of anything in the file.
                history: vec![MetricsRecord {
                    step: 0,
                    client: None,
                    split: SplitKind::Test,
                    metrics: Metrics {
                        count: 1 << 40,
                        ..Metrics::default()
                    },
                }],
            }),
        };
        let bytes = ckpt.encode(&ds);
        let back = Checkpoint::decode(&bytes, &ds).unwrap();
        assert_eq!(back.encode(&ds), bytes);
        let RunState::Fused(run) = back.state else { panic!() };
        assert_eq!(run.combiners[0].weights, [0.25, -1.5]);
        assert_eq!(run.history[0].metrics.count, 1 << 40);
    }

    #[test]
    fn rejects_corruption_and_foreign_datasets() {
        let ds = dataset();
        let bytes = trained(Setting::Fed, &ds).encode(&ds);
        assert!(Checkpoint::decode(&bytes[..bytes.len() - 1], &ds).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::decode(&bad, &ds).is_err());
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(Checkpoint::decode(&longer, &ds).is_err());

        let other = FederatedDataset::from_shards(vec![
            ds.shards[0].clone(),
            ClientShard::from_labelled(1, &[["c", "r3", "q"]], &[], &[]),
        ])
        .unwrap();
        assert!(matches!(Checkpoint::decode(&bytes, &other), Err(Error::VocabMismatch(_))));
        assert_eq!(Checkpoint::read_config(&bytes).unwrap(), config(Setting::Fed));
    }

    #[test]
    fn resumed_training_matches_uninterrupted() {
        let ds = dataset();
        let evals = ShardEval::all(&ds.shards);
        let cfg = config(Setting::Fed);
        let (hyper, opt) = (cfg.hyper(), cfg.optimizer());
        let mut full = FedRun::new(&ds, cfg.kind(), &hyper, 3).unwrap();
        full.train(&evals, &cfg.rounds(), &hyper, &opt, Directions::Both).unwrap();

        let mut half = cfg.rounds();
        half.max_rounds = 2;
        let mut first = FedRun::new(&ds, cfg.kind(), &hyper, 3).unwrap();
        first.train(&evals, &half, &hyper, &opt, Directions::Both).unwrap();
        let bytes = Checkpoint { config: cfg.clone(), state: RunState::Fed(first) }.encode(&ds);
        let RunState::Fed(mut resumed) = Checkpoint::decode(&bytes, &ds).unwrap().state else { panic!() };
        resumed.train(&evals, &cfg.rounds(), &hyper, &opt, Directions::Both).unwrap();

        let a = Checkpoint { config: cfg.clone(), state: RunState::Fed(full) }.encode(&ds);
        let b = Checkpoint { config: cfg, state: RunState::Fed(resumed) }.encode(&ds);
        assert_eq!(a, b);
    }
}
