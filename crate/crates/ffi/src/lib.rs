//! C ABI over `fede-core`.
//!
//! Every fallible function returns a [`FedeStatus`]; on failure a message is
//! available from [`fede_last_error`] on the same thread. Objects are opaque
//! handles created by `*_load`/`*_new`/`*_decode` functions and released by
//! the matching `*_free`. Output pointers are written only on success.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use fede_core::checkpoint::{Checkpoint, RunState};
use fede_core::config::RunConfig;
use fede_core::embedding::EmbeddingMatrix;
use fede_core::eval::{Directions, Metrics, TripleScorer};
use fede_core::experiment;
use fede_core::federation::Message;
use fede_core::fusion::FusedScorer;
use fede_core::kg::{federate_split, load_manifest, load_triples, write_split, FederatedDataset, SplitConfig, SplitKind};
use fede_core::model::KgeModel;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FedeStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Config = 5,
    Format = 6,
    VocabMismatch = 7,
    Contract = 8,
    UnknownLabel = 9,
    Panic = 10,
}

pub const FEDE_SPLIT_TRAIN: u32 = 0;
pub const FEDE_SPLIT_VALID: u32 = 1;
pub const FEDE_SPLIT_TEST: u32 = 2;

pub const FEDE_DIRECTIONS_TAIL: u32 = 0;
pub const FEDE_DIRECTIONS_HEAD: u32 = 1;
pub const FEDE_DIRECTIONS_BOTH: u32 = 2;

pub const FEDE_MESSAGE_REGISTER: u8 = 1;
pub const FEDE_MESSAGE_DISTRIBUTE: u8 = 2;
pub const FEDE_MESSAGE_UPDATE: u8 = 3;

/// Filtered link-prediction metrics over `count` queries.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FedeMetrics {
    pub mrr: f64,
    pub hits1: f64,
    pub hits5: f64,
    pub hits10: f64,
    pub count: u64,
}

impl From<Metrics> for FedeMetrics {
    fn from(m: Metrics) -> Self {
        FedeMetrics {
            mrr: m.mrr,
            hits1: m.hits1,
            hits5: m.hits5,
            hits10: m.hits10,
            count: m.count as u64,
        }
    }
}

/// Sizes of one client's shard.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FedeClientInfo {
    pub entities: u64,
    pub relations: u64,
    pub train: u64,
    pub valid: u64,
    pub test: u64,
}

/// Bytes owned by the library; release with [`fede_buffer_free`].
#[repr(C)]
#[derive(Debug)]
pub struct FedeBuffer {
    pub data: *mut u8,
    pub len: usize,
}

/// A federated dataset: client shards and their vocabularies.
pub struct FedeDataset {
    dataset: FederatedDataset,
}

/// A trained or loaded checkpoint together with its dataset.
pub struct FedeModel {
    checkpoint: Checkpoint,
    dataset: FederatedDataset,
    models: Vec<KgeModel>,
}

/// A decoded or constructed protocol message.
pub struct FedeMessage {
    message: Message,
    labels: Vec<CString>,
}

enum Failure {
    Null(&'static str),
    Invalid(String),
    Core(fede_core::Error),
}

impl From<fede_core::Error> for Failure {
    fn from(e: fede_core::Error) -> Self {
        Failure::Core(e)
    }
}

type FfiResult<T = ()> = Result<T, Failure>;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(f: &Failure) -> FedeStatus {
    use fede_core::Error as E;
    match f {
        Failure::Null(_) => FedeStatus::NullArgument,
        Failure::Invalid(_) => FedeStatus::InvalidArgument,
        Failure::Core(e) => match e {
            E::Parse { .. } => FedeStatus::Parse,
            E::UnknownLabel { .. } => FedeStatus::UnknownLabel,
            E::Config(_) => FedeStatus::Config,
            E::Contract(_) => FedeStatus::Contract,
            E::Format { .. } => FedeStatus::Format,
            E::VocabMismatch(_) => FedeStatus::VocabMismatch,
            E::Io { .. } => FedeStatus::Io,
        },
    }
}

fn guard(f: impl FnOnce() -> FfiResult) -> FedeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            FedeStatus::Ok
        }
        Ok(Err(failure)) => {
            let status = status_of(&failure);
            set_error(match failure {
                Failure::Null(what) => format!("`{what}` must not be NULL"),
                Failure::Invalid(m) => m,
                Failure::Core(e) => e.to_string(),
            });
            status
        }
        Err(panic) => {
            let message = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {message}"));
            FedeStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &'static str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Invalid(format!("`{what}` is not valid UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &'static str) -> FfiResult<&'a T> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn put<T>(out: *mut T, value: T, what: &'static str) -> FfiResult {
    if out.is_null() {
        return Err(Failure::Null(what));
    }
    out.write(value);
    Ok(())
}

fn split_of(code: u32) -> FfiResult<SplitKind> {
    match code {
        FEDE_SPLIT_TRAIN => Ok(SplitKind::Train),
        FEDE_SPLIT_VALID => Ok(SplitKind::Valid),
        FEDE_SPLIT_TEST => Ok(SplitKind::Test),
        other => Err(Failure::Invalid(format!("unknown split code {other}"))),
    }
}

fn directions_of(code: u32) -> FfiResult<Directions> {
    match code {
        FEDE_DIRECTIONS_TAIL => Ok(Directions::Tail),
        FEDE_DIRECTIONS_HEAD => Ok(Directions::Head),
        FEDE_DIRECTIONS_BOTH => Ok(Directions::Both),
        other => Err(Failure::Invalid(format!("unknown directions code {other}"))),
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fede_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL after a success.
/// Valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn fede_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Loads a dataset from a split manifest.
#[no_mangle]
pub unsafe extern "C" fn fede_dataset_load(manifest: *const c_char, out: *mut *mut FedeDataset) -> FedeStatus {
    guard(|| {
        let path = text(manifest, "manifest")?;
        let (dataset, _) = load_manifest(Path::new(path))?;
        put(out, Box::into_raw(Box::new(FedeDataset { dataset })), "out")
    })
}

/// Splits a triple file into `clients` shards by relation, writes them with a
/// manifest under `out_dir`, and returns the dataset.
#[no_mangle]
pub unsafe extern "C" fn fede_dataset_split(
    triples: *const c_char,
    clients: usize,
    seed: u64,
    out_dir: *const c_char,
    out: *mut *mut FedeDataset,
) -> FedeStatus {
    guard(|| {
        let input = text(triples, "triples")?;
        let dir = text(out_dir, "out_dir")?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let (store, vocab) = load_triples(Path::new(input), None)?;
        let dataset = federate_split(&store, &vocab, &SplitConfig::new(clients, seed))?;
        write_split(&dataset, Path::new(dir), seed)?;
        put(out, Box::into_raw(Box::new(FedeDataset { dataset })), "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn fede_dataset_num_clients(dataset: *const FedeDataset, out: *mut usize) -> FedeStatus {
    guard(|| {
        let d = handle(dataset, "dataset")?;
        put(out, d.dataset.num_clients(), "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn fede_dataset_client_info(
    dataset: *const FedeDataset,
    client: usize,
    out: *mut FedeClientInfo,
) -> FedeStatus {
    guard(|| {
        let d = handle(dataset, "dataset")?;
        let shard = d
            .dataset
            .shards
            .get(client)
            .ok_or_else(|| Failure::Invalid(format!("no client {client}")))?;
        let info = FedeClientInfo {
            entities: shard.vocab.num_entities() as u64,
            relations: shard.vocab.num_relations() as u64,
            train: shard.train.len() as u64,
            valid: shard.valid.len() as u64,
            test: shard.test.len() as u64,
        };
        put(out, info, "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn fede_dataset_free(dataset: *mut FedeDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

fn model_from(checkpoint: Checkpoint, dataset: FederatedDataset) -> FfiResult<*mut FedeModel> {
    let models = checkpoint.client_models(&dataset)?;
    Ok(Box::into_raw(Box::new(FedeModel {
        checkpoint,
        dataset,
        models,
    })))
}

/// Trains per the TOML configuration at `config_path`, writing the run
/// directory it names, and returns the resulting model.
#[no_mangle]
pub unsafe extern "C" fn fede_train(config_path: *const c_char, resume: bool, out: *mut *mut FedeModel) -> FedeStatus {
    guard(|| {
        let path = text(config_path, "config_path")?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let cfg = RunConfig::load(Path::new(path))?;
        let dataset = experiment::load_dataset(&cfg)?;
        let report = experiment::train(&cfg, &dataset, resume)?;
        put(out, model_from(report.checkpoint, dataset)?, "out")
    })
}

/// Loads a checkpoint. `manifest` may be NULL to use the dataset recorded in
/// the checkpoint's configuration.
#[no_mangle]
pub unsafe extern "C" fn fede_model_load(
    checkpoint: *const c_char,
    manifest: *const c_char,
    out: *mut *mut FedeModel,
) -> FedeStatus {
    guard(|| {
        let path = text(checkpoint, "checkpoint")?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let bytes = std::fs::read(path).map_err(|e| fede_core::Error::Io {
            context: format!("reading {path}"),
            source: e,
        })?;
        let manifest = if manifest.is_null() {
            Checkpoint::read_config(&bytes)?.data.manifest
        } else {
            text(manifest, "manifest")?.into()
        };
        let (dataset, _) = load_manifest(&manifest)?;
        let ckpt = Checkpoint::decode(&bytes, &dataset)?;
        put(out, model_from(ckpt, dataset)?, "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn fede_model_save(model: *const FedeModel, path: *const c_char) -> FedeStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let path = text(path, "path")?;
        m.checkpoint.save(Path::new(path), &m.dataset)?;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn fede_model_num_clients(model: *const FedeModel, out: *mut usize) -> FedeStatus {
    guard(|| {
        let m = handle(model, "model")?;
        put(out, m.dataset.num_clients(), "out")
    })
}

fn score_in(m: &FedeModel, client: usize, h: u32, r: u32, t: u32) -> FfiResult<f64> {
    let shard = m
        .dataset
        .shards
        .get(client)
        .ok_or_else(|| Failure::Invalid(format!("no client {client}")))?;
    let (ne, nr) = (shard.vocab.num_entities() as u32, shard.vocab.num_relations() as u32);
    if h >= ne || t >= ne || r >= nr {
        return Err(Failure::Invalid(format!(
            "triple ({h}, {r}, {t}) outside client {client}'s {ne} entities and {nr} relations"
        )));
    }
    Ok(match &m.checkpoint.state {
        RunState::Fused(run) => FusedScorer {
            model: run.combiners[client],
            single: &run.single[client],
            fed: &run.fed[client],
        }
        .score(h, r, t),
        _ => m.models[client].score(h, r, t),
    })
}

/// Score of a triple given in the client's local ids.
#[no_mangle]
pub unsafe extern "C" fn fede_model_score(
    model: *const FedeModel,
    client: usize,
    head: u32,
    relation: u32,
    tail: u32,
    out: *mut f64,
) -> FedeStatus {
    guard(|| {
        let m = handle(model, "model")?;
        put(out, score_in(m, client, head, relation, tail)?, "out")
    })
}

/// Score of a triple given by labels in the client's vocabulary.
#[no_mangle]
pub unsafe extern "C" fn fede_model_score_labels(
    model: *const FedeModel,
    client: usize,
    head: *const c_char,
    relation: *const c_char,
    tail: *const c_char,
    out: *mut f64,
) -> FedeStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let shard = m
            .dataset
            .shards
            .get(client)
            .ok_or_else(|| Failure::Invalid(format!("no client {client}")))?;
        let entity = |label: &str| {
            shard.vocab.entities.id(label).ok_or_else(|| {
                Failure::Core(fede_core::Error::UnknownLabel {
                    kind: "entity",
                    label: label.into(),
                })
            })
        };
        let h = entity(text(head, "head")?)?;
        let t = entity(text(tail, "tail")?)?;
        let r_label = text(relation, "relation")?;
        let r = shard.vocab.relations.id(r_label).ok_or_else(|| {
            Failure::Core(fede_core::Error::UnknownLabel {
                kind: "relation",
                label: r_label.into(),
            })
        })?;
        put(out, score_in(m, client, h, r, t)?, "out")
    })
}

/// Filtered ranking metrics on `split`. `per_client` may be NULL; otherwise
/// it must hold `len` entries and `len` must equal the number of clients.
#[no_mangle]
pub unsafe extern "C" fn fede_model_evaluate(
    model: *const FedeModel,
    split: u32,
    directions: u32,
    threads: usize,
    per_client: *mut FedeMetrics,
    len: usize,
    average: *mut FedeMetrics,
) -> FedeStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let (split, directions) = (split_of(split)?, directions_of(directions)?);
        if average.is_null() {
            return Err(Failure::Null("average"));
        }
        if !per_client.is_null() && len != m.dataset.num_clients() {
            return Err(Failure::Invalid(format!(
                "per_client holds {len} entries for {} clients",
                m.dataset.num_clients()
            )));
        }
        let (metrics, avg) = experiment::evaluate_checkpoint(&m.checkpoint, &m.dataset, split, directions, threads)?;
        if !per_client.is_null() {
            for (i, x) in metrics.into_iter().enumerate() {
                per_client.add(i).write(x.into());
            }
        }
        average.write(avg.into());
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn fede_model_free(model: *mut FedeModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

fn message_handle(message: Message) -> FfiResult<*mut FedeMessage> {
    let labels = match &message {
        Message::Register { entities, .. } => entities
            .iter()
            .map(|l| CString::new(l.as_str()).map_err(|_| Failure::Invalid("label contains a NUL byte".into())))
            .collect::<FfiResult<Vec<_>>>()?,
        _ => Vec::new(),
    };
    Ok(Box::into_raw(Box::new(FedeMessage { message, labels })))
}

/// A REGISTER message carrying `count` entity labels.
#[no_mangle]
pub unsafe extern "C" fn fede_message_new_register(
    client: u32,
    labels: *const *const c_char,
    count: usize,
    out: *mut *mut FedeMessage,
) -> FedeStatus {
    guard(|| {
        if labels.is_null() && count > 0 {
            return Err(Failure::Null("labels"));
        }
        let entities = (0..count)
            .map(|i| text(*labels.add(i), "labels[i]").map(str::to_owned))
            .collect::<FfiResult<Vec<_>>>()?;
        put(out, message_handle(Message::Register { client, entities })?, "out")
    })
}

/// A DISTRIBUTE or UPDATE message over a row-major `rows x dim` matrix.
#[no_mangle]
pub unsafe extern "C" fn fede_message_new_entities(
    kind: u8,
    round: u64,
    client: u32,
    rows: usize,
    dim: usize,
    data: *const f64,
    out: *mut *mut FedeMessage,
) -> FedeStatus {
    guard(|| {
        let n = rows
            .checked_mul(dim)
            .ok_or_else(|| Failure::Invalid("matrix size overflows".into()))?;
        if data.is_null() && n > 0 {
            return Err(Failure::Null("data"));
        }
        let values = if n == 0 {
            Vec::new()
        } else {
            std::slice::from_raw_parts(data, n).to_vec()
        };
        let entities = EmbeddingMatrix::from_vec(rows, dim, values);
        let message = match kind {
            FEDE_MESSAGE_DISTRIBUTE => Message::Distribute { round, client, entities },
            FEDE_MESSAGE_UPDATE => Message::Update { round, client, entities },
            other => return Err(Failure::Invalid(format!("kind {other} does not carry entity rows"))),
        };
        put(out, message_handle(message)?, "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn fede_message_decode(bytes: *const u8, len: usize, out: *mut *mut FedeMessage) -> FedeStatus {
    guard(|| {
        if bytes.is_null() {
            return Err(Failure::Null("bytes"));
        }
        let message = Message::decode(std::slice::from_raw_parts(bytes, len))?;
        put(out, message_handle(message)?, "out")
    })
}

#[no_mangle]
pub unsafe extern "C" fn fede_message_encode(message: *const FedeMessage, out: *mut FedeBuffer) -> FedeStatus {
    guard(|| {
        let m = handle(message, "message")?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let bytes = m.message.encode().into_boxed_slice();
        let len = bytes.len();
        let data = Box::into_raw(bytes).cast::<u8>();
        put(out, FedeBuffer { data, len }, "out")
    })
}

/// Kind, round (0 for REGISTER) and client of a message. Any output pointer
/// may be NULL.
#[no_mangle]
pub unsafe extern "C" fn fede_message_header(
    message: *const FedeMessage,
    kind: *mut u8,
    round: *mut u64,
    client: *mut u32,
) -> FedeStatus {
    guard(|| {
        let m = handle(message, "message")?;
        let (r, c) = match &m.message {
            Message::Register { client, .. } => (0, *client),
            Message::Distribute { round, client, .. } | Message::Update { round, client, .. } => (*round, *client),
        };
        if !kind.is_null() {
            kind.write(m.message.kind());
        }
        if !round.is_null() {
            round.write(r);
        }
        if !client.is_null() {
            client.write(c);
        }
        Ok(())
    })
}

/// Number of labels in a REGISTER message (0 for other kinds).
#[no_mangle]
pub unsafe extern "C" fn fede_message_label_count(message: *const FedeMessage, out: *mut usize) -> FedeStatus {
    guard(|| {
        let m = handle(message, "message")?;
        put(out, m.labels.len(), "out")
    })
}

/// Label `index` of a REGISTER message, owned by the message handle.
#[no_mangle]
pub unsafe extern "C" fn fede_message_label(
    message: *const FedeMessage,
    index: usize,
    out: *mut *const c_char,
) -> FedeStatus {
    guard(|| {
        let m = handle(message, "message")?;
        let label = m
            .labels
            .get(index)
            .ok_or_else(|| Failure::Invalid(format!("label index {index} out of range")))?;
        put(out, label.as_ptr(), "out")
    })
}

fn matrix_of(m: &FedeMessage) -> FfiResult<&EmbeddingMatrix> {
    match &m.message {
        Message::Distribute { entities, .. } | Message::Update { entities, .. } => Ok(entities),
        Message::Register { .. } => Err(Failure::Invalid("REGISTER messages carry no entity rows".into())),
    }
}

#[no_mangle]
pub unsafe extern "C" fn fede_message_shape(message: *const FedeMessage, rows: *mut usize, dim: *mut usize) -> FedeStatus {
    guard(|| {
        let e = matrix_of(handle(message, "message")?)?;
        put(rows, e.rows(), "rows")?;
        put(dim, e.dim(), "dim")
    })
}

/// Copies the entity rows (row-major) into `out`, which must hold exactly
/// `rows * dim` values.
#[no_mangle]
pub unsafe extern "C" fn fede_message_copy_entities(message: *const FedeMessage, out: *mut f64, len: usize) -> FedeStatus {
    guard(|| {
        let e = matrix_of(handle(message, "message")?)?;
        if len != e.as_slice().len() {
            return Err(Failure::Invalid(format!("buffer holds {len} values, message has {}", e.as_slice().len())));
        }
        if out.is_null() && len > 0 {
            return Err(Failure::Null("out"));
        }
        if len > 0 {
            ptr::copy_nonoverlapping(e.as_slice().as_ptr(), out, len);
        }
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn fede_message_free(message: *mut FedeMessage) {
    if !message.is_null() {
        drop(Box::from_raw(message));
    }
}

#[no_mangle]
pub unsafe extern "C" fn fede_buffer_free(buffer: FedeBuffer) {
    if !buffer.data.is_null() {
        drop(Box::from_raw(ptr::slice_from_raw_parts_mut(buffer.data, buffer.len)));
    }
}
