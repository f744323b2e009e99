//! Split manifest: a line-oriented, tab-separated description of a federated
//! dataset on disk.
//!
//! ```text
//! fede-manifest<TAB>1
//! seed<TAB><u64>
//! client<TAB><id><TAB><train path><TAB><valid path><TAB><test path>
//! relation<TAB><label>
//! relation<TAB><label>
//! client<TAB>...
//! ```
//!
//! Paths are relative to the manifest's directory. `relation` lines belong to
//! the closest preceding `client` line and list that client's relation labels
//! in local-id order. Lines starting with `#` are comments.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{load_triples_into, write_triples, ClientShard, FederatedDataset, Vocabulary};
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.tsv";
const MAGIC: &str = "fede-manifest";
const VERSION: &str = "1";

/// Writes each shard as `client_<id>/{train,valid,test}.tsv` under `dir`
/// together with `manifest.tsv`. Returns the manifest path.
pub fn write_split(dataset: &FederatedDataset, dir: &Path, seed: u64) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    let mut manifest = format!("{MAGIC}\t{VERSION}\nseed\t{seed}\n");
    for shard in &dataset.shards {
        let sub = format!("client_{}", shard.id);
        let shard_dir = dir.join(&sub);
        fs::create_dir_all(&shard_dir)
            .map_err(|e| Error::io(format!("creating {}", shard_dir.display()), e))?;
        for (name, store) in [("train", &shard.train), ("valid", &shard.valid), ("test", &shard.test)] {
            write_triples(&shard_dir.join(format!("{name}.tsv")), store, &shard.vocab)?;
        }
        let _ = writeln!(
            manifest,
            "client\t{}\t{sub}/train.tsv\t{sub}/valid.tsv\t{sub}/test.tsv",
            shard.id
        );
        for r in shard.vocab.relations.iter() {
            let _ = writeln!(manifest, "relation\t{r}");
        }
    }
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, manifest).map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    Ok(path)
}

struct Entry {
    id: usize,
    files: [PathBuf; 3],
    relations: Vec<String>,
}

/// Loads a dataset written by [`write_split`]. Returns the dataset and the
/// recorded split seed.
pub fn load_manifest(path: &Path) -> Result<(FederatedDataset, Option<u64>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut seed = None;
    let mut entries: Vec<Entry> = Vec::new();
    let mut saw_magic = false;
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        match fields.as_slice() {
            [MAGIC, version] => {
                if *version != VERSION {
                    return Err(parse_err(line_no, format!("unsupported manifest version {version}")));
                }
                saw_magic = true;
            }
            ["seed", value] => {
                seed = Some(value.parse().map_err(|_| parse_err(line_no, format!("bad seed `{value}`")))?);
            }
            ["client", id, train, valid, test] => {
                let id: usize = id
                    .parse()
                    .map_err(|_| parse_err(line_no, format!("bad client id `{id}`")))?;
                if id != entries.len() {
                    return Err(parse_err(line_no, format!("client {id} out of order")));
                }
                entries.push(Entry {
                    id,
                    files: [base.join(train), base.join(valid), base.join(test)],
                    relations: Vec::new(),
                });
            }
            ["relation", label] => match entries.last_mut() {
                Some(entry) => entry.relations.push((*label).to_owned()),
                None => return Err(parse_err(line_no, "relation before any client".into())),
            },
            _ => return Err(parse_err(line_no, format!("unrecognized record `{line}`"))),
        }
    }
    if !saw_magic {
        return Err(parse_err(1, format!("missing `{MAGIC}` header")));
    }

    let mut shards = Vec::with_capacity(entries.len());
    for entry in entries {
        let mut vocab = Vocabulary::new();
        let [train, valid, test] = &entry.files;
        let train = load_triples_into(train, &mut vocab)?;
        let valid = load_triples_into(valid, &mut vocab)?;
        let test = load_triples_into(test, &mut vocab)?;
        let listed: Vec<&str> = entry.relations.iter().map(String::as_str).collect();
        let found: Vec<&str> = vocab.relations.iter().collect();
        if listed != found {
            return Err(Error::VocabMismatch(format!(
                "client {} lists relations {listed:?} but its files use {found:?}",
                entry.id
            )));
        }
        shards.push(ClientShard {
            id: entry.id,
            vocab,
            train,
            valid,
            test,
        });
    }
    Ok((FederatedDataset::from_shards(shards)?, seed))
}
