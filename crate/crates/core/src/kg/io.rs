use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::warn;

use super::{Triple, TripleStore, Vocabulary};
use crate::{Error, Result};

/// Reads a tab-separated `head<TAB>relation<TAB>tail` file.
///
/// With `frozen = None` a fresh vocabulary is grown in first-occurrence order.
/// With a frozen vocabulary every label must already be known.
pub fn load_triples(path: &Path, frozen: Option<&Vocabulary>) -> Result<(TripleStore, Vocabulary)> {
    let mut vocab = frozen.cloned().unwrap_or_default();
    let store = read_file(path, &mut vocab, frozen.is_some())?;
    Ok((store, vocab))
}

/// Reads a triple file, extending `vocab` with any new labels.
pub fn load_triples_into(path: &Path, vocab: &mut Vocabulary) -> Result<TripleStore> {
    read_file(path, vocab, false)
}

fn read_file(path: &Path, vocab: &mut Vocabulary, frozen: bool) -> Result<TripleStore> {
    let file = File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    let reader = BufReader::new(file);
    let mut store = TripleStore::new();
    let mut duplicates = 0usize;
    for (n, line) in reader.lines().enumerate() {
        let line_no = n + 1;
        let line = line.map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: line_no,
                message: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        let triple = if frozen {
            let lookup = |kind, labels: &super::Labels, label: &str| {
                labels.id(label).ok_or_else(|| Error::UnknownLabel {
                    kind,
                    label: label.to_owned(),
                })
            };
            Triple::new(
                lookup("entity", &vocab.entities, fields[0])?,
                lookup("relation", &vocab.relations, fields[1])?,
                lookup("entity", &vocab.entities, fields[2])?,
            )
        } else {
            let head = vocab.entities.intern(fields[0]);
            let relation = vocab.relations.intern(fields[1]);
            let tail = vocab.entities.intern(fields[2]);
            Triple::new(head, relation, tail)
        };
        if !store.push(triple) {
            duplicates += 1;
        }
    }
    if duplicates > 0 {
        warn!("{}: dropped {duplicates} duplicate triple(s)", path.display());
    }
    Ok(store)
}

pub fn write_triples(path: &Path, store: &TripleStore, vocab: &Vocabulary) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    let mut out = BufWriter::new(file);
    for t in store.triples() {
        writeln!(
            out,
            "{}\t{}\t{}",
            vocab.entities.name(t.head),
            vocab.relations.name(t.relation),
            vocab.entities.name(t.tail)
        )
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    }
    out.flush()
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}
