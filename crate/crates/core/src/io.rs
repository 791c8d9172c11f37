//! TSV ingestion and export.
//!
//! Triples are `head\trelation\ttail`, types are `entity\ttype`, mediators are
//! one entity name per line. A dataset directory holds `train`, `valid` and
//! `test` triple files (`.tsv` or `.txt`) plus optional `types.tsv` and
//! `mediators.tsv`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{KgError, Result};
use crate::graph::{ClosurePolicy, GraphBuilder, KnowledgeGraph, Split};

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| KgError::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| KgError::io(parent, e))?;
        }
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| KgError::io(path, e))
}

/// Calls `f` with the tab-separated fields of every non-empty line. A field
/// count other than `arity` is a parse error carrying the 1-based line number.
fn for_each_row<F>(path: &Path, arity: usize, mut f: F) -> Result<()>
where
    F: FnMut(&[&str]),
{
    let reader = open(path)?;
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| KgError::io(path, e))?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != arity {
            return Err(KgError::Parse {
                path: path.to_owned(),
                line: i + 1,
                message: format!("expected {arity} tab-separated fields, found {}", fields.len()),
            });
        }
        f(&fields);
    }
    Ok(())
}

pub fn read_triples_into(b: &mut GraphBuilder, path: &Path, split: Split) -> Result<()> {
    for_each_row(path, 3, |f| {
        b.add(f[0], f[1], f[2], split);
    })
}

pub fn read_types_into(b: &mut GraphBuilder, path: &Path) -> Result<()> {
    for_each_row(path, 2, |f| {
        b.add_type(f[0], f[1]);
    })
}

pub fn read_mediators_into(b: &mut GraphBuilder, path: &Path) -> Result<()> {
    for_each_row(path, 1, |f| {
        b.add_mediator(f[0]);
    })
}

/// Loads a single triple file as an unsplit graph (every triple tagged
/// train). Duplicates are dropped and counted in [`KnowledgeGraph::stats`].
pub fn load_graph(
    triples: &Path,
    types: Option<&Path>,
    mediators: Option<&Path>,
) -> Result<KnowledgeGraph> {
    let mut b = GraphBuilder::new();
    read_triples_into(&mut b, triples, Split::Train)?;
    if let Some(p) = types {
        read_types_into(&mut b, p)?;
    }
    if let Some(p) = mediators {
        read_mediators_into(&mut b, p)?;
    }
    if b.stats().duplicates > 0 {
        log::info!("{}: {} duplicate triple(s) removed", triples.display(), b.stats().duplicates);
    }
    b.build(ClosurePolicy::Reject)
}

/// File layout of a dataset directory.
#[derive(Debug, Clone)]
pub struct DatasetFiles {
    pub train: PathBuf,
    pub valid: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub types: Option<PathBuf>,
    pub mediators: Option<PathBuf>,
}

impl DatasetFiles {
    /// Resolves `train`, `valid`, `test` (`.tsv` preferred over `.txt`) and
    /// the optional annotation files inside `dir`.
    pub fn discover(dir: &Path) -> Result<Self> {
        let find = |stem: &str| {
            ["tsv", "txt"]
                .iter()
                .map(|ext| dir.join(format!("{stem}.{ext}")))
                .find(|p| p.is_file())
        };
        let train = find("train").ok_or_else(|| {
            KgError::Invalid(format!("{}: no train.tsv or train.txt", dir.display()))
        })?;
        Ok(DatasetFiles {
            train,
            valid: find("valid"),
            test: find("test"),
            types: find("types"),
            mediators: find("mediators"),
        })
    }
}

/// Loads a split dataset. Triples repeated across splits are an error;
/// evaluation triples with symbols unseen in train follow `policy`.
pub fn load_dataset(dir: &Path, policy: ClosurePolicy) -> Result<KnowledgeGraph> {
    let files = DatasetFiles::discover(dir)?;
    load_files(&files, policy)
}

pub fn load_files(files: &DatasetFiles, policy: ClosurePolicy) -> Result<KnowledgeGraph> {
    let mut b = GraphBuilder::new();
    read_triples_into(&mut b, &files.train, Split::Train)?;
    if let Some(p) = &files.valid {
        read_triples_into(&mut b, p, Split::Valid)?;
    }
    if let Some(p) = &files.test {
        read_triples_into(&mut b, p, Split::Test)?;
    }
    if let Some(p) = &files.types {
        read_types_into(&mut b, p)?;
    }
    if let Some(p) = &files.mediators {
        read_mediators_into(&mut b, p)?;
    }
    b.build(policy)
}

pub fn write_triples<I>(path: &Path, g: &KnowledgeGraph, triples: I) -> Result<()>
where
    I: IntoIterator<Item = crate::graph::Triple>,
{
    let mut w = create(path)?;
    for t in triples {
        writeln!(w, "{}", g.describe(t)).map_err(|e| KgError::io(path, e))?;
    }
    w.flush().map_err(|e| KgError::io(path, e))
}

/// Writes `train.tsv`, `valid.tsv`, `test.tsv` and, when present, `types.tsv`
/// and `mediators.tsv` into `dir`.
pub fn write_dataset(dir: &Path, g: &KnowledgeGraph) -> Result<()> {
    for split in Split::ALL {
        write_triples(
            &dir.join(format!("{}.tsv", split.name())),
            g,
            g.split_triples(split),
        )?;
    }
    if g.has_types() {
        let path = dir.join("types.tsv");
        let mut w = create(&path)?;
        for e in 0..g.num_entities() {
            let id = crate::graph::EntityId::from_index(e);
            for ty in g.type_names(id) {
                writeln!(w, "{}\t{}", g.entity_name(id), ty).map_err(|e| KgError::io(&path, e))?;
            }
        }
        w.flush().map_err(|e| KgError::io(&path, e))?;
    }
    if g.mediator_count() > 0 {
        let path = dir.join("mediators.tsv");
        let mut w = create(&path)?;
        for e in 0..g.num_entities() {
            let id = crate::graph::EntityId::from_index(e);
            if g.is_mediator(id) {
                writeln!(w, "{}", g.entity_name(id)).map_err(|e| KgError::io(&path, e))?;
            }
        }
        w.flush().map_err(|e| KgError::io(&path, e))?;
    }
    Ok(())
}

/// Writes arbitrary tab-separated rows.
pub fn write_rows<R, I>(path: &Path, header: Option<&str>, rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: AsRef<str>,
{
    let mut w = create(path)?;
    if let Some(h) = header {
        writeln!(w, "{h}").map_err(|e| KgError::io(path, e))?;
    }
    for row in rows {
        writeln!(w, "{}", row.as_ref()).map_err(|e| KgError::io(path, e))?;
    }
    w.flush().map_err(|e| KgError::io(path, e))
}
