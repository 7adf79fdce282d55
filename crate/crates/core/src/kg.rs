//! Knowledge graphs, seed alignments and the on-disk formats.
//!
//! Three file formats live here:
//!
//! * **Triple files**: one `head<TAB>relation<TAB>tail` line per triple,
//!   decimal ids, LF line endings. Blank lines and lines starting with `#`
//!   are ignored.
//! * **Pair files**: one `source<TAB>target` line per aligned entity pair,
//!   same conventions.
//! * **Embedding files**: either a text format (`n_rows n_cols` header line,
//!   then one row of space-separated decimals per line) or a binary format
//!   (magic bytes `TFPE`, two little-endian u32 for rows and columns, then
//!   row-major little-endian f32 values). `load_embeddings` tells them apart
//!   by the magic bytes.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::num::IntErrorKind;
use std::path::Path;

use crate::dense::FeatureMatrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Magic bytes opening a binary embedding file.
const EMBEDDING_MAGIC: &[u8; 4] = b"TFPE";

/// One directed, labeled edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triple {
    pub head: usize,
    pub relation: usize,
    pub tail: usize,
}

impl Triple {
    pub fn new(head: usize, relation: usize, tail: usize) -> Self {
        Self {
            head,
            relation,
            tail,
        }
    }
}

/// A knowledge graph over dense integer ids.
///
/// Triples are kept sorted by (head, relation, tail) with exact duplicates
/// collapsed, so two graphs loaded from permutations of the same file
/// compare equal and every downstream construction sees a canonical order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnowledgeGraph {
    n_entities: usize,
    n_relations: usize,
    triples: Vec<Triple>,
}

impl KnowledgeGraph {
    /// Builds a graph with explicit entity and relation counts.
    pub fn new(n_entities: usize, n_relations: usize, mut triples: Vec<Triple>) -> Result<Self> {
        for t in &triples {
            if t.head >= n_entities || t.tail >= n_entities {
                return Err(Error::Data(format!(
                    "triple ({}, {}, {}) uses an entity id >= {n_entities}",
                    t.head, t.relation, t.tail
                )));
            }
            if t.relation >= n_relations {
                return Err(Error::Data(format!(
                    "triple ({}, {}, {}) uses a relation id >= {n_relations}",
                    t.head, t.relation, t.tail
                )));
            }
        }
        triples.sort_unstable();
        triples.dedup();
        Ok(Self {
            n_entities,
            n_relations,
            triples,
        })
    }

    /// Builds a graph inferring counts as one past the largest id seen.
    pub fn from_triples(triples: Vec<Triple>) -> Self {
        let n_entities = triples
            .iter()
            .map(|t| t.head.max(t.tail) + 1)
            .max()
            .unwrap_or(0);
        let n_relations = triples.iter().map(|t| t.relation + 1).max().unwrap_or(0);
        Self::new(n_entities, n_relations, triples).expect("inferred counts cover all ids")
    }

    pub fn n_entities(&self) -> usize {
        self.n_entities
    }

    pub fn n_relations(&self) -> usize {
        self.n_relations
    }

    pub fn n_triples(&self) -> usize {
        self.triples.len()
    }

    /// Triples in canonical (head, relation, tail) order.
    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }
}

/// Seed entity pairs split into a training part (visible to the decoder)
/// and a held-out test part.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedAlignment {
    pub train_pairs: Vec<(usize, usize)>,
    pub test_pairs: Vec<(usize, usize)>,
}

impl SeedAlignment {
    /// Validates that no source or target entity appears twice across the
    /// union of both lists.
    pub fn new(train_pairs: Vec<(usize, usize)>, test_pairs: Vec<(usize, usize)>) -> Result<Self> {
        check_one_to_one(train_pairs.iter().chain(&test_pairs))?;
        Ok(Self {
            train_pairs,
            test_pairs,
        })
    }

    /// Splits a single pair list by prefix: the first
    /// `floor(train_fraction * len)` pairs become training pairs.
    pub fn from_single(pairs: Vec<(usize, usize)>, train_fraction: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&train_fraction) {
            return Err(Error::Parameter(format!(
                "train_fraction {train_fraction} outside [0, 1]"
            )));
        }
        let n_train = (train_fraction * pairs.len() as f64).floor() as usize;
        let (train, test) = pairs.split_at(n_train);
        Self::new(train.to_vec(), test.to_vec())
    }
}

fn check_one_to_one<'a>(pairs: impl Iterator<Item = &'a (usize, usize)>) -> Result<()> {
    let mut seen_src = std::collections::HashSet::new();
    let mut seen_tgt = std::collections::HashSet::new();
    for &(s, t) in pairs {
        if !seen_src.insert(s) {
            return Err(Error::OneToOne(format!("source entity {s} appears twice")));
        }
        if !seen_tgt.insert(t) {
            return Err(Error::OneToOne(format!("target entity {t} appears twice")));
        }
    }
    Ok(())
}

/// Two graphs, their seed alignment and one embedding row per entity.
#[derive(Debug, Clone)]
pub struct DatasetPair<T> {
    pub src_kg: KnowledgeGraph,
    pub tgt_kg: KnowledgeGraph,
    pub alignment: SeedAlignment,
    pub src_features: FeatureMatrix<T>,
    pub tgt_features: FeatureMatrix<T>,
}

impl<T: Scalar> DatasetPair<T> {
    pub fn new(
        src_kg: KnowledgeGraph,
        tgt_kg: KnowledgeGraph,
        alignment: SeedAlignment,
        src_features: FeatureMatrix<T>,
        tgt_features: FeatureMatrix<T>,
    ) -> Result<Self> {
        if src_features.n_rows() != src_kg.n_entities()
            || tgt_features.n_rows() != tgt_kg.n_entities()
        {
            return Err(Error::Data(format!(
                "feature rows ({}, {}) do not match entity counts ({}, {})",
                src_features.n_rows(),
                tgt_features.n_rows(),
                src_kg.n_entities(),
                tgt_kg.n_entities()
            )));
        }
        if src_features.n_cols() != tgt_features.n_cols() {
            return Err(Error::Data(format!(
                "feature widths differ: {} vs {}",
                src_features.n_cols(),
                tgt_features.n_cols()
            )));
        }
        for pairs in [&alignment.train_pairs, &alignment.test_pairs] {
            for &(s, t) in pairs {
                if s >= src_kg.n_entities() || t >= tgt_kg.n_entities() {
                    return Err(Error::Data(format!(
                        "alignment pair ({s}, {t}) outside entity ranges ({}, {})",
                        src_kg.n_entities(),
                        tgt_kg.n_entities()
                    )));
                }
            }
        }
        Ok(Self {
            src_kg,
            tgt_kg,
            alignment,
            src_features,
            tgt_features,
        })
    }
}

fn parse_id(token: &str, line: usize) -> Result<usize> {
    token.parse::<usize>().map_err(|e| {
        if *e.kind() == IntErrorKind::PosOverflow {
            Error::Range {
                line,
                msg: format!("id '{token}' does not fit a machine integer"),
            }
        } else {
            Error::Parse {
                line,
                msg: format!("expected a non-negative integer, got '{token}'"),
            }
        }
    })
}

/// Lines of a text file worth parsing: trimmed, non-blank, non-comment,
/// paired with their 1-based line numbers.
fn content_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim_end().to_string();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        out.push((idx + 1, trimmed));
    }
    Ok(out)
}

/// Loads a triple file. Entity and relation counts are inferred as one past
/// the largest id observed; line order does not matter.
pub fn load_triples(path: impl AsRef<Path>) -> Result<KnowledgeGraph> {
    let mut triples = Vec::new();
    for (line_no, line) in content_lines(path.as_ref())? {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected 3 tab-separated fields, got {}", fields.len()),
            });
        }
        triples.push(Triple::new(
            parse_id(fields[0], line_no)?,
            parse_id(fields[1], line_no)?,
            parse_id(fields[2], line_no)?,
        ));
    }
    Ok(KnowledgeGraph::from_triples(triples))
}

/// Writes a triple file in canonical order.
pub fn write_triples(path: impl AsRef<Path>, kg: &KnowledgeGraph) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for t in kg.triples() {
        writeln!(w, "{}\t{}\t{}", t.head, t.relation, t.tail)?;
    }
    w.flush()?;
    Ok(())
}

/// Loads a pair file, preserving line order. Any source or target entity
/// appearing twice is rejected.
pub fn load_pairs(path: impl AsRef<Path>) -> Result<Vec<(usize, usize)>> {
    let mut pairs = Vec::new();
    for (line_no, line) in content_lines(path.as_ref())? {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected 2 tab-separated fields, got {}", fields.len()),
            });
        }
        pairs.push((parse_id(fields[0], line_no)?, parse_id(fields[1], line_no)?));
    }
    check_one_to_one(pairs.iter())?;
    Ok(pairs)
}

/// Writes a pair file in the given order.
pub fn write_pairs(path: impl AsRef<Path>, pairs: &[(usize, usize)]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (s, t) in pairs {
        writeln!(w, "{s}\t{t}")?;
    }
    w.flush()?;
    Ok(())
}

/// On-disk embedding representations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingFormat {
    /// Human-readable; round-trips f64 exactly.
    Text,
    /// Compact; values are stored as f32.
    Binary,
}

/// Loads an embedding file, detecting the format by its magic bytes.
/// Non-finite values are rejected.
pub fn load_embeddings<T: Scalar>(path: impl AsRef<Path>) -> Result<FeatureMatrix<T>> {
    let path = path.as_ref();
    let mut file = File::open(path)?;
    let mut magic = [0u8; 4];
    let n_read = file.read(&mut magic)?;
    drop(file);
    if n_read == 4 && &magic == EMBEDDING_MAGIC {
        load_embeddings_binary(path)
    } else {
        load_embeddings_text(path)
    }
}

fn load_embeddings_text<T: Scalar>(path: &Path) -> Result<FeatureMatrix<T>> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines().enumerate();

    let (header_idx, header) = loop {
        match lines.next() {
            Some((idx, line)) => {
                let line = line?;
                let t = line.trim_end().to_string();
                if t.is_empty() || t.starts_with('#') {
                    continue;
                }
                break (idx + 1, t);
            }
            None => return Err(Error::Format("embedding file has no header line".into())),
        }
    };
    let dims: Vec<&str> = header.split_whitespace().collect();
    if dims.len() != 2 {
        return Err(Error::Format(format!(
            "embedding header must be 'n_rows n_cols', got '{header}'"
        )));
    }
    let n_rows = parse_id(dims[0], header_idx)?;
    let n_cols = parse_id(dims[1], header_idx)?;

    let mut data: Vec<T> = Vec::with_capacity(n_rows * n_cols);
    let mut rows_seen = 0usize;
    for (idx, line) in lines {
        let line = line?;
        let t = line.trim_end();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let line_no = idx + 1;
        let mut count = 0usize;
        for tok in t.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("expected a decimal float, got '{tok}'"),
            })?;
            if !v.is_finite() {
                return Err(Error::Data(format!(
                    "non-finite value '{tok}' at line {line_no}"
                )));
            }
            data.push(T::from_f64_lossy(v));
            count += 1;
        }
        if count != n_cols {
            return Err(Error::Format(format!(
                "row at line {line_no} has {count} values, header says {n_cols}"
            )));
        }
        rows_seen += 1;
    }
    if rows_seen != n_rows {
        return Err(Error::Format(format!(
            "file holds {rows_seen} rows, header says {n_rows}"
        )));
    }
    FeatureMatrix::from_vec(n_rows, n_cols, data)
}

fn load_embeddings_binary<T: Scalar>(path: &Path) -> Result<FeatureMatrix<T>> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 12 || &bytes[0..4] != EMBEDDING_MAGIC {
        return Err(Error::Format("binary embedding header truncated".into()));
    }
    let n_rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let n_cols = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let expected = 12 + n_rows
        .checked_mul(n_cols)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Format("embedding dimensions overflow".into()))?;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "binary embedding payload is {} bytes, header implies {}",
            bytes.len() - 12,
            expected - 12
        )));
    }
    let mut data: Vec<T> = Vec::with_capacity(n_rows * n_cols);
    for chunk in bytes[12..].chunks_exact(4) {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::Data(format!(
                "non-finite value at payload index {}",
                data.len()
            )));
        }
        data.push(T::from_f64_lossy(v as f64));
    }
    FeatureMatrix::from_vec(n_rows, n_cols, data)
}

/// Writes an embedding file in the requested format.
pub fn write_embeddings<T: Scalar>(
    path: impl AsRef<Path>,
    x: &FeatureMatrix<T>,
    format: EmbeddingFormat,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    match format {
        EmbeddingFormat::Text => {
            writeln!(w, "{} {}", x.n_rows(), x.n_cols())?;
            for r in 0..x.n_rows() {
                let row = x.row(r);
                let mut first = true;
                for v in row {
                    if !first {
                        write!(w, " ")?;
                    }
                    write!(w, "{v}")?;
                    first = false;
                }
                writeln!(w)?;
            }
        }
        EmbeddingFormat::Binary => {
            let n_rows = u32::try_from(x.n_rows())
                .map_err(|_| Error::Format("row count does not fit u32".into()))?;
            let n_cols = u32::try_from(x.n_cols())
                .map_err(|_| Error::Format("column count does not fit u32".into()))?;
            w.write_all(EMBEDDING_MAGIC)?;
            w.write_all(&n_rows.to_le_bytes())?;
            w.write_all(&n_cols.to_le_bytes())?;
            for v in x.data() {
                let f = v.to_f32().unwrap_or(f32::NAN);
                w.write_all(&f.to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
