//! Dynamic value and schema model shared by the engine, the mutation
//! catalog, and the dataset codecs.
//!
//! Values are immutable after construction and cheap to clone; datasets are
//! immutable snapshots, so mutation operators always build new ones.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// A dynamically typed record value.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(i64),
    Float(f64),
    Str(String),
    /// Fixed-arity ordered sequence.
    Tuple(Vec<Value>),
    /// Variable-length sequence sharing one element schema.
    Collection(Vec<Value>),
}

/// Structural mirror of [`Value`] constructors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Schema {
    Int,
    Float,
    Str,
    Tuple(Vec<Schema>),
    Collection(Box<Schema>),
}

impl Schema {
    /// Arity-2 tuple, the shape every keyed operator expects.
    pub fn key_value(key: Schema, value: Schema) -> Schema {
        Schema::Tuple(vec![key, value])
    }

    /// Key/value component schemas when this is an arity-2 tuple.
    pub fn as_key_value(&self) -> Option<(&Schema, &Schema)> {
        match self {
            Schema::Tuple(parts) if parts.len() == 2 => Some((&parts[0], &parts[1])),
            _ => None,
        }
    }
}

impl fmt::Display for Schema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Schema::Int => write!(f, "Int"),
            Schema::Float => write!(f, "Float"),
            Schema::Str => write!(f, "Str"),
            Schema::Tuple(parts) => {
                write!(f, "(")?;
                for (i, p) in parts.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{p}")?;
                }
                write!(f, ")")
            }
            Schema::Collection(elem) => write!(f, "[{elem}]"),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(n) => write!(f, "{n}"),
            Value::Float(x) => write!(f, "{x}"),
            Value::Str(s) => write!(f, "{s:?}"),
            Value::Tuple(parts) => {
                write!(f, "(")?;
                for (i, p) in parts.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{p}")?;
                }
                write!(f, ")")
            }
            Value::Collection(elems) => {
                write!(f, "[")?;
                for (i, e) in elems.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{e}")?;
                }
                write!(f, "]")
            }
        }
    }
}

/// True iff the value's structure matches the schema recursively.
pub fn conforms(value: &Value, schema: &Schema) -> bool {
    match (value, schema) {
        (Value::Int(_), Schema::Int) => true,
        (Value::Float(_), Schema::Float) => true,
        (Value::Str(_), Schema::Str) => true,
        (Value::Tuple(parts), Schema::Tuple(part_schemas)) => {
            parts.len() == part_schemas.len()
                && parts
                    .iter()
                    .zip(part_schemas)
                    .all(|(v, s)| conforms(v, s))
        }
        (Value::Collection(elems), Schema::Collection(elem_schema)) => {
            elems.iter().all(|e| conforms(e, elem_schema))
        }
        _ => false,
    }
}

/// Deterministic size estimate in bytes.
///
/// Int and Float cost 8, Str costs its UTF-8 length, and containers add a
/// flat 8-byte header on top of their elements.
pub fn estimate_bytes(value: &Value) -> u64 {
    match value {
        Value::Int(_) | Value::Float(_) => 8,
        Value::Str(s) => s.len() as u64,
        Value::Tuple(parts) => 8 + parts.iter().map(estimate_bytes).sum::<u64>(),
        Value::Collection(elems) => 8 + elems.iter().map(estimate_bytes).sum::<u64>(),
    }
}

/// Appends a canonical, platform-independent byte encoding of the value.
///
/// This encoding backs the shuffle partitioner and all deterministic
/// orderings, so it must never change shape between releases.
pub fn canonical_bytes(value: &Value, out: &mut Vec<u8>) {
    match value {
        Value::Int(n) => {
            out.push(0);
            out.extend_from_slice(&n.to_be_bytes());
        }
        Value::Float(x) => {
            out.push(1);
            out.extend_from_slice(&x.to_bits().to_be_bytes());
        }
        Value::Str(s) => {
            out.push(2);
            out.extend_from_slice(&(s.len() as u64).to_be_bytes());
            out.extend_from_slice(s.as_bytes());
        }
        Value::Tuple(parts) => {
            out.push(3);
            out.extend_from_slice(&(parts.len() as u64).to_be_bytes());
            for p in parts {
                canonical_bytes(p, out);
            }
        }
        Value::Collection(elems) => {
            out.push(4);
            out.extend_from_slice(&(elems.len() as u64).to_be_bytes());
            for e in elems {
                canonical_bytes(e, out);
            }
        }
    }
}

/// Canonical encoding as an owned buffer.
pub fn canonical_key(value: &Value) -> Vec<u8> {
    let mut buf = Vec::new();
    canonical_bytes(value, &mut buf);
    buf
}

/// FNV-1a over the canonical byte encoding. Stable across runs, processes
/// and platforms, which keeps shuffle placement reproducible.
pub fn stable_hash(value: &Value) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut buf = Vec::new();
    canonical_bytes(value, &mut buf);
    let mut h = OFFSET;
    for b in buf {
        h ^= b as u64;
        h = h.wrapping_mul(PRIME);
    }
    h
}

/// A schema plus an ordered list of record partitions.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Schema,
    partitions: Vec<Vec<Value>>,
}

impl Dataset {
    /// Builds a dataset, checking every record against the schema.
    pub fn new(schema: Schema, partitions: Vec<Vec<Value>>) -> Result<Dataset> {
        if partitions.is_empty() {
            return Err(Error::Schema("dataset needs at least one partition".into()));
        }
        for (p, part) in partitions.iter().enumerate() {
            for (r, record) in part.iter().enumerate() {
                if !conforms(record, &schema) {
                    return Err(Error::Schema(format!(
                        "record {r} of partition {p} does not conform to {schema}"
                    )));
                }
            }
        }
        Ok(Dataset { schema, partitions })
    }

    /// Skips conformance checks; callers must guarantee them.
    pub(crate) fn new_unchecked(schema: Schema, partitions: Vec<Vec<Value>>) -> Dataset {
        debug_assert!(!partitions.is_empty());
        Dataset { schema, partitions }
    }

    /// String dataset from plain lines, one partition per outer vec.
    pub fn from_lines<S: Into<String>>(partitions: Vec<Vec<S>>) -> Result<Dataset> {
        let parts = partitions
            .into_iter()
            .map(|p| p.into_iter().map(|s| Value::Str(s.into())).collect())
            .collect();
        Dataset::new(Schema::Str, parts)
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn partitions(&self) -> &[Vec<Value>] {
        &self.partitions
    }

    pub fn partition_count(&self) -> usize {
        self.partitions.len()
    }

    pub fn total_records(&self) -> usize {
        self.partitions.iter().map(Vec::len).sum()
    }

    /// All records flattened in partition order.
    pub fn iter_records(&self) -> impl Iterator<Item = &Value> {
        self.partitions.iter().flatten()
    }
}

// ---------------------------------------------------------------------------
// Text codec: one record per line, partition i -> file part-0000i.
// ---------------------------------------------------------------------------

fn part_file_name(index: usize) -> String {
    format!("part-{index:05}")
}

/// Writes a Str dataset as line-oriented `part-NNNNN` files under `dir`.
pub fn encode_text(dataset: &Dataset, dir: &Path) -> Result<Vec<PathBuf>> {
    if dataset.schema() != &Schema::Str {
        return Err(Error::Schema(format!(
            "text encoding requires Str schema, got {}",
            dataset.schema()
        )));
    }
    fs::create_dir_all(dir)?;
    let mut paths = Vec::with_capacity(dataset.partition_count());
    for (i, part) in dataset.partitions().iter().enumerate() {
        let path = dir.join(part_file_name(i));
        let mut file = fs::File::create(&path)?;
        for record in part {
            let Value::Str(line) = record else {
                unreachable!("schema checked above")
            };
            if line.contains('\n') {
                return Err(Error::Encoding(format!(
                    "record in partition {i} contains an embedded newline"
                )));
            }
            file.write_all(line.as_bytes())?;
            file.write_all(b"\n")?;
        }
        paths.push(path);
    }
    Ok(paths)
}

/// Reads line-oriented files back into a Str dataset.
///
/// With `n_partitions == files.len()` each file becomes one partition, which
/// makes `decode_text(encode_text(d))` the identity for newline-free data.
/// Otherwise all lines are dealt round-robin into `n_partitions` partitions.
pub fn decode_text(files: &[PathBuf], n_partitions: usize) -> Result<Dataset> {
    if files.is_empty() || n_partitions == 0 {
        return Err(Error::Encoding(
            "decode_text needs at least one file and one partition".into(),
        ));
    }
    let mut per_file: Vec<Vec<Value>> = Vec::with_capacity(files.len());
    for path in files {
        let text = fs::read_to_string(path)?;
        per_file.push(text.lines().map(|l| Value::Str(l.to_string())).collect());
    }
    let partitions = if per_file.len() == n_partitions {
        per_file
    } else {
        let mut parts = vec![Vec::new(); n_partitions];
        for (i, record) in per_file.into_iter().flatten().enumerate() {
            parts[i % n_partitions].push(record);
        }
        parts
    };
    Dataset::new(Schema::Str, partitions)
}

/// Lists `part-NNNNN` files in a directory in partition order.
pub fn list_part_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .map(|n| n.starts_with("part-"))
                .unwrap_or(false)
        })
        .collect();
    paths.sort();
    Ok(paths)
}

// ---------------------------------------------------------------------------
// Structured codec: self-describing container for arbitrary schemas.
// ---------------------------------------------------------------------------

const MAGIC: [u8; 4] = *b"SFDS";
const FORMAT_VERSION: u32 = 1;

fn encode_schema(schema: &Schema, out: &mut Vec<u8>) {
    match schema {
        Schema::Int => out.push(0),
        Schema::Float => out.push(1),
        Schema::Str => out.push(2),
        Schema::Tuple(parts) => {
            out.push(3);
            out.extend_from_slice(&(parts.len() as u32).to_be_bytes());
            for p in parts {
                encode_schema(p, out);
            }
        }
        Schema::Collection(elem) => {
            out.push(4);
            encode_schema(elem, out);
        }
    }
}

/// Serializes any dataset to a single versioned container file.
pub fn encode_structured(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_be_bytes());
    encode_schema(dataset.schema(), &mut out);
    out.extend_from_slice(&(dataset.partition_count() as u32).to_be_bytes());
    for part in dataset.partitions() {
        out.extend_from_slice(&(part.len() as u64).to_be_bytes());
        for record in part {
            canonical_bytes(record, &mut out);
        }
    }
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(path, out)?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn err(&self, msg: &str) -> Error {
        Error::Format {
            offset: self.pos as u64,
            msg: msg.to_string(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(self.err("unexpected end of file"));
        }
        let slice = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn schema(&mut self) -> Result<Schema> {
        match self.u8()? {
            0 => Ok(Schema::Int),
            1 => Ok(Schema::Float),
            2 => Ok(Schema::Str),
            3 => {
                let arity = self.u32()? as usize;
                let mut parts = Vec::with_capacity(arity);
                for _ in 0..arity {
                    parts.push(self.schema()?);
                }
                Ok(Schema::Tuple(parts))
            }
            4 => Ok(Schema::Collection(Box::new(self.schema()?))),
            _ => Err(self.err("unknown schema tag")),
        }
    }

    fn value(&mut self) -> Result<Value> {
        match self.u8()? {
            0 => Ok(Value::Int(i64::from_be_bytes(
                self.take(8)?.try_into().unwrap(),
            ))),
            1 => Ok(Value::Float(f64::from_bits(self.u64()?))),
            2 => {
                let len = self.u64()? as usize;
                let bytes = self.take(len)?;
                let s = std::str::from_utf8(bytes)
                    .map_err(|_| self.err("invalid utf-8 in string value"))?;
                Ok(Value::Str(s.to_string()))
            }
            3 => {
                let arity = self.u64()? as usize;
                let mut parts = Vec::with_capacity(arity.min(1024));
                for _ in 0..arity {
                    parts.push(self.value()?);
                }
                Ok(Value::Tuple(parts))
            }
            4 => {
                let len = self.u64()? as usize;
                let mut elems = Vec::with_capacity(len.min(1024));
                for _ in 0..len {
                    elems.push(self.value()?);
                }
                Ok(Value::Collection(elems))
            }
            _ => Err(self.err("unknown value tag")),
        }
    }
}

/// Reads a container file written by [`encode_structured`].
pub fn decode_structured(path: &Path) -> Result<Dataset> {
    let buf = fs::read(path)?;
    let mut r = Reader { buf: &buf, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Format {
            offset: 0,
            msg: "bad magic".into(),
        });
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Format {
            offset: 4,
            msg: format!("unsupported format version {version}"),
        });
    }
    let schema = r.schema()?;
    let n_parts = r.u32()? as usize;
    if n_parts == 0 {
        return Err(r.err("zero partitions"));
    }
    let mut partitions = Vec::with_capacity(n_parts);
    for _ in 0..n_parts {
        let n_records = r.u64()? as usize;
        let mut records = Vec::with_capacity(n_records.min(1 << 20));
        for _ in 0..n_records {
            records.push(r.value()?);
        }
        partitions.push(records);
    }
    if r.pos != r.buf.len() {
        return Err(r.err("trailing bytes after dataset"));
    }
    // Re-check conformance so corrupt files cannot smuggle ill-typed records.
    Dataset::new(schema, partitions)
}
