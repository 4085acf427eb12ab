//! Frozen feature tables: static word vectors, contextual token vectors and
//! visual features, plus the binary file that carries them.
//!
//! # File layout
//!
//! Little-endian throughout. `str` is a `u32` byte length followed by UTF-8
//! bytes; `row` is a `u32` element count followed by that many `f32`.
//!
//! ```text
//! magic       8 bytes   "FCEMBED1"
//! header      u64 static_count,     u32 static_dim
//!             u64 contextual_count, u32 contextual_dim
//!             u64 visual_count,     u32 visual_dim
//!             str comment
//! static      static_count     x (str token, row)
//! contextual  contextual_count x (str record_id, u32 position, row)
//! visual      visual_count     x (str image_id, row)
//! ```
//!
//! Every row length must equal its section's declared dim and the file must
//! end exactly after the last visual entry. Contextual entries may come in any
//! order, but each covered record must have positions `0..len` exactly once.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"FCEMBED1";

pub const STATIC_DIM: usize = 300;
pub const CONTEXTUAL_DIM: usize = 1024;
pub const VISUAL_DIM: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreDims {
    pub static_dim: usize,
    pub contextual_dim: usize,
    pub visual_dim: usize,
}

impl Default for StoreDims {
    fn default() -> Self {
        StoreDims {
            static_dim: STATIC_DIM,
            contextual_dim: CONTEXTUAL_DIM,
            visual_dim: VISUAL_DIM,
        }
    }
}

/// Rows addressed by a string key, kept in insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyedRows {
    dim: usize,
    keys: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f32>,
}

impl KeyedRows {
    pub fn new(dim: usize) -> Self {
        KeyedRows {
            dim,
            keys: Vec::new(),
            index: HashMap::new(),
            data: Vec::new(),
        }
    }

    pub fn insert(&mut self, key: impl Into<String>, row: &[f32]) -> Result<()> {
        let key = key.into();
        if row.len() != self.dim {
            return Err(Error::DimensionMismatch {
                what: format!("row {key:?}"),
                expected: self.dim,
                found: row.len(),
            });
        }
        if self.index.contains_key(&key) {
            return Err(Error::DuplicateId(key));
        }
        self.index.insert(key.clone(), self.keys.len());
        self.keys.push(key);
        self.data.extend_from_slice(row);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&[f32]> {
        self.index.get(key).map(|&i| self.row(i))
    }

    fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.keys
            .iter()
            .enumerate()
            .map(|(i, k)| (k.as_str(), self.row(i)))
    }
}

/// Static word vectors. Out-of-vocabulary tokens map to a zero row.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticWordTable {
    rows: KeyedRows,
    zero: Vec<f32>,
}

impl StaticWordTable {
    pub fn new(dim: usize) -> Self {
        StaticWordTable {
            rows: KeyedRows::new(dim),
            zero: vec![0.0; dim],
        }
    }

    pub fn insert(&mut self, token: impl Into<String>, row: &[f32]) -> Result<()> {
        self.rows.insert(token, row)
    }

    pub fn lookup(&self, token: &str) -> &[f32] {
        self.rows.get(token).unwrap_or(&self.zero)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.rows.get(token).is_some()
    }

    pub fn dim(&self) -> usize {
        self.rows.dim()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.rows.iter()
    }
}

/// Contextual token vectors keyed by `(record_id, position)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextualTokenTable {
    dim: usize,
    records: Vec<String>,
    index: HashMap<String, usize>,
    /// `(start_row, len)` per record.
    spans: Vec<(usize, usize)>,
    data: Vec<f32>,
}

impl ContextualTokenTable {
    pub fn new(dim: usize) -> Self {
        ContextualTokenTable {
            dim,
            records: Vec::new(),
            index: HashMap::new(),
            spans: Vec::new(),
            data: Vec::new(),
        }
    }

    /// Adds all positions of one record; `rows` holds `len * dim` values.
    pub fn insert_record(&mut self, record_id: impl Into<String>, rows: &[f32]) -> Result<()> {
        let record_id = record_id.into();
        if rows.len() % self.dim.max(1) != 0 {
            return Err(Error::DimensionMismatch {
                what: format!("contextual rows of {record_id:?}"),
                expected: self.dim,
                found: rows.len() % self.dim.max(1),
            });
        }
        if self.index.contains_key(&record_id) {
            return Err(Error::DuplicateId(record_id));
        }
        let start = self.data.len() / self.dim.max(1);
        self.spans.push((start, rows.len() / self.dim.max(1)));
        self.index.insert(record_id.clone(), self.records.len());
        self.records.push(record_id);
        self.data.extend_from_slice(rows);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of stored vectors across all records.
    pub fn entry_count(&self) -> usize {
        self.spans.iter().map(|s| s.1).sum()
    }

    pub fn record_len(&self, record_id: &str) -> Option<usize> {
        self.index.get(record_id).map(|&i| self.spans[i].1)
    }

    pub fn lookup(&self, record_id: &str, position: usize) -> Result<&[f32]> {
        let &i = self
            .index
            .get(record_id)
            .ok_or_else(|| Error::UncoveredRecord(record_id.to_string()))?;
        let (start, len) = self.spans[i];
        if position >= len {
            return Err(Error::PositionOutOfRange {
                record: record_id.to_string(),
                position,
                len,
            });
        }
        let row = start + position;
        Ok(&self.data[row * self.dim..(row + 1) * self.dim])
    }

    pub fn records(&self) -> impl Iterator<Item = (&str, usize)> {
        self.records
            .iter()
            .zip(&self.spans)
            .map(|(r, s)| (r.as_str(), s.1))
    }
}

/// Visual feature vectors keyed by image id.
#[derive(Debug, Clone, PartialEq)]
pub struct VisualFeatureTable {
    rows: KeyedRows,
}

impl VisualFeatureTable {
    pub fn new(dim: usize) -> Self {
        VisualFeatureTable {
            rows: KeyedRows::new(dim),
        }
    }

    pub fn insert(&mut self, image_id: impl Into<String>, row: &[f32]) -> Result<()> {
        self.rows.insert(image_id, row)
    }

    pub fn lookup(&self, image_id: &str) -> Result<&[f32]> {
        self.rows
            .get(image_id)
            .ok_or_else(|| Error::UnknownImage(image_id.to_string()))
    }

    pub fn dim(&self) -> usize {
        self.rows.dim()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.rows.iter()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    pub comment: String,
    pub static_words: StaticWordTable,
    pub contextual: ContextualTokenTable,
    pub visual: VisualFeatureTable,
}

impl EmbeddingStore {
    pub fn dims(&self) -> StoreDims {
        StoreDims {
            static_dim: self.static_words.dim(),
            contextual_dim: self.contextual.dim(),
            visual_dim: self.visual.dim(),
        }
    }

    pub fn check_dims(&self, expected: StoreDims) -> Result<()> {
        let found = self.dims();
        for (what, e, f) in [
            ("static word dimension", expected.static_dim, found.static_dim),
            ("contextual dimension", expected.contextual_dim, found.contextual_dim),
            ("visual dimension", expected.visual_dim, found.visual_dim),
        ] {
            if e != f {
                return Err(Error::DimensionMismatch {
                    what: what.into(),
                    expected: e,
                    found: f,
                });
            }
        }
        Ok(())
    }

    /// Every record with tokens has exactly one contextual row per token, and
    /// every referenced image has a visual row.
    pub fn check_coverage(&self, corpus: &Corpus) -> Result<()> {
        let records = corpus
            .queries()
            .iter()
            .map(|q| (&q.id, q.expanded_len(), &q.image_ids))
            .chain(
                corpus
                    .docs()
                    .iter()
                    .map(|d| (&d.id, d.doc_tokens.len(), &d.image_ids)),
            );
        for (id, len, images) in records {
            let covered = self.contextual.record_len(id).unwrap_or(0);
            if len > 0 && covered == 0 {
                return Err(Error::UncoveredRecord(id.clone()));
            }
            if covered != len {
                return Err(Error::DimensionMismatch {
                    what: format!("contextual positions of record {id:?}"),
                    expected: len,
                    found: covered,
                });
            }
            if let Some(img) = images.iter().find(|i| self.visual.lookup(i).is_err()) {
                return Err(Error::UnknownImage(img.clone()));
            }
        }
        Ok(())
    }

    pub fn lookup_contextual(&self, record_id: &str, position: usize) -> Result<&[f32]> {
        self.contextual.lookup(record_id, position)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        for (count, dim) in [
            (self.static_words.len(), self.static_words.dim()),
            (self.contextual.entry_count(), self.contextual.dim()),
            (self.visual.len(), self.visual.dim()),
        ] {
            out.extend_from_slice(&(count as u64).to_le_bytes());
            out.extend_from_slice(&(dim as u32).to_le_bytes());
        }
        put_str(&mut out, &self.comment);
        for (k, row) in self.static_words.iter() {
            put_str(&mut out, k);
            put_row(&mut out, row);
        }
        for (rec, len) in self.contextual.records() {
            for pos in 0..len {
                put_str(&mut out, rec);
                out.extend_from_slice(&(pos as u32).to_le_bytes());
                put_row(&mut out, self.contextual.lookup(rec, pos).expect("in range"));
            }
        }
        for (k, row) in self.visual.iter() {
            put_str(&mut out, k);
            put_row(&mut out, row);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(8, "magic").ok() != Some(MAGIC.as_slice()) {
            return Err(Error::BadMagic {
                expected: "FCEMBED1",
            });
        }
        let mut header = [(0usize, 0usize); 3];
        for h in &mut header {
            let count = r.u64("header")? as usize;
            let dim = r.u32("header")? as usize;
            *h = (count, dim);
        }
        let comment = r.string("comment")?;
        let [(n_static, static_dim), (n_ctx, ctx_dim), (n_vis, vis_dim)] = header;

        let mut static_words = StaticWordTable::new(static_dim);
        for _ in 0..n_static {
            let key = r.string("static key")?;
            let row = r.row("static", static_dim)?;
            static_words.insert(key, &row)?;
        }

        let mut grouped: Vec<(String, Vec<(u32, Vec<f32>)>)> = Vec::new();
        let mut group_index: HashMap<String, usize> = HashMap::new();
        for _ in 0..n_ctx {
            let rec = r.string("contextual key")?;
            let pos = r.u32("contextual position")?;
            let row = r.row("contextual", ctx_dim)?;
            let gi = *group_index.entry(rec.clone()).or_insert_with(|| {
                grouped.push((rec, Vec::new()));
                grouped.len() - 1
            });
            grouped[gi].1.push((pos, row));
        }
        let mut contextual = ContextualTokenTable::new(ctx_dim);
        for (rec, mut rows) in grouped {
            rows.sort_by_key(|(p, _)| *p);
            if rows.iter().enumerate().any(|(i, (p, _))| *p as usize != i) {
                return Err(Error::Invalid(format!(
                    "contextual positions of record {rec:?} are not exactly 0..{}",
                    rows.len()
                )));
            }
            let flat: Vec<f32> = rows.into_iter().flat_map(|(_, v)| v).collect();
            contextual.insert_record(rec, &flat)?;
        }

        let mut visual = VisualFeatureTable::new(vis_dim);
        for _ in 0..n_vis {
            let key = r.string("visual key")?;
            let row = r.row("visual", vis_dim)?;
            visual.insert(key, &row)?;
        }
        if r.pos != bytes.len() {
            return Err(Error::Invalid(format!(
                "{} trailing bytes after the visual section",
                bytes.len() - r.pos
            )));
        }
        Ok(EmbeddingStore {
            comment,
            static_words,
            contextual,
            visual,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn put_row(out: &mut Vec<u8>, row: &[f32]) {
    out.extend_from_slice(&(row.len() as u32).to_le_bytes());
    for x in row {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

pub(crate) struct Reader<'a> {
    pub(crate) buf: &'a [u8],
    pub(crate) pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Truncated {
                what: what.to_string(),
            }),
        }
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    pub(crate) fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub(crate) fn string(&mut self, what: &str) -> Result<String> {
        let n = self.u32(what)? as usize;
        let bytes = self.take(n, what)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| Error::Invalid(format!("{what} is not valid UTF-8")))
    }

    fn row(&mut self, section: &str, dim: usize) -> Result<Vec<f32>> {
        let n = self.u32(section)? as usize;
        if n != dim {
            return Err(Error::DimensionMismatch {
                what: format!("{section} row"),
                expected: dim,
                found: n,
            });
        }
        (0..n).map(|_| self.f32(section)).collect()
    }
}

/// Parameters of a deterministic synthetic store.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticStoreSpec {
    pub seed: u64,
    pub dims: StoreDims,
    /// Weight of the per-token anchor in each contextual vector; the rest is
    /// per-(token sequence, position) noise. Must lie in `[0, 1)` so that repeated
    /// tokens get distinct contextual vectors.
    pub context_anchor: f64,
}

impl SyntheticStoreSpec {
    pub fn new(seed: u64) -> Self {
        SyntheticStoreSpec {
            seed,
            dims: StoreDims::default(),
            context_anchor: 0.8,
        }
    }
}

fn fnv1a(parts: &[&[u8]]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for &b in *part {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h ^= 0xff;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Seeded standard-normal direction for `key`, unit length, in f64.
fn unit_direction(seed: u64, domain: &str, key: &[&[u8]], dim: usize) -> Vec<f64> {
    let mut parts: Vec<&[u8]> = vec![domain.as_bytes()];
    parts.extend_from_slice(key);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(&parts));
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Casts to f32 and renormalizes in f64 so the stored row has unit norm.
fn to_unit_f32(v: &[f64]) -> Vec<f32> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| (x / norm) as f32).collect()
}

/// Generates seeded unit vectors for every vocabulary token, every query and
/// document token position, and every image id referenced by the corpus.
///
/// Keys are hashed into per-key seeds, so a token's static vector does not
/// depend on the rest of the vocabulary. A contextual vector mixes a per-token
/// anchor with noise keyed on the record's whole token sequence and the
/// position, so records with identical text get identical rows. Records
/// sharing an image id share its visual vector.
pub fn generate_synthetic(spec: &SyntheticStoreSpec, corpus: &Corpus) -> EmbeddingStore {
    let dims = spec.dims;
    let mut vocab = BTreeSet::new();
    let mut images = BTreeSet::new();
    for q in corpus.queries() {
        vocab.extend(q.expanded_tokens());
        images.extend(q.image_ids.iter().map(String::as_str));
    }
    for d in corpus.docs() {
        vocab.extend(d.doc_tokens.iter().map(String::as_str));
        images.extend(d.image_ids.iter().map(String::as_str));
    }

    let mut static_words = StaticWordTable::new(dims.static_dim);
    for tok in &vocab {
        let v = unit_direction(spec.seed, "static", &[tok.as_bytes()], dims.static_dim);
        static_words.insert(*tok, &to_unit_f32(&v)).expect("unique");
    }

    let alpha = spec.context_anchor.clamp(0.0, 0.999);
    let beta = (1.0 - alpha * alpha).sqrt();
    let mut contextual = ContextualTokenTable::new(dims.contextual_dim);
    let mut add_record = |id: &str, tokens: &mut dyn Iterator<Item = &str>| {
        let tokens: Vec<&str> = tokens.collect();
        let parts: Vec<&[u8]> = tokens.iter().map(|t| t.as_bytes()).collect();
        let sequence = fnv1a(&parts).to_le_bytes();
        let mut flat = Vec::new();
        for (pos, tok) in tokens.iter().enumerate() {
            let anchor = unit_direction(
                spec.seed,
                "ctx-anchor",
                &[tok.as_bytes()],
                dims.contextual_dim,
            );
            let noise = unit_direction(
                spec.seed,
                "ctx-noise",
                &[&sequence, &(pos as u32).to_le_bytes()],
                dims.contextual_dim,
            );
            let mixed: Vec<f64> = anchor
                .iter()
                .zip(&noise)
                .map(|(a, n)| alpha * a + beta * n)
                .collect();
            flat.extend(to_unit_f32(&mixed));
        }
        contextual.insert_record(id, &flat).expect("unique record ids");
    };
    for q in corpus.queries() {
        add_record(&q.id, &mut q.expanded_tokens());
    }
    for d in corpus.docs() {
        add_record(&d.id, &mut d.doc_tokens.iter().map(String::as_str));
    }

    let mut visual = VisualFeatureTable::new(dims.visual_dim);
    for img in &images {
        let v = unit_direction(spec.seed, "visual", &[img.as_bytes()], dims.visual_dim);
        visual.insert(*img, &to_unit_f32(&v)).expect("unique");
    }

    EmbeddingStore {
        comment: format!(
            "synthetic seed={} context_anchor={}",
            spec.seed, spec.context_anchor
        ),
        static_words,
        contextual,
        visual,
    }
}
