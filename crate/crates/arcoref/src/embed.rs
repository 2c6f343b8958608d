//! Per-token input embeddings from three sources: a static word-vector
//! file, a precomputed contextual-vector file keyed by document and token
//! position, or a seeded hash of (surface, position) that needs no files.
//!
//! File formats:
//!
//! * static: one token per line, `token<TAB>v1 v2 ... vD`
//! * contextual: per document a header line `doc_id part dimension`, then
//!   one line of floats per token; documents separated by blank lines.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::conll::Document;
use crate::error::{Error, Result};

fn fnv64(bytes: &[u8], seed: u64) -> u64 {
    const FNV_PRIME: u64 = 0x100000001b3;
    let mut h = 0xcbf29ce484222325 ^ seed.wrapping_mul(0x9e3779b97f4a7c15);
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Deterministic unit-norm vector from a hash seed.
fn unit_vector(seed: u64, dim: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in &mut v {
            *x /= norm;
        }
    } else {
        v[0] = 1.0;
    }
    v
}

// ---------------------------------------------------------------------------
// Static word vectors
// ---------------------------------------------------------------------------

/// Word-vector lookup with a deterministic fallback for unknown tokens.
#[derive(Debug, Clone)]
pub struct StaticTable {
    dim: usize,
    table: HashMap<String, Vec<f64>>,
}

impl StaticTable {
    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(BufReader::new(file), path.to_path_buf())
    }

    pub fn from_reader(reader: impl BufRead, path: PathBuf) -> Result<Self> {
        let mut table = HashMap::new();
        let mut dim = None;
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(&path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let (token, rest) = line.split_once('\t').ok_or_else(|| Error::EmbeddingLoad {
                path: path.clone(),
                msg: format!("line {}: missing tab separator", i + 1),
            })?;
            let values: Vec<f64> = rest
                .split_whitespace()
                .map(|v| {
                    v.parse::<f64>().map_err(|_| Error::EmbeddingLoad {
                        path: path.clone(),
                        msg: format!("line {}: bad float {v:?}", i + 1),
                    })
                })
                .collect::<Result<_>>()?;
            match dim {
                None => dim = Some(values.len()),
                Some(d) if d != values.len() => {
                    return Err(Error::EmbeddingLoad {
                        path,
                        msg: format!(
                            "line {}: dimension {} does not match {}",
                            i + 1,
                            values.len(),
                            d
                        ),
                    })
                }
                Some(_) => {}
            }
            table.insert(token.to_string(), values);
        }
        let dim = dim.ok_or_else(|| Error::EmbeddingLoad {
            path,
            msg: "empty static embedding file".into(),
        })?;
        Ok(StaticTable { dim, table })
    }

    /// Synthetic table for tests: no file entries, all lookups fall back.
    pub fn synthetic(dim: usize) -> Self {
        StaticTable {
            dim,
            table: HashMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// File vector if present, otherwise a deterministic fallback; never fails.
    pub fn lookup(&self, token: &str) -> Vec<f64> {
        match self.table.get(token) {
            Some(v) => v.clone(),
            None => unit_vector(fnv64(token.as_bytes(), 0x5747), self.dim),
        }
    }
}

// ---------------------------------------------------------------------------
// Contextual vectors
// ---------------------------------------------------------------------------

/// Precomputed per-token contextual vectors, keyed by (doc_id, part).
#[derive(Debug, Clone)]
pub struct ContextualTable {
    dim: usize,
    docs: HashMap<(String, usize), Vec<Vec<f64>>>,
}

impl ContextualTable {
    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(BufReader::new(file), path.to_path_buf())
    }

    pub fn from_reader(reader: impl BufRead, path: PathBuf) -> Result<Self> {
        let mut docs = HashMap::new();
        let mut dim: Option<usize> = None;
        let mut current: Option<((String, usize), usize)> = None;
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(&path, e))?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                current = None;
                continue;
            }
            match &current {
                None => {
                    let cols: Vec<&str> = trimmed.split_whitespace().collect();
                    if cols.len() != 3 {
                        return Err(Error::EmbeddingLoad {
                            path,
                            msg: format!(
                                "line {}: expected header `doc_id part dimension`",
                                i + 1
                            ),
                        });
                    }
                    let part: usize = cols[1].parse().map_err(|_| Error::EmbeddingLoad {
                        path: path.clone(),
                        msg: format!("line {}: bad part {:?}", i + 1, cols[1]),
                    })?;
                    let d: usize = cols[2].parse().map_err(|_| Error::EmbeddingLoad {
                        path: path.clone(),
                        msg: format!("line {}: bad dimension {:?}", i + 1, cols[2]),
                    })?;
                    match dim {
                        None => dim = Some(d),
                        Some(existing) if existing != d => {
                            return Err(Error::EmbeddingLoad {
                                path,
                                msg: format!(
                                    "line {}: dimension {d} does not match {existing}",
                                    i + 1
                                ),
                            })
                        }
                        Some(_) => {}
                    }
                    let key = (cols[0].to_string(), part);
                    docs.insert(key.clone(), Vec::new());
                    current = Some((key, d));
                }
                Some((key, d)) => {
                    let values: Vec<f64> = trimmed
                        .split_whitespace()
                        .map(|v| {
                            v.parse::<f64>().map_err(|_| Error::EmbeddingLoad {
                                path: path.clone(),
                                msg: format!("line {}: bad float {v:?}", i + 1),
                            })
                        })
                        .collect::<Result<_>>()?;
                    if values.len() != *d {
                        return Err(Error::EmbeddingLoad {
                            path,
                            msg: format!(
                                "line {}: got {} values, header says {d}",
                                i + 1,
                                values.len()
                            ),
                        });
                    }
                    docs.get_mut(key).unwrap().push(values);
                }
            }
        }
        let dim = dim.ok_or_else(|| Error::EmbeddingLoad {
            path,
            msg: "empty contextual embedding file".into(),
        })?;
        Ok(ContextualTable { dim, docs })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lookup(&self, doc_id: &str, part_id: usize, token_index: usize) -> Result<&[f64]> {
        self.docs
            .get(&(doc_id.to_string(), part_id))
            .and_then(|rows| rows.get(token_index))
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::EmbeddingLookup {
                key: format!("({doc_id}, part {part_id}, token {token_index})"),
            })
    }
}

// ---------------------------------------------------------------------------
// Hashed synthetic vectors
// ---------------------------------------------------------------------------

/// Unit-norm vector that is a pure function of (surface, position). Lets the
/// whole toolkit run with no embedding files.
#[derive(Debug, Clone)]
pub struct HashedSynthetic {
    pub dim: usize,
    pub salt: u64,
}

impl HashedSynthetic {
    pub fn new(dim: usize) -> Self {
        HashedSynthetic { dim, salt: 0xa11a }
    }

    pub fn vector(&self, surface: &str, position: usize) -> Vec<f64> {
        let h = fnv64(surface.as_bytes(), self.salt) ^ (position as u64).wrapping_mul(0x9e37);
        unit_vector(h, self.dim)
    }
}

// ---------------------------------------------------------------------------
// Composition
// ---------------------------------------------------------------------------

/// The contextual slot of the stack: file-backed or hashed.
#[derive(Debug, Clone)]
pub enum ContextualSource {
    File(ContextualTable),
    Hashed(HashedSynthetic),
}

impl ContextualSource {
    pub fn dim(&self) -> usize {
        match self {
            ContextualSource::File(t) => t.dim(),
            ContextualSource::Hashed(h) => h.dim,
        }
    }
}

/// The non-trainable part of the token embedding: contextual vectors and
/// static word vectors in fixed order. The trainable character CNN output
/// is concatenated downstream by the models.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingStack {
    pub contextual: Option<ContextualSource>,
    pub static_words: Option<StaticTable>,
}

impl EmbeddingStack {
    /// All-synthetic stack: hashed contextual vectors only.
    pub fn hashed(dim: usize) -> Self {
        EmbeddingStack {
            contextual: Some(ContextualSource::Hashed(HashedSynthetic::new(dim))),
            static_words: None,
        }
    }

    /// Sum of the enabled source dimensions.
    pub fn fixed_dim(&self) -> usize {
        self.contextual.as_ref().map_or(0, ContextualSource::dim)
            + self.static_words.as_ref().map_or(0, StaticTable::dim)
    }

    /// Dimension of the contextual source alone (0 when disabled).
    pub fn contextual_dim(&self) -> usize {
        self.contextual.as_ref().map_or(0, ContextualSource::dim)
    }

    /// The contextual vector alone, for consumers that ignore word vectors.
    pub fn contextual_vector(&self, doc: &Document, token_index: usize) -> Result<Vec<f64>> {
        let ctx_only = EmbeddingStack {
            contextual: self.contextual.clone(),
            static_words: None,
        };
        ctx_only.fixed_vector(doc, token_index)
    }

    /// `[contextual; static]` for one token. Pure given (document, index).
    pub fn fixed_vector(&self, doc: &Document, token_index: usize) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.fixed_dim());
        if let Some(ctx) = &self.contextual {
            match ctx {
                ContextualSource::File(table) => {
                    if token_index >= doc.len() {
                        return Err(Error::EmbeddingLookup {
                            key: format!(
                                "({}, part {}, token {token_index}) past document length {}",
                                doc.doc_id,
                                doc.part_id,
                                doc.len()
                            ),
                        });
                    }
                    out.extend_from_slice(table.lookup(&doc.doc_id, doc.part_id, token_index)?);
                }
                ContextualSource::Hashed(h) => {
                    let surface = &doc
                        .tokens
                        .get(token_index)
                        .ok_or_else(|| Error::EmbeddingLookup {
                            key: format!(
                                "({}, part {}, token {token_index}) past document length {}",
                                doc.doc_id,
                                doc.part_id,
                                doc.len()
                            ),
                        })?
                        .surface;
                    out.extend(h.vector(surface, token_index));
                }
            }
        }
        if let Some(words) = &self.static_words {
            out.extend(words.lookup(&doc.tokens[token_index].surface));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conll::Token;

    fn doc(words: &[&str]) -> Document {
        Document {
            doc_id: "d".into(),
            part_id: 0,
            tokens: words
                .iter()
                .enumerate()
                .map(|(i, w)| Token::new(*w, 0, i))
                .collect(),
            gold_clusters: crate::conll::ClusterSet::empty(),
        }
    }

    #[test]
    fn static_lookup_prefers_file_vector() {
        let data = "the\t1.0 2.0 3.0\ncat\t-1.0 0.0 0.5\n";
        let table = StaticTable::from_reader(data.as_bytes(), "mem".into()).unwrap();
        assert_eq!(table.dim(), 3);
        assert_eq!(table.lookup("cat"), vec![-1.0, 0.0, 0.5]);
    }

    #[test]
    fn static_unknown_token_deterministic() {
        let table = StaticTable::synthetic(300);
        let a = table.lookup("مجهول");
        let b = table.lookup("مجهول");
        assert_eq!(a, b);
        assert_eq!(a.len(), 300);
        assert_ne!(a, table.lookup("آخر"));
    }

    #[test]
    fn static_dimension_mismatch_rejected() {
        let data = "a\t1.0 2.0\nb\t1.0 2.0 3.0\n";
        assert!(StaticTable::from_reader(data.as_bytes(), "mem".into()).is_err());
    }

    #[test]
    fn contextual_file_round_trip() {
        let data = "docA 0 4\n0.1 0.2 0.3 0.4\n1.0 1.1 1.2 1.3\n\ndocB 2 4\n9.0 8.0 7.0 6.0\n";
        let table = ContextualTable::from_reader(data.as_bytes(), "mem".into()).unwrap();
        assert_eq!(table.dim(), 4);
        assert_eq!(table.lookup("docA", 0, 1).unwrap(), &[1.0, 1.1, 1.2, 1.3]);
        assert_eq!(table.lookup("docB", 2, 0).unwrap(), &[9.0, 8.0, 7.0, 6.0]);
    }

    #[test]
    fn contextual_missing_record_names_key() {
        let data = "docA 0 2\n0.1 0.2\n";
        let table = ContextualTable::from_reader(data.as_bytes(), "mem".into()).unwrap();
        let err = table.lookup("docA", 0, 5).unwrap_err();
        assert!(err.to_string().contains("token 5"), "{err}");
        assert!(table.lookup("docZ", 0, 0).is_err());
    }

    #[test]
    fn hashed_is_pure_function_of_surface_and_position() {
        let h = HashedSynthetic::new(16);
        assert_eq!(h.vector("كتاب", 3), h.vector("كتاب", 3));
        assert_ne!(h.vector("كتاب", 3), h.vector("كتاب", 4));
        assert_ne!(h.vector("كتاب", 3), h.vector("قلم", 3));
        let norm: f64 = h.vector("x", 0).iter().map(|v| v * v).sum();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stack_dimension_is_sum_of_sources() {
        let stack = EmbeddingStack {
            contextual: Some(ContextualSource::Hashed(HashedSynthetic::new(768))),
            static_words: Some(StaticTable::synthetic(300)),
        };
        assert_eq!(stack.fixed_dim(), 1068);
        let d = doc(&["a", "b"]);
        assert_eq!(stack.fixed_vector(&d, 0).unwrap().len(), 1068);

        let without_static = EmbeddingStack {
            contextual: stack.contextual.clone(),
            static_words: None,
        };
        assert_eq!(stack.fixed_dim() - without_static.fixed_dim(), 300);
    }

    #[test]
    fn stack_lookup_past_length_errors() {
        let stack = EmbeddingStack::hashed(8);
        let d = doc(&["a"]);
        assert!(stack.fixed_vector(&d, 1).is_err());
    }
}
