//! Named parameter storage and the versioned checkpoint format.
//!
//! Checkpoints are line-oriented text. Values are written as the hexadecimal
//! bit pattern of each `f64`, so loading reproduces parameters bit for bit:
//!
//! ```text
//! arcoref-checkpoint v1
//! #meta <key> <value>
//! <name>\t<d1>x<d2>\t<hex> <hex> ...
//! ```

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;

const MAGIC: &str = "arcoref-checkpoint v1";

/// Named parameters, ordered by name for deterministic iteration.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.params.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.get_mut(name)
    }

    /// Panics if the parameter is missing; call sites run after shape
    /// validation against the model configuration.
    pub fn expect(&self, name: &str) -> &Tensor {
        self.params
            .get(name)
            .unwrap_or_else(|| panic!("parameter {name} missing from store"))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn total_values(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }

    /// Verifies that a parameter exists with the given shape.
    pub fn check_shape(&self, name: &str, shape: &[usize]) -> Result<()> {
        match self.params.get(name) {
            None => Err(Error::Dimension {
                expected: format!("{shape:?}"),
                got: "missing".into(),
                context: format!("parameter {name}"),
            }),
            Some(t) if t.shape() != shape => Err(Error::Dimension {
                expected: format!("{shape:?}"),
                got: format!("{:?}", t.shape()),
                context: format!("parameter {name}"),
            }),
            Some(_) => Ok(()),
        }
    }

    pub fn save(&self, mut writer: impl Write, meta: &BTreeMap<String, String>) -> Result<()> {
        let err = |e: std::io::Error| Error::Checkpoint(format!("write failed: {e}"));
        writeln!(writer, "{MAGIC}").map_err(err)?;
        for (k, v) in meta {
            writeln!(writer, "#meta {k} {v}").map_err(err)?;
        }
        for (name, tensor) in &self.params {
            let shape = tensor
                .shape()
                .iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join("x");
            write!(writer, "{name}\t{shape}\t").map_err(err)?;
            for (i, v) in tensor.data().iter().enumerate() {
                if i > 0 {
                    write!(writer, " ").map_err(err)?;
                }
                write!(writer, "{:x}", v.to_bits()).map_err(err)?;
            }
            writeln!(writer).map_err(err)?;
        }
        Ok(())
    }

    pub fn load(reader: impl BufRead) -> Result<(Self, BTreeMap<String, String>)> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .transpose()
            .map_err(|e| Error::Checkpoint(format!("read failed: {e}")))?
            .unwrap_or_default();
        if header.trim() != MAGIC {
            return Err(Error::Checkpoint(format!(
                "unrecognized header {:?}, expected {MAGIC:?}",
                header.trim()
            )));
        }
        let mut store = ParamStore::new();
        let mut meta = BTreeMap::new();
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::Checkpoint(format!("read failed: {e}")))?;
            if line.trim().is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("#meta ") {
                let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                meta.insert(k.to_string(), v.to_string());
                continue;
            }
            let mut fields = line.split('\t');
            let (name, shape_str, values) = match (fields.next(), fields.next(), fields.next()) {
                (Some(a), Some(b), Some(c)) => (a, b, c),
                _ => {
                    return Err(Error::Checkpoint(format!(
                        "malformed parameter line {} (expected name<TAB>shape<TAB>values)",
                        i + 2
                    )))
                }
            };
            let shape: Vec<usize> = shape_str
                .split('x')
                .map(|d| {
                    d.parse::<usize>().map_err(|_| {
                        Error::Checkpoint(format!("bad shape {shape_str:?} for {name}"))
                    })
                })
                .collect::<Result<_>>()?;
            let data: Vec<f64> = values
                .split_whitespace()
                .map(|h| {
                    u64::from_str_radix(h, 16)
                        .map(f64::from_bits)
                        .map_err(|_| Error::Checkpoint(format!("bad value {h:?} for {name}")))
                })
                .collect::<Result<_>>()?;
            let expected: usize = shape.iter().product();
            if data.len() != expected {
                return Err(Error::Checkpoint(format!(
                    "{name}: {} values for shape {shape:?}",
                    data.len()
                )));
            }
            store.insert(name, Tensor::from_vec(shape, data));
        }
        Ok((store, meta))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn save_load_bit_exact() {
        let mut store = ParamStore::new();
        store.insert("a.w", Tensor::matrix(2, 2, vec![0.1, -2.5e-300, f64::MIN_POSITIVE, 3.0]));
        store.insert("b", Tensor::vector(vec![-0.0, 1.0 / 3.0]));
        let mut meta = BTreeMap::new();
        meta.insert("trained_mode".to_string(), "anneal".to_string());

        let mut buf = Vec::new();
        store.save(&mut buf, &meta).unwrap();
        let (loaded, loaded_meta) = ParamStore::load(buf.as_slice()).unwrap();

        assert_eq!(loaded_meta.get("trained_mode").map(String::as_str), Some("anneal"));
        for (name, t) in store.iter() {
            let l = loaded.get(name).unwrap();
            assert_eq!(l.shape(), t.shape());
            for (a, b) in l.data().iter().zip(t.data()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn bad_header_rejected() {
        let err = ParamStore::load("not a checkpoint\n".as_bytes());
        assert!(err.is_err());
    }

    #[test]
    fn shape_check_reports_both_shapes() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::matrix(2, 3, vec![0.0; 6]));
        let err = store.check_shape("w", &[3, 2]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[3, 2]") && msg.contains("[2, 3]"), "{msg}");
    }
}
