//! Node vectors over the character graph.
//!
//! Biased second-order random walks ([`generate_walks`]) feed a skip-gram
//! model with negative sampling ([`train_embeddings`]); the resulting
//! [`EmbeddingTable`] later becomes the frozen node channel of the fusion
//! classifier. Characters outside the table always map to the zero vector.

mod sgns;
mod walks;

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::chargraph::{format_codepoint, parse_codepoint};
use crate::error::{Error, Result};

pub use sgns::{sgns_loss_and_grads, train_embeddings};
pub use walks::{biased_step, generate_walks};

/// Frozen per-character vectors of dimension `dim`. Lookups of unknown
/// characters yield the all-zero out-of-vocabulary vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: BTreeMap<char, Vec<f64>>,
    oov: Vec<f64>,
}

impl EmbeddingTable {
    pub fn new(dim: usize, vectors: BTreeMap<char, Vec<f64>>) -> Result<EmbeddingTable> {
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        for (c, v) in &vectors {
            if v.len() != dim {
                return Err(Error::invalid(format!(
                    "vector for {} has {} entries, table dimension is {dim}",
                    format_codepoint(*c),
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid(format!("non-finite entry in vector for {}", format_codepoint(*c))));
            }
        }
        Ok(EmbeddingTable { dim, vectors, oov: vec![0.0; dim] })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn contains(&self, c: char) -> bool {
        self.vectors.contains_key(&c)
    }

    pub fn get(&self, c: char) -> Option<&[f64]> {
        self.vectors.get(&c).map(|v| v.as_slice())
    }

    /// Vector for `c`, or the zero vector when `c` is not in the table.
    pub fn lookup(&self, c: char) -> &[f64] {
        self.get(c).unwrap_or(&self.oov)
    }

    pub fn chars(&self) -> impl Iterator<Item = char> + '_ {
        self.vectors.keys().copied()
    }

    /// Writes `<count> <dim>` then one `U+XXXX v1 .. vdim` row per
    /// character, six decimals, codepoint-sorted.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let inner = |w: &mut BufWriter<std::fs::File>| -> std::io::Result<()> {
            writeln!(w, "{} {}", self.vectors.len(), self.dim)?;
            for (c, v) in &self.vectors {
                write!(w, "{}", format_codepoint(*c))?;
                for x in v {
                    write!(w, " {x:.6}")?;
                }
                writeln!(w)?;
            }
            w.flush()
        };
        inner(&mut w).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<EmbeddingTable> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines().enumerate();
        let (_, header) = match lines.next() {
            Some((i, Ok(line))) => (i, line),
            Some((_, Err(e))) => return Err(Error::io(path, e)),
            None => return Err(Error::parse(path, 1, "empty file, expected \"<count> <dim>\" header")),
        };
        let head: Vec<&str> = header.split_whitespace().collect();
        if head.len() != 2 {
            return Err(Error::parse(path, 1, format!("expected \"<count> <dim>\" header, got {header:?}")));
        }
        let count: usize =
            head[0].parse().map_err(|_| Error::parse(path, 1, format!("bad count {:?}", head[0])))?;
        let dim: usize = head[1].parse().map_err(|_| Error::parse(path, 1, format!("bad dim {:?}", head[1])))?;
        if dim == 0 {
            return Err(Error::parse(path, 1, "dimension must be positive"));
        }

        let mut vectors = BTreeMap::new();
        for (i, line) in lines {
            let lno = i + 1;
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != dim + 1 {
                return Err(Error::parse(path, lno, format!("expected {} fields, got {}", dim + 1, parts.len())));
            }
            let c = parse_codepoint(parts[0])
                .ok_or_else(|| Error::parse(path, lno, format!("bad codepoint {:?}", parts[0])))?;
            let mut v = Vec::with_capacity(dim);
            for tok in &parts[1..] {
                let x: f64 =
                    tok.parse().map_err(|_| Error::parse(path, lno, format!("bad float {tok:?}")))?;
                if !x.is_finite() {
                    return Err(Error::parse(path, lno, format!("non-finite value {tok:?}")));
                }
                v.push(x);
            }
            if vectors.insert(c, v).is_some() {
                return Err(Error::parse(path, lno, format!("duplicate codepoint {:?}", parts[0])));
            }
        }
        if vectors.len() != count {
            return Err(Error::parse(
                path,
                0,
                format!("header declares {count} rows, file carries {}", vectors.len()),
            ));
        }
        if vectors.is_empty() {
            return Err(Error::parse(path, 0, "embedding table has no rows"));
        }
        EmbeddingTable::new(dim, vectors)
    }
}

/// Biased-walk and skip-gram hyperparameters.
#[derive(Debug, Clone)]
pub struct WalkConfig {
    /// Return bias: weight 1/p for stepping back to the previous node.
    pub p: f64,
    /// In-out bias: weight 1/q for nodes not adjacent to the previous one.
    pub q: f64,
    pub walk_length: usize,
    pub walks_per_node: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig {
            p: 1.0,
            q: 1.0,
            walk_length: 40,
            walks_per_node: 10,
            window: 5,
            negatives: 5,
            epochs: 5,
            learning_rate: 0.025,
            seed: 0,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        // infinite p/q are legal limits (they starve their weight class)
        if !(self.p > 0.0) || !(self.q > 0.0) {
            return Err(Error::invalid(format!("p and q must be positive, got p={} q={}", self.p, self.q)));
        }
        if self.walk_length < 2 {
            return Err(Error::invalid(format!("walk_length must be at least 2, got {}", self.walk_length)));
        }
        if self.walks_per_node == 0 || self.window == 0 || self.negatives == 0 || self.epochs == 0 {
            return Err(Error::invalid(
                "walks_per_node, window, negatives and epochs must all be positive",
            ));
        }
        if self.window >= self.walk_length {
            return Err(Error::invalid(format!(
                "window ({}) must be smaller than walk_length ({})",
                self.window, self.walk_length
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        Ok(())
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_file_roundtrip() {
        let mut vectors = BTreeMap::new();
        vectors.insert('博', vec![0.125, -3.5, 0.000001]);
        vectors.insert('微', vec![1.0, 2.0, -0.333333]);
        let table = EmbeddingTable::new(3, vectors).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.txt");
        table.save(&path).unwrap();
        let loaded = EmbeddingTable::load(&path).unwrap();
        assert_eq!(loaded.dim(), 3);
        assert_eq!(loaded.len(), 2);
        for c in ['博', '微'] {
            for (a, b) in table.get(c).unwrap().iter().zip(loaded.get(c).unwrap()) {
                assert!((a - b).abs() < 5e-7);
            }
        }
    }

    #[test]
    fn lookup_of_unknown_char_is_zero() {
        let mut vectors = BTreeMap::new();
        vectors.insert('博', vec![1.0, 2.0]);
        let table = EmbeddingTable::new(2, vectors).unwrap();
        assert_eq!(table.lookup('微'), &[0.0, 0.0]);
        assert_eq!(table.lookup('x'), &[0.0, 0.0]);
        assert_eq!(table.get('微'), None);
    }

    #[test]
    fn load_rejects_bad_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.txt");
        std::fs::write(&path, "2 3\nU+535A 1.0 2.0 3.0\n").unwrap();
        assert!(EmbeddingTable::load(&path).is_err()); // count mismatch
        std::fs::write(&path, "1 3\nU+535A 1.0 2.0\n").unwrap();
        assert!(EmbeddingTable::load(&path).is_err()); // row width mismatch
        std::fs::write(&path, "1 3\nU+535A 1.0 2.0 NaN\n").unwrap();
        assert!(EmbeddingTable::load(&path).is_err()); // non-finite entry
    }

    #[test]
    fn config_validation() {
        assert!(WalkConfig::default().validate().is_ok());
        assert!(WalkConfig { p: 0.0, ..WalkConfig::default() }.validate().is_err());
        assert!(WalkConfig { walk_length: 1, ..WalkConfig::default() }.validate().is_err());
        assert!(WalkConfig { window: 40, walk_length: 40, ..WalkConfig::default() }.validate().is_err());
    }
}
