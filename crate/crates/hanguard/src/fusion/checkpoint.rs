//! Model checkpointing.
//!
//! Text format, one header line `FUSIONNET v1`, then `key value` config
//! lines, the vocabulary as `U+XXXX` lines, and every parameter in declared
//! order. Floats are written with Rust's shortest-roundtrip formatting, so a
//! save/load cycle reproduces every bit. The node table itself is not
//! copied; the checkpoint records the embedding file's path and SHA-256 and
//! loading re-reads and re-verifies that file.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use sha2::{Digest, Sha256};

use crate::chargraph::{format_codepoint, parse_codepoint};
use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};

use super::params::{expected_shapes, ParamSet};
use super::{FusionConfig, FusionModel, Mode, Vocab};

pub fn sha256_hex(path: &Path) -> Result<String> {
    let mut file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

impl FusionModel {
    pub fn save(&self, path: &Path) -> Result<()> {
        if !self.node_table.is_empty() && self.embedding_provenance.is_none() {
            return Err(Error::invalid(
                "model carries an in-memory embedding table with no file provenance; \
                 save the table with EmbeddingTable::save and build the model from that file",
            ));
        }
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let cfg = &self.config;
        let inner = |w: &mut BufWriter<std::fs::File>| -> std::io::Result<()> {
            writeln!(w, "FUSIONNET v1")?;
            writeln!(w, "mode {}", cfg.mode.as_str())?;
            writeln!(w, "d1 {}", cfg.d1)?;
            writeln!(w, "d2 {}", cfg.d2)?;
            writeln!(w, "l {}", cfg.l)?;
            writeln!(w, "lm_layers {}", cfg.lm_layers)?;
            writeln!(w, "lm_heads {}", cfg.lm_heads)?;
            writeln!(w, "t1_layers {}", cfg.t1_layers)?;
            writeln!(w, "t2_layers {}", cfg.t2_layers)?;
            writeln!(w, "n_classes {}", cfg.n_classes)?;
            writeln!(w, "dropout {}", cfg.dropout)?;
            writeln!(w, "seed {}", cfg.seed)?;
            match &self.embedding_provenance {
                Some((p, h)) => {
                    writeln!(w, "embedding_path {p}")?;
                    writeln!(w, "embedding_sha256 {h}")?;
                }
                None => {
                    writeln!(w, "embedding_path none")?;
                    writeln!(w, "embedding_sha256 none")?;
                }
            }
            writeln!(w, "vocab {}", self.vocab.len())?;
            for &c in self.vocab.chars() {
                writeln!(w, "{}", format_codepoint(c))?;
            }
            for (name, arr) in self.params.iter() {
                writeln!(w, "param {name} {} {}", arr.nrows(), arr.ncols())?;
                for row in arr.rows() {
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
            writeln!(w, "end")?;
            w.flush()
        };
        inner(&mut w).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<FusionModel> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines().enumerate();
        let mut next = |what: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((i, Ok(line))) => Ok((i + 1, line)),
                Some((_, Err(e))) => Err(Error::io(path, e)),
                None => Err(Error::parse(path, 0, format!("unexpected end of file, expected {what}"))),
            }
        };

        let (lno, header) = next("header")?;
        if header.trim() != "FUSIONNET v1" {
            return Err(Error::parse(path, lno, format!("bad header {header:?}, expected \"FUSIONNET v1\"")));
        }

        let mut kv = |key: &str| -> Result<String> {
            let (lno, line) = next(key)?;
            let rest = line
                .strip_prefix(key)
                .and_then(|r| r.strip_prefix(' '))
                .ok_or_else(|| Error::parse(path, lno, format!("expected \"{key} <value>\", got {line:?}")))?;
            Ok(rest.trim_end().to_string())
        };
        let mode = Mode::parse(&kv("mode")?)?;
        let parse_usize = |s: String, what: &str| -> Result<usize> {
            s.parse().map_err(|_| Error::parse(path, 0, format!("bad {what} value {s:?}")))
        };
        let d1 = parse_usize(kv("d1")?, "d1")?;
        let d2 = parse_usize(kv("d2")?, "d2")?;
        let l = parse_usize(kv("l")?, "l")?;
        let lm_layers = parse_usize(kv("lm_layers")?, "lm_layers")?;
        let lm_heads = parse_usize(kv("lm_heads")?, "lm_heads")?;
        let t1_layers = parse_usize(kv("t1_layers")?, "t1_layers")?;
        let t2_layers = parse_usize(kv("t2_layers")?, "t2_layers")?;
        let n_classes = parse_usize(kv("n_classes")?, "n_classes")?;
        let dropout: f64 = kv("dropout")?
            .parse()
            .map_err(|_| Error::parse(path, 0, "bad dropout value"))?;
        let seed: u64 = kv("seed")?.parse().map_err(|_| Error::parse(path, 0, "bad seed value"))?;
        let embedding_path = kv("embedding_path")?;
        let embedding_sha = kv("embedding_sha256")?;

        let config = FusionConfig {
            d1,
            d2,
            l,
            lm_layers,
            lm_heads,
            t1_layers,
            t2_layers,
            n_classes,
            dropout,
            seed,
            mode,
        };
        config.validate()?;

        let vocab_header = kv("vocab")?;
        let vocab_len = parse_usize(vocab_header, "vocab count")?;
        let mut chars = Vec::with_capacity(vocab_len);
        for _ in 0..vocab_len {
            let (lno, line) = next("vocabulary entry")?;
            let c = parse_codepoint(line.trim())
                .ok_or_else(|| Error::parse(path, lno, format!("bad vocabulary entry {:?}", line.trim())))?;
            chars.push(c);
        }
        let vocab = Vocab::from_chars(chars)?;

        let expected = expected_shapes(&config, vocab.len());
        let mut entries: Vec<(String, Array2<f64>)> = Vec::with_capacity(expected.len());
        for (name, (rows, cols)) in expected {
            let (lno, line) = next("param header")?;
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 4 || parts[0] != "param" {
                return Err(Error::parse(path, lno, format!("expected \"param {name} {rows} {cols}\", got {line:?}")));
            }
            if parts[1] != name {
                return Err(Error::parse(path, lno, format!("expected parameter {name:?}, found {:?}", parts[1])));
            }
            let (r, c): (usize, usize) = (
                parts[2].parse().map_err(|_| Error::parse(path, lno, "bad row count"))?,
                parts[3].parse().map_err(|_| Error::parse(path, lno, "bad column count"))?,
            );
            if (r, c) != (rows, cols) {
                return Err(Error::parse(
                    path,
                    lno,
                    format!("parameter {name} has shape {r}×{c}, config implies {rows}×{cols}"),
                ));
            }
            let mut arr = Array2::zeros((rows, cols));
            for ri in 0..rows {
                let (lno, line) = next("param row")?;
                let mut ci = 0;
                for tok in line.split_whitespace() {
                    if ci >= cols {
                        return Err(Error::parse(path, lno, format!("too many values in row of {name}")));
                    }
                    let v: f64 =
                        tok.parse().map_err(|_| Error::parse(path, lno, format!("bad float {tok:?}")))?;
                    if !v.is_finite() {
                        return Err(Error::parse(path, lno, format!("non-finite value in {name}")));
                    }
                    arr[[ri, ci]] = v;
                    ci += 1;
                }
                if ci != cols {
                    return Err(Error::parse(path, lno, format!("row of {name} has {ci} values, expected {cols}")));
                }
            }
            entries.push((name, arr));
        }
        let (lno, line) = next("end marker")?;
        if line.trim() != "end" {
            return Err(Error::parse(path, lno, format!("expected \"end\", got {line:?}")));
        }

        let (node_table, provenance) = if embedding_path == "none" {
            if embedding_sha != "none" {
                return Err(Error::parse(path, 0, "embedding_sha256 set while embedding_path is none"));
            }
            (EmbeddingTable::new(config.d2, Default::default())?, None)
        } else {
            let epath = Path::new(&embedding_path);
            let actual = sha256_hex(epath)?;
            if actual != embedding_sha {
                return Err(Error::invalid(format!(
                    "embedding file {embedding_path} hash mismatch: checkpoint says {embedding_sha}, file is {actual}"
                )));
            }
            let table = EmbeddingTable::load(epath)?;
            if table.dim() != config.d2 {
                return Err(Error::invalid(format!(
                    "embedding file dimension {} does not match checkpoint d2 {}",
                    table.dim(),
                    config.d2
                )));
            }
            (table, Some((embedding_path, embedding_sha)))
        };

        Ok(FusionModel {
            config,
            vocab,
            node_table,
            params: ParamSet::from_entries(entries),
            embedding_provenance: provenance,
        })
    }
}
