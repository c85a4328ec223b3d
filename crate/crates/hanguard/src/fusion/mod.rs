//! The fusion classifier: a character-level transformer whose text channel
//! is merged with frozen graph-embedding features.
//!
//! The forward pass, for max length `l`, text width `d1` and node width
//! `d2`:
//!
//! ```text
//! H1 = LM(x)                    l×d1   trainable char transformer
//! H2 = table lookup             l×d2   frozen node vectors, OOV → 0
//! H3 = flatten(T1(H2))·W + b    d1     graph summary vector
//! H'3 = H3 repeated l times     l×d1
//! H4 = T2(fuse([H1 | H'3]))     l×d1
//! probs = softmax(head(flatten(H4)))
//! ```
//!
//! Three modes share the code path: `baseline` classifies flatten(H1)
//! directly, `graph_concat` classifies flatten([H1 | H'3]) without the
//! fuse projection or T2, `full_fusion` runs everything.
//!
//! Training differentiates through a per-batch tape; inference uses a
//! batched tape-free path (`forward_batch`).

mod batch_fwd;
mod checkpoint;
mod params;
mod tape_fwd;
#[cfg(test)]
mod tests_internal;
mod train;

use std::collections::BTreeMap;

use ndarray::Array2;

use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};

pub use checkpoint::sha256_hex;
pub use train::{EpochStats, TrainReport};

pub(crate) use params::ParamSet;

/// Ablation switch. `GraphConcat` keeps the graph channel but skips the
/// fuse projection and T2; `Baseline` drops the graph channel entirely.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Baseline,
    GraphConcat,
    FullFusion,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::GraphConcat => "graph_concat",
            Mode::FullFusion => "full_fusion",
        }
    }

    pub fn parse(s: &str) -> Result<Mode> {
        match s {
            "baseline" => Ok(Mode::Baseline),
            "graph_concat" => Ok(Mode::GraphConcat),
            "full_fusion" => Ok(Mode::FullFusion),
            other => Err(Error::invalid(format!(
                "unknown mode {other:?}, expected baseline | graph_concat | full_fusion"
            ))),
        }
    }
}

/// Which representation [`FusionModel::representations`] exports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReprLayer {
    H1,
    H3,
    H4,
}

impl ReprLayer {
    pub fn parse(s: &str) -> Result<ReprLayer> {
        match s {
            "H1" | "h1" => Ok(ReprLayer::H1),
            "H3" | "h3" => Ok(ReprLayer::H3),
            "H4" | "h4" => Ok(ReprLayer::H4),
            other => Err(Error::invalid(format!("unknown layer {other:?}, expected H1 | H3 | H4"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ReprLayer::H1 => "H1",
            ReprLayer::H3 => "H3",
            ReprLayer::H4 => "H4",
        }
    }
}

#[derive(Debug, Clone)]
pub struct FusionConfig {
    /// Text-channel hidden size.
    pub d1: usize,
    /// Node-embedding size; must match the attached table.
    pub d2: usize,
    /// Sequence length; inputs are truncated or padded to exactly this.
    pub l: usize,
    pub lm_layers: usize,
    pub lm_heads: usize,
    pub t1_layers: usize,
    pub t2_layers: usize,
    pub n_classes: usize,
    pub dropout: f64,
    pub seed: u64,
    pub mode: Mode,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            d1: 128,
            d2: 64,
            l: 64,
            lm_layers: 2,
            lm_heads: 4,
            t1_layers: 1,
            t2_layers: 1,
            n_classes: 2,
            dropout: 0.1,
            seed: 0,
            mode: Mode::FullFusion,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d1 == 0 || self.d2 == 0 || self.l == 0 {
            return Err(Error::invalid("d1, d2 and l must be positive"));
        }
        if self.lm_layers == 0 || self.lm_heads == 0 || self.t1_layers == 0 || self.t2_layers == 0 {
            return Err(Error::invalid("layer and head counts must be positive"));
        }
        if self.d1 % self.lm_heads != 0 {
            return Err(Error::invalid(format!("d1 ({}) must be divisible by lm_heads ({})", self.d1, self.lm_heads)));
        }
        if self.mode != Mode::Baseline && self.d2 % self.lm_heads != 0 {
            return Err(Error::invalid(format!(
                "d2 ({}) must be divisible by lm_heads ({}) so T1 can split heads",
                self.d2, self.lm_heads
            )));
        }
        if self.n_classes < 2 {
            return Err(Error::invalid(format!("n_classes must be at least 2, got {}", self.n_classes)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        Ok(())
    }

    /// Width of the flattened vector entering the classifier head.
    pub(crate) fn head_input(&self) -> usize {
        match self.mode {
            Mode::Baseline | Mode::FullFusion => self.l * self.d1,
            Mode::GraphConcat => 2 * self.l * self.d1,
        }
    }
}

pub const PAD: usize = 0;
pub const UNK: usize = 1;

/// Character-level token inventory. Index 0 is padding, index 1 the
/// unknown-character token; the rest are the training characters in
/// codepoint order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    chars: Vec<char>,
    map: BTreeMap<char, usize>,
}

impl Vocab {
    pub fn from_texts<'a>(texts: impl IntoIterator<Item = &'a str>) -> Vocab {
        let mut set: std::collections::BTreeSet<char> = texts.into_iter().flat_map(|t| t.chars()).collect();
        set.remove(&'\u{0}');
        set.remove(&'\u{1}');
        let mut chars = vec!['\u{0}', '\u{1}'];
        chars.extend(set);
        let map = chars.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        Vocab { chars, map }
    }

    /// Rebuilds a vocabulary from its serialized character list.
    pub fn from_chars(chars: Vec<char>) -> Result<Vocab> {
        if chars.len() < 2 || chars[0] != '\u{0}' || chars[1] != '\u{1}' {
            return Err(Error::invalid("vocabulary must start with the padding and unknown sentinels"));
        }
        let map: BTreeMap<char, usize> = chars.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        if map.len() != chars.len() {
            return Err(Error::invalid("vocabulary contains duplicate characters"));
        }
        Ok(Vocab { chars, map })
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        false // sentinels are always present
    }

    pub fn token_of(&self, c: char) -> usize {
        self.map.get(&c).copied().unwrap_or(UNK)
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }
}

/// A classifier instance: config, vocabulary, parameters, and the frozen
/// node table with its file provenance (needed to checkpoint by reference).
pub struct FusionModel {
    config: FusionConfig,
    vocab: Vocab,
    node_table: EmbeddingTable,
    params: ParamSet,
    embedding_provenance: Option<(String, String)>,
}

impl FusionModel {
    /// Fresh model with seeded initialization. The graph-aware modes need a
    /// node table; an explicit table of zero vectors is allowed (it silences
    /// the graph channel), but omitting the table entirely is only valid in
    /// baseline mode.
    pub fn new(config: FusionConfig, vocab: Vocab, node_table: Option<EmbeddingTable>) -> Result<FusionModel> {
        config.validate()?;
        let node_table = match node_table {
            Some(t) => {
                if t.dim() != config.d2 {
                    return Err(Error::invalid(format!(
                        "embedding table dimension {} does not match d2 {}",
                        t.dim(),
                        config.d2
                    )));
                }
                t
            }
            None if config.mode == Mode::Baseline => EmbeddingTable::new(config.d2, BTreeMap::new())?,
            None => {
                return Err(Error::invalid(format!(
                    "mode {} needs a node embedding table; pass one or use baseline mode",
                    config.mode.as_str()
                )))
            }
        };
        let params = params::init(&config, vocab.len());
        Ok(FusionModel { config, vocab, node_table, params, embedding_provenance: None })
    }

    /// Fresh model whose node table is loaded from `path`; the path and its
    /// content hash are recorded so checkpoints can reference the file.
    pub fn with_embedding_file(config: FusionConfig, vocab: Vocab, path: &std::path::Path) -> Result<FusionModel> {
        let table = EmbeddingTable::load(path)?;
        let hash = checkpoint::sha256_hex(path)?;
        let mut model = FusionModel::new(config, vocab, Some(table))?;
        model.embedding_provenance = Some((path.to_string_lossy().into_owned(), hash));
        Ok(model)
    }

    pub fn config(&self) -> &FusionConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn node_table(&self) -> &EmbeddingTable {
        &self.node_table
    }

    /// Token ids padded to `l`, plus the unpadded length (≤ l).
    pub(crate) fn tokens_of(&self, text: &str) -> Result<(Vec<usize>, usize)> {
        let chars: Vec<char> = text.chars().collect();
        if chars.is_empty() {
            return Err(Error::invalid("cannot encode an empty text"));
        }
        let n = chars.len().min(self.config.l);
        let mut ids: Vec<usize> = chars[..n].iter().map(|&c| self.vocab.token_of(c)).collect();
        ids.resize(self.config.l, PAD);
        Ok((ids, n))
    }

    /// Frozen node-channel input: one table row per character position,
    /// zeros for out-of-table characters and padding.
    pub(crate) fn h2_of(&self, text: &str) -> Result<Array2<f64>> {
        let chars: Vec<char> = text.chars().collect();
        if chars.is_empty() {
            return Err(Error::invalid("cannot encode an empty text"));
        }
        let (l, d2) = (self.config.l, self.config.d2);
        let mut h2 = Array2::zeros((l, d2));
        for (i, &c) in chars.iter().take(l).enumerate() {
            let v = self.node_table.lookup(c);
            for (j, &x) in v.iter().enumerate() {
                h2[[i, j]] = x;
            }
        }
        debug_assert_eq!(h2.dim(), (l, d2));
        Ok(h2)
    }

    /// Additive attention mask: 0 for real key positions, -1e9 for padding.
    /// The -1e9 shift underflows to exactly zero weight after softmax, so
    /// padded keys cannot leak into real positions.
    pub(crate) fn mask_of(&self, n: usize) -> Array2<f64> {
        let l = self.config.l;
        Array2::from_shape_fn((l, l), |(_, j)| if j < n { 0.0 } else { -1e9 })
    }

    /// Text-channel hidden states H1 (l×d1).
    pub fn encode_pretrained(&self, text: &str) -> Result<Array2<f64>> {
        let out = self.forward_batch(&[text])?;
        let l = self.config.l;
        Ok(out.h1.slice(ndarray::s![..l, ..]).to_owned())
    }

    /// Node-channel input H2 (l×d2).
    pub fn encode_nodes(&self, text: &str) -> Result<Array2<f64>> {
        self.h2_of(text)
    }

    /// Class probabilities for one text.
    pub fn fuse_forward(&self, text: &str) -> Result<Vec<f64>> {
        let out = self.forward_batch(&[text])?;
        Ok(out.probs.row(0).to_vec())
    }

    /// Argmax label (ties to the lowest class index) and probabilities.
    pub fn predict(&self, text: &str) -> Result<(usize, Vec<f64>)> {
        let probs = self.fuse_forward(text)?;
        let label = crate::nn::argmax_row(&ndarray::Array1::from_vec(probs.clone()));
        Ok((label, probs))
    }

    /// Batch prediction; output row i corresponds to input i. Batches are
    /// processed in fixed-size chunks to bound memory.
    pub fn predict_probs(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(64) {
            let fwd = self.forward_batch(chunk)?;
            for r in 0..chunk.len() {
                out.push(fwd.probs.row(r).to_vec());
            }
        }
        Ok(out)
    }

    /// Flattened representations, one row per text: H1 (l·d1), H3 (d1, not
    /// in baseline mode), H4 (l·d1, full fusion only).
    pub fn representations(&self, texts: &[&str], layer: ReprLayer) -> Result<Vec<Vec<f64>>> {
        match (layer, self.config.mode) {
            (ReprLayer::H3, Mode::Baseline) => {
                return Err(Error::invalid("layer H3 does not exist in baseline mode"));
            }
            (ReprLayer::H4, Mode::Baseline | Mode::GraphConcat) => {
                return Err(Error::invalid(format!(
                    "layer H4 does not exist in {} mode",
                    self.config.mode.as_str()
                )));
            }
            _ => {}
        }
        let l = self.config.l;
        let mut rows = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(64) {
            let fwd = self.forward_batch(chunk)?;
            for s in 0..chunk.len() {
                let row = match layer {
                    ReprLayer::H1 => fwd.h1.slice(ndarray::s![s * l..(s + 1) * l, ..]).iter().copied().collect(),
                    ReprLayer::H3 => fwd.h3.as_ref().expect("mode checked").row(s).to_vec(),
                    ReprLayer::H4 => {
                        fwd.h4.as_ref().expect("mode checked").slice(ndarray::s![s * l..(s + 1) * l, ..]).iter().copied().collect()
                    }
                };
                rows.push(row);
            }
        }
        Ok(rows)
    }

    /// Per-row width of [`representations`](Self::representations) output.
    pub fn repr_width(&self, layer: ReprLayer) -> usize {
        match layer {
            ReprLayer::H1 | ReprLayer::H4 => self.config.l * self.config.d1,
            ReprLayer::H3 => self.config.d1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vocab_assigns_sentinels_then_sorted_chars() {
        let v = Vocab::from_texts(["吃饭", "饭好"]);
        assert_eq!(v.chars()[PAD], '\u{0}');
        assert_eq!(v.chars()[UNK], '\u{1}');
        assert_eq!(v.len(), 5);
        let mut rest = v.chars()[2..].to_vec();
        let mut sorted = rest.clone();
        sorted.sort();
        assert_eq!(rest, sorted);
        rest.dedup();
        assert_eq!(rest.len(), 3);
        assert_eq!(v.token_of('外'), UNK);
        assert!(v.token_of('吃') >= 2);
    }

    #[test]
    fn config_validation_catches_bad_head_split() {
        let cfg = FusionConfig { d1: 30, lm_heads: 4, ..FusionConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = FusionConfig { d2: 30, lm_heads: 4, ..FusionConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = FusionConfig { d2: 30, lm_heads: 4, mode: Mode::Baseline, ..FusionConfig::default() };
        assert!(cfg.validate().is_ok()); // baseline never runs T1
    }

    #[test]
    fn mode_roundtrip() {
        for m in [Mode::Baseline, Mode::GraphConcat, Mode::FullFusion] {
            assert_eq!(Mode::parse(m.as_str()).unwrap(), m);
        }
        assert!(Mode::parse("fancy").is_err());
    }
}
