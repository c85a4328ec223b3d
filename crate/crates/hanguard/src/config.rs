//! Flat key-value configuration files.
//!
//! Format: `key = value`, one per line, `#` starts a comment line. Keys are
//! namespaced by pipeline stage (`graph.`, `embed.`, `model.`, `attack.`,
//! `augment.`, `eval.`). Unknown keys warn instead of failing so configs
//! can be shared across versions; typos in the namespace prefix still
//! surface through the warning. Command-line flags override file values by
//! being applied after the file is read.

use std::path::{Path, PathBuf};

use crate::attack::{Algorithm, AttackConfig};
use crate::augment::AugmentConfig;
use crate::chargraph::{GraphConfig, SimilarityWeights};
use crate::embedding::WalkConfig;
use crate::fusion::{FusionConfig, Mode};
use crate::{Error, Result};

/// Dataset presets carrying the augmentation budget each corpus uses. The
/// NLI preset budgets per attack algorithm; the others are uniform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Chnsenticorp,
    Dmsc,
    Thucnews,
    Ocnli,
}

impl Preset {
    pub fn parse(s: &str) -> Result<Preset> {
        match s {
            "chnsenticorp" => Ok(Preset::Chnsenticorp),
            "dmsc" => Ok(Preset::Dmsc),
            "thucnews" => Ok(Preset::Thucnews),
            "ocnli" => Ok(Preset::Ocnli),
            other => Err(Error::invalid(format!(
                "unknown preset {other:?} (expected chnsenticorp, dmsc, thucnews or ocnli)"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Preset::Chnsenticorp => "chnsenticorp",
            Preset::Dmsc => "dmsc",
            Preset::Thucnews => "thucnews",
            Preset::Ocnli => "ocnli",
        }
    }

    pub fn epsilon_max(&self, algorithm: Algorithm) -> f64 {
        match self {
            Preset::Chnsenticorp | Preset::Dmsc => 0.45,
            Preset::Thucnews => 0.3,
            Preset::Ocnli => match algorithm {
                Algorithm::Pwws | Algorithm::Textbugger => 0.3,
                Algorithm::Random => 0.1,
            },
        }
    }
}

/// Everything the pipeline stages need, with defaults for every field.
#[derive(Debug, Clone)]
pub struct Settings {
    pub graph: GraphConfig,
    pub graph_chars: Option<PathBuf>,
    pub graph_visual: Option<PathBuf>,

    pub embed: WalkConfig,
    pub embed_dim: usize,

    pub model: FusionConfig,
    pub train_epochs: usize,
    pub train_batch_size: usize,
    pub train_learning_rate: f64,

    pub attack: AttackConfig,
    pub segmenter_dict: Option<PathBuf>,

    pub augment: AugmentConfig,
    pub preset: Option<Preset>,

    pub eval_n: usize,
    pub eval_seed: u64,
    pub eval_lasr_cap: f64,
    pub eval_caps: Vec<f64>,
}

impl Default for Settings {
    fn default() -> Settings {
        Settings {
            graph: GraphConfig::default(),
            graph_chars: None,
            graph_visual: None,
            embed: WalkConfig::default(),
            embed_dim: 32,
            model: FusionConfig::default(),
            train_epochs: 5,
            train_batch_size: 16,
            train_learning_rate: 0.1,
            attack: AttackConfig::default(),
            segmenter_dict: None,
            augment: AugmentConfig::default(),
            preset: None,
            eval_n: 1000,
            eval_seed: 0,
            eval_lasr_cap: crate::metrics::LASR_CAP,
            eval_caps: crate::metrics::DEFAULT_CURVE_CAPS.to_vec(),
        }
    }
}

impl Settings {
    pub fn from_file(path: &Path) -> Result<Settings> {
        let mut s = Settings::default();
        s.apply_file(path)?;
        Ok(s)
    }

    /// Overlay `key = value` lines from `path` onto the current values.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        for (lno, line) in raw.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::parse(path, lno + 1, format!("expected `key = value`, got {line:?}"))
            })?;
            self.set(key.trim(), value.trim())
                .map_err(|e| Error::parse(path, lno + 1, e.to_string()))?;
        }
        // The preset pins the augmentation budget for the chosen attack.
        if let Some(p) = self.preset {
            self.augment.epsilon_max = p.epsilon_max(self.attack.algorithm);
        }
        self.augment.attack = self.attack.clone();
        Ok(())
    }

    /// Apply one key. Unknown keys warn and are ignored.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "graph.chars" => self.graph_chars = Some(PathBuf::from(value)),
            "graph.visual_features" => self.graph_visual = Some(PathBuf::from(value)),
            "graph.glyph_threshold" => self.graph.glyph_threshold = float(key, value)?,
            "graph.lcs_weight" => self.graph.weights = SimilarityWeights { lcs_weight: float(key, value)? },
            "graph.fuzzy_initials" => self.graph.fuzzy_initials = boolean(key, value)?,
            "graph.freq_cutoff" => self.graph.freq_cutoff = Some(integer(key, value)? as u32),
            "graph.candidate_cap" => self.graph.candidate_cap = integer(key, value)?,

            "embed.dim" => self.embed_dim = integer(key, value)?,
            "embed.p" => self.embed.p = float(key, value)?,
            "embed.q" => self.embed.q = float(key, value)?,
            "embed.walk_length" => self.embed.walk_length = integer(key, value)?,
            "embed.walks_per_node" => self.embed.walks_per_node = integer(key, value)?,
            "embed.window" => self.embed.window = integer(key, value)?,
            "embed.negatives" => self.embed.negatives = integer(key, value)?,
            "embed.epochs" => self.embed.epochs = integer(key, value)?,
            "embed.learning_rate" => self.embed.learning_rate = float(key, value)?,
            "embed.seed" => self.embed.seed = seed(key, value)?,

            "model.mode" => self.model.mode = Mode::parse(value)?,
            "model.d1" => self.model.d1 = integer(key, value)?,
            "model.d2" => self.model.d2 = integer(key, value)?,
            "model.max_len" => self.model.l = integer(key, value)?,
            "model.lm_layers" => self.model.lm_layers = integer(key, value)?,
            "model.lm_heads" => self.model.lm_heads = integer(key, value)?,
            "model.t1_layers" => self.model.t1_layers = integer(key, value)?,
            "model.t2_layers" => self.model.t2_layers = integer(key, value)?,
            "model.n_classes" => self.model.n_classes = integer(key, value)?,
            "model.dropout" => self.model.dropout = float(key, value)?,
            "model.seed" => self.model.seed = seed(key, value)?,
            "model.epochs" => self.train_epochs = integer(key, value)?,
            "model.batch_size" => self.train_batch_size = integer(key, value)?,
            "model.learning_rate" => self.train_learning_rate = float(key, value)?,

            "attack.algorithm" => self.attack.algorithm = Algorithm::parse(value)?,
            "attack.candidate_cap" => self.attack.candidate_cap = integer(key, value)?,
            "attack.max_mr" => {
                self.attack.max_mr = if value == "none" { None } else { Some(float(key, value)?) }
            }
            "attack.seed" => self.attack.seed = seed(key, value)?,
            "attack.segmenter_dict" => self.segmenter_dict = Some(PathBuf::from(value)),
            "attack.sentence_terminals" => {
                self.attack.sentence_terminals = value.chars().collect()
            }

            "augment.preset" => self.preset = Some(Preset::parse(value)?),
            "augment.epsilon_max" => self.augment.epsilon_max = float(key, value)?,
            "augment.stop_ratio" => self.augment.stop_ratio = float(key, value)?,
            "augment.shuffle_seed" => self.augment.shuffle_seed = seed(key, value)?,

            "eval.n" => self.eval_n = integer(key, value)?,
            "eval.seed" => self.eval_seed = seed(key, value)?,
            "eval.lasr_cap" => self.eval_lasr_cap = float(key, value)?,
            "eval.caps" => {
                self.eval_caps = value
                    .split(',')
                    .map(|c| float(key, c.trim()))
                    .collect::<Result<Vec<f64>>>()?
            }

            other => log::warn!("ignoring unknown configuration key {other:?}"),
        }
        Ok(())
    }
}

fn float(key: &str, value: &str) -> Result<f64> {
    value.parse().map_err(|_| Error::invalid(format!("{key} wants a number, got {value:?}")))
}

fn integer(key: &str, value: &str) -> Result<usize> {
    value.parse().map_err(|_| Error::invalid(format!("{key} wants a nonnegative integer, got {value:?}")))
}

fn seed(key: &str, value: &str) -> Result<u64> {
    value.parse().map_err(|_| Error::invalid(format!("{key} wants a 64-bit seed, got {value:?}")))
}

fn boolean(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::invalid(format!("{key} wants true/false, got {value:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_pin_budgets() {
        assert_eq!(Preset::Chnsenticorp.epsilon_max(Algorithm::Textbugger), 0.45);
        assert_eq!(Preset::Dmsc.epsilon_max(Algorithm::Pwws), 0.45);
        assert_eq!(Preset::Thucnews.epsilon_max(Algorithm::Random), 0.3);
        assert_eq!(Preset::Ocnli.epsilon_max(Algorithm::Pwws), 0.3);
        assert_eq!(Preset::Ocnli.epsilon_max(Algorithm::Random), 0.1);
    }

    #[test]
    fn file_overlays_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(
            &path,
            "# experiment\nmodel.d1 = 48\nmodel.mode = graph_concat\nattack.algorithm = textbugger\n\naugment.preset = dmsc\neval.caps = 0.1, 0.3\n",
        )
        .unwrap();
        let s = Settings::from_file(&path).unwrap();
        assert_eq!(s.model.d1, 48);
        assert_eq!(s.model.mode, Mode::GraphConcat);
        assert_eq!(s.attack.algorithm, Algorithm::Textbugger);
        assert_eq!(s.augment.epsilon_max, 0.45);
        assert_eq!(s.augment.attack.algorithm, Algorithm::Textbugger);
        assert_eq!(s.eval_caps, vec![0.1, 0.3]);
        // untouched fields keep defaults
        assert_eq!(s.model.d2, FusionConfig::default().d2);
    }

    #[test]
    fn bad_lines_carry_position() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.conf");
        std::fs::write(&path, "model.d1 = 48\nmodel.d2 48\n").unwrap();
        let err = Settings::from_file(&path).unwrap_err().to_string();
        assert!(err.contains(":2:"), "{err}");
    }

    #[test]
    fn unknown_keys_are_tolerated() {
        let mut s = Settings::default();
        s.set("shiny.new_knob", "on").unwrap();
        s.set("attack.max_mr", "none").unwrap();
        assert_eq!(s.attack.max_mr, None);
        s.set("attack.max_mr", "0.3").unwrap();
        assert_eq!(s.attack.max_mr, Some(0.3));
    }
}
