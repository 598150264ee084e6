//! Declarative pipeline configuration, read from TOML.

use std::path::{Path, PathBuf};

use ccr_core::pairing::ThresholdConfig;
use ccr_core::wordvec::{Architecture, WordVecTrainConfig};
use ccr_core::Error;
use serde::{Deserialize, Serialize};

use crate::artifacts::canonical_hash;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_backend")]
    pub backend: String,
    pub paths: Paths,
    #[serde(default)]
    pub ingest: IngestSection,
    #[serde(default)]
    pub wordvec: WordvecSection,
    #[serde(default)]
    pub pairs: PairsSection,
    #[serde(default)]
    pub sampling: SamplingSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub eval: EvalSection,
    /// Directory relative paths were resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_seed() -> u64 {
    42
}

fn default_backend() -> String {
    "mock:dim=64,seed=0".into()
}

/// Input locations plus the output directory. Relative paths resolve against
/// the directory holding the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    /// Raw corpus JSONL.
    pub input: PathBuf,
    pub work_dir: PathBuf,
    /// Pretrained vectors; skips word-vector training when set.
    #[serde(default)]
    pub vectors: Option<PathBuf>,
    #[serde(default)]
    pub questionnaires: Vec<PathBuf>,
    #[serde(default)]
    pub dictionaries: Vec<PathBuf>,
    #[serde(default)]
    pub officials: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSection {
    pub min_len: usize,
    pub max_len: usize,
    pub split: [f64; 3],
    pub stratify_by_title: bool,
}

impl Default for IngestSection {
    fn default() -> Self {
        Self {
            min_len: 50,
            max_len: 500,
            split: [0.6, 0.2, 0.2],
            stratify_by_title: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WordvecSection {
    pub arch: Architecture,
    pub dim: usize,
    pub epochs: usize,
    pub window: usize,
    pub negative: usize,
    pub min_count: usize,
    pub subword: Option<(usize, usize)>,
}

impl Default for WordvecSection {
    fn default() -> Self {
        let d = WordVecTrainConfig::new(Architecture::Skipgram);
        Self {
            arch: d.architecture,
            dim: d.dim,
            epochs: d.epochs,
            window: d.window,
            negative: d.negative,
            min_count: d.min_count,
            subword: None,
        }
    }
}

impl WordvecSection {
    pub fn to_train_config(&self, seed: u64) -> WordVecTrainConfig {
        let mut c = WordVecTrainConfig::new(self.arch);
        c.dim = self.dim;
        c.epochs = self.epochs;
        c.window = self.window;
        c.negative = self.negative;
        c.min_count = self.min_count;
        c.subword = self.subword;
        c.seed = seed;
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PairsSection {
    pub lower_pct: f64,
    pub upper_pct: f64,
}

impl Default for PairsSection {
    fn default() -> Self {
        let t = ThresholdConfig::default();
        Self {
            lower_pct: t.lower_pct,
            upper_pct: t.upper_pct,
        }
    }
}

impl PairsSection {
    pub fn threshold(&self) -> ccr_core::Result<ThresholdConfig> {
        ThresholdConfig::new(self.lower_pct, self.upper_pct)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMode {
    #[default]
    Random,
    Hard,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingSection {
    pub mode: SamplingMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub batch: usize,
    pub epochs: usize,
    pub warmup: usize,
    pub lr: f64,
    pub alpha: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            batch: 32,
            epochs: 3,
            warmup: 3,
            lr: 1e-5,
            alpha: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub sts_rounds: usize,
    pub sts_pairs: usize,
    pub qic_folds: usize,
    /// Construct whose CCR scores feed the officials benchmark; defaults to
    /// the first questionnaire.
    pub benchmark_construct: Option<String>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            sts_rounds: 20,
            sts_pairs: 4308,
            qic_folds: 10,
            benchmark_construct: None,
        }
    }
}

impl PipelineConfig {
    /// Parses a config file and resolves relative paths against its directory.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: PipelineConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_against(base);
        cfg.base_dir = base.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_against(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let paths = &mut self.paths;
        fix(&mut paths.input);
        fix(&mut paths.work_dir);
        paths.vectors.iter_mut().for_each(fix);
        paths.questionnaires.iter_mut().for_each(fix);
        paths.dictionaries.iter_mut().for_each(fix);
        paths.officials.iter_mut().for_each(fix);
    }

    pub fn validate(&self) -> ccr_core::Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.ingest.min_len == 0 || self.ingest.max_len <= self.ingest.min_len {
            return bad(format!(
                "need 0 < min_len < max_len, got {} and {}",
                self.ingest.min_len, self.ingest.max_len
            ));
        }
        self.pairs.threshold()?;
        self.wordvec.to_train_config(self.seed).validate()?;
        if self.train.batch == 0 || self.train.epochs == 0 || !(self.train.lr > 0.0) {
            return bad("train.batch, train.epochs and train.lr must be positive".into());
        }
        if !(self.train.alpha > 0.0) {
            return bad(format!("train.alpha must be positive, got {}", self.train.alpha));
        }
        if self.eval.qic_folds < 2 || self.eval.sts_rounds == 0 || self.eval.sts_pairs < 2 {
            return bad("eval needs qic_folds >= 2, sts_rounds >= 1 and sts_pairs >= 2".into());
        }
        if !self.paths.dictionaries.is_empty() && self.paths.questionnaires.is_empty() {
            return bad("dictionaries are only used together with questionnaires".into());
        }
        Ok(())
    }

    /// Hash of the canonical config with the output directory removed. Input
    /// paths are hashed relative to the config directory, so a copied
    /// config tree hashes the same.
    pub fn config_hash(&self) -> String {
        let mut cfg = self.clone();
        let base = &self.base_dir;
        let rel = |p: &mut PathBuf| {
            if let Ok(r) = p.strip_prefix(base) {
                *p = r.to_path_buf();
            }
        };
        let paths = &mut cfg.paths;
        rel(&mut paths.input);
        paths.vectors.iter_mut().for_each(rel);
        paths.questionnaires.iter_mut().for_each(rel);
        paths.dictionaries.iter_mut().for_each(rel);
        paths.officials.iter_mut().for_each(rel);
        let mut v = serde_json::to_value(&cfg).expect("config serializes");
        if let Some(paths) = v.get_mut("paths").and_then(|p| p.as_object_mut()) {
            paths.remove("work_dir");
        }
        canonical_hash(&v)
    }
}
