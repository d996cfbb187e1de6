use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use twohop::encoder::Hyperparams;
use twohop::synthgen::SynthConfig;
use twohop::tables::DEFAULT_NE_THRESHOLD;
use twohop::training::{Phase, TrainConfig};

/// One JSON document describing a run. Relative paths are resolved against
/// the directory of the config file. Component seeds are all taken from
/// `seed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Default location of the corpus files; `synth` writes here.
    pub data_dir: PathBuf,
    pub sentences: Option<PathBuf>,
    pub tables: Option<PathBuf>,
    pub relations: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub entity_map: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    /// JSONL of `{"head", "tail"}` objects scored by `predict`.
    pub pairs: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub checkpoint_dir: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub hyperparams: Hyperparams,
    pub pretrain: TrainConfig,
    pub finetune: TrainConfig,
    /// Maximum 2-hop bag size.
    pub cap: usize,
    pub seed: u64,
    pub dev_fraction: f64,
    pub ne_threshold: f64,
    /// Minimum training-corpus frequency for a word to get its own vector.
    pub min_count: usize,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data_dir: "data".into(),
            sentences: None,
            tables: None,
            relations: None,
            labels: None,
            entity_map: None,
            embeddings: None,
            pairs: None,
            index: None,
            checkpoint_dir: None,
            output_dir: "out".into(),
            hyperparams: Hyperparams::default(),
            pretrain: TrainConfig::pretrain(),
            finetune: TrainConfig::finetune(),
            cap: 300,
            seed: 7,
            dev_fraction: 0.1,
            ne_threshold: DEFAULT_NE_THRESHOLD,
            min_count: 1,
            synth: SynthConfig::default(),
        }
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub cap: Option<usize>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("cannot read config {}", p.display()))?;
                let cfg: RunConfig =
                    serde_json::from_str(&text).with_context(|| format!("invalid config {}", p.display()))?;
                cfg.rebase(p.parent().unwrap_or(Path::new("")))
            }
            None => RunConfig::default(),
        };
        if let Some(seed) = overrides.seed {
            cfg.seed = seed;
        }
        if let Some(cap) = overrides.cap {
            cfg.cap = cap;
        }
        if let Some(out) = &overrides.out {
            cfg.output_dir = out.clone();
        }
        cfg.pretrain.phase = Phase::Pretrain;
        cfg.finetune.phase = Phase::Finetune;
        cfg.pretrain.seed = cfg.seed;
        cfg.finetune.seed = cfg.seed;
        cfg.finetune.cap = cfg.cap;
        cfg.synth.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    fn rebase(mut self, base: &Path) -> Self {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        join(&mut self.data_dir);
        join(&mut self.output_dir);
        for p in [
            &mut self.sentences,
            &mut self.tables,
            &mut self.relations,
            &mut self.labels,
            &mut self.entity_map,
            &mut self.embeddings,
            &mut self.pairs,
            &mut self.index,
            &mut self.checkpoint_dir,
        ]
        .into_iter()
        .flatten()
        {
            join(p);
        }
        self
    }

    fn validate(&self) -> Result<()> {
        if self.cap == 0 {
            bail!("cap must be at least 1");
        }
        if !(self.dev_fraction > 0.0 && self.dev_fraction < 1.0) {
            bail!("dev_fraction must be in (0, 1), got {}", self.dev_fraction);
        }
        if !(0.0..=1.0).contains(&self.ne_threshold) {
            bail!("ne_threshold must be in [0, 1], got {}", self.ne_threshold);
        }
        self.hyperparams.validate()?;
        self.pretrain.validate()?;
        self.finetune.validate()?;
        Ok(())
    }

    fn data_file(&self, explicit: &Option<PathBuf>, name: &str) -> PathBuf {
        explicit.clone().unwrap_or_else(|| self.data_dir.join(name))
    }

    pub fn sentences_path(&self) -> PathBuf {
        self.data_file(&self.sentences, "sentences.jsonl")
    }

    pub fn tables_path(&self) -> PathBuf {
        self.data_file(&self.tables, "tables.jsonl")
    }

    pub fn relations_path(&self) -> PathBuf {
        self.data_file(&self.relations, "relations.txt")
    }

    /// An explicit labels file must exist; the default one is optional.
    pub fn labels_path(&self) -> Option<PathBuf> {
        match &self.labels {
            Some(p) => Some(p.clone()),
            None => Some(self.data_dir.join("labels.jsonl")).filter(|p| p.exists()),
        }
    }

    pub fn index_path(&self) -> PathBuf {
        self.index.clone().unwrap_or_else(|| self.output_dir.join("anchors.idx"))
    }

    pub fn checkpoint_path(&self, phase: Phase) -> PathBuf {
        let root = self.checkpoint_dir.clone().unwrap_or_else(|| self.output_dir.join("checkpoint"));
        root.join(phase.as_str())
    }
}

/// Fails with the path in the message when a required input is missing.
pub fn require(path: &Path, what: &str) -> Result<()> {
    if !path.exists() {
        bail!("{what} not found: {}", path.display());
    }
    Ok(())
}
