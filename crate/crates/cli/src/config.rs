use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use sentimusic_core::annotation::PipelineConfig;
use sentimusic_core::sentiment::{default_lambda_grid, FitOptions};
use sentimusic_core::steering::GaConfig;
use sentimusic_core::trainer::TrainConfig;
use sentimusic_core::QuantizerConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub shards: Option<PathBuf>,
    pub checkpoints: Option<PathBuf>,
    pub outputs: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShardConfig {
    pub train_ratio: f64,
    pub train_shards: usize,
}

impl Default for ShardConfig {
    fn default() -> Self {
        Self { train_ratio: 0.9, train_shards: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub lambda_grid: Vec<f64>,
    pub folds: usize,
    pub inner_folds: usize,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        let opts = FitOptions::default();
        Self { lambda_grid: default_lambda_grid(), folds: 10, inner_folds: 5, tol: opts.tol, max_iter: opts.max_iter }
    }
}

impl ClassifierConfig {
    pub fn fit_options(&self) -> FitOptions {
        FitOptions { tol: self.tol, max_iter: self.max_iter }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    pub count: usize,
    pub length: usize,
    pub temperature: f64,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self { count: 30, length: 1000, temperature: 1.0 }
    }
}

/// Everything one experiment needs, loaded from a single JSON document.
/// The top-level `seed` is copied into every stochastic section.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub quantizer: QuantizerConfig,
    pub shards: ShardConfig,
    pub train: TrainConfig,
    pub classifier: ClassifierConfig,
    pub ga: GaConfig,
    pub generate: GenerateConfig,
    pub pipeline: PipelineConfig,
    pub seed: u64,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, seed: Option<u64>) -> Result<Self> {
        let mut cfg: RunConfig = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?
            }
            None => RunConfig::default(),
        };
        if let Some(s) = seed {
            cfg.seed = s;
        }
        cfg.propagate_seed();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn propagate_seed(&mut self) {
        self.train.seed = self.seed;
        self.ga.seed = self.seed;
        self.pipeline.seed = self.seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.quantizer.validate()?;
        self.train.validate()?;
        self.ga.validate()?;
        let s = &self.shards;
        if !(s.train_ratio > 0.0 && s.train_ratio < 1.0) || s.train_shards == 0 {
            bail!("shards: train_ratio must lie in (0, 1) and train_shards be positive");
        }
        let c = &self.classifier;
        if c.lambda_grid.is_empty() || c.lambda_grid.iter().any(|&l| !(l >= 0.0 && l.is_finite())) {
            bail!("classifier: lambda_grid must be non-empty and non-negative");
        }
        if c.folds < 2 || c.inner_folds < 2 {
            bail!("classifier: folds and inner_folds must be at least 2");
        }
        if self.generate.count == 0 || self.generate.length == 0 {
            bail!("generate: count and length must be positive");
        }
        let p = &self.paths;
        for (name, path) in [("corpus", &p.corpus), ("shards", &p.shards), ("checkpoints", &p.checkpoints), ("outputs", &p.outputs)] {
            if let Some(path) = path {
                if !path.exists() {
                    bail!("paths.{name}: {} does not exist", path.display());
                }
            }
        }
        Ok(())
    }
}
