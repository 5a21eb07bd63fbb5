//! Layered run configuration: a TOML file supplies optional overrides on
//! top of built-in defaults, command-line flags override the file, and the
//! master seed falls back to the LAFAD_SEED environment variable. Every
//! resolver validates through the library constructors before any command
//! does work.

use std::path::Path;

use anyhow::{bail, Context, Result};
use lafad::{default_config, EmbeddingSpec, KnnConfig, PipelineConfig, SplitSpec, SynthConfig};
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub window: Option<usize>,
    #[serde(default)]
    pub synth: SynthSection,
    #[serde(default)]
    pub pipeline: PipelineSection,
    #[serde(default)]
    pub em: EmSection,
    #[serde(default)]
    pub sampling: SamplingSection,
    #[serde(default)]
    pub split: SplitSection,
    #[serde(default)]
    pub knn: KnnSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub amplitude: Option<f64>,
    pub offset: Option<f64>,
    pub phase: Option<f64>,
    pub frequency: Option<f64>,
    pub weekday_steps: Option<usize>,
    pub normal_prob: Option<f64>,
    pub lambda_normal: Option<f64>,
    pub lambda_anomaly: Option<f64>,
    pub anomaly_shift: Option<f64>,
    pub weekend_level: Option<f64>,
    pub len: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSection {
    /// Embedding specs as `feature+feature` strings.
    pub specs: Option<Vec<String>>,
    pub alpha: Option<f64>,
    pub bootstraps: Option<usize>,
    pub termination_eps: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmSection {
    pub max_iter: Option<usize>,
    pub tol: Option<f64>,
    pub var_floor: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingSection {
    pub samples_per_point: Option<usize>,
    pub epsilon: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    pub train_fraction: Option<f64>,
    pub repeats: Option<usize>,
    pub jitter: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnnSection {
    pub neighbors: Option<usize>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<FileConfig> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("invalid config file {}", path.display()))
    }

    /// Flag beats file beats LAFAD_SEED beats 0.
    pub fn resolve_seed(&self, flag: Option<u64>) -> Result<u64> {
        if let Some(seed) = flag {
            return Ok(seed);
        }
        if let Some(seed) = self.seed {
            return Ok(seed);
        }
        match std::env::var("LAFAD_SEED") {
            Ok(raw) => raw
                .trim()
                .parse()
                .with_context(|| format!("LAFAD_SEED must be an unsigned integer, got '{raw}'")),
            Err(_) => Ok(0),
        }
    }

    pub fn window(&self, flag: Option<usize>) -> Result<usize> {
        let window = flag.or(self.window).unwrap_or(5);
        if window == 0 {
            bail!("window must be positive");
        }
        Ok(window)
    }

    pub fn synth_config(&self, seed: u64) -> SynthConfig {
        let s = &self.synth;
        let mut cfg = default_config(s.lambda_anomaly.unwrap_or(10.0));
        cfg.seed = seed;
        if let Some(v) = s.amplitude {
            cfg.amplitude = v;
        }
        if let Some(v) = s.offset {
            cfg.offset = v;
        }
        if let Some(v) = s.phase {
            cfg.phase = v;
        }
        if let Some(v) = s.frequency {
            cfg.frequency = v;
        }
        if let Some(v) = s.weekday_steps {
            cfg.weekday_steps = v;
        }
        if let Some(v) = s.normal_prob {
            cfg.normal_prob = v;
        }
        if let Some(v) = s.lambda_normal {
            cfg.lambda_normal = v;
        }
        if let Some(v) = s.anomaly_shift {
            cfg.anomaly_shift = v;
        }
        if let Some(v) = s.weekend_level {
            cfg.weekend_level = v;
        }
        if let Some(v) = s.len {
            cfg.len = v;
        }
        cfg
    }

    pub fn pipeline_config(&self, seed: u64) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig::default();
        if let Some(specs) = &self.pipeline.specs {
            cfg.specs = specs
                .iter()
                .map(|s| s.parse::<EmbeddingSpec>())
                .collect::<lafad::Result<Vec<_>>>()
                .context("invalid embedding spec in [pipeline].specs")?;
        }
        if let Some(v) = self.pipeline.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = self.pipeline.bootstraps {
            cfg.bootstraps = v;
        }
        if let Some(v) = self.pipeline.termination_eps {
            cfg.termination_eps = v;
        }
        if let Some(v) = self.em.max_iter {
            cfg.em.max_iter = v;
        }
        if let Some(v) = self.em.tol {
            cfg.em.tol = v;
        }
        if let Some(v) = self.em.var_floor {
            cfg.em.var_floor = v;
        }
        if let Some(v) = self.sampling.samples_per_point {
            cfg.sampling.samples_per_point = v;
        }
        if let Some(v) = self.sampling.epsilon {
            cfg.sampling.epsilon = v;
        }
        Ok(cfg.with_seed(seed))
    }

    pub fn split_spec(&self, seed: u64, default_repeats: usize) -> Result<SplitSpec> {
        let spec = SplitSpec::new(
            self.split.train_fraction.unwrap_or(0.8),
            self.split.repeats.unwrap_or(default_repeats),
            seed,
        )
        .context("invalid [split] section")?;
        Ok(if self.split.jitter == Some(false) {
            spec.fixed()
        } else {
            spec
        })
    }

    pub fn knn_config(&self, window: usize) -> KnnConfig {
        KnnConfig {
            neighbors: self.knn.neighbors.unwrap_or(5),
            window,
        }
    }
}
