use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::Activation;
use crate::error::{Error, Result};
use crate::geometry::AmbientMetric;
use crate::regularizers::{EstimatorConfig, NraeConfig};

use super::adam::AdamHyper;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Vanilla,
    Nrae,
    Mecae,
    Irae,
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Objective::Vanilla => "vanilla",
            Objective::Nrae => "nrae",
            Objective::Mecae => "mecae",
            Objective::Irae => "irae",
        })
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vanilla" => Ok(Objective::Vanilla),
            "nrae" => Ok(Objective::Nrae),
            "mecae" => Ok(Objective::Mecae),
            "irae" => Ok(Objective::Irae),
            other => Err(Error::Config(format!(
                "unknown objective '{other}' (expected vanilla, nrae, mecae or irae)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub latent_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            latent_dim: 1,
            encoder_hidden: vec![64, 64],
            decoder_hidden: vec![64, 64],
            activation: Activation::Tanh,
        }
    }
}

/// Ambient metric choices expressible in a config file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "lowercase")]
pub enum MetricConfig {
    #[default]
    Identity,
    Diagonal {
        entries: Vec<f64>,
    },
}

impl MetricConfig {
    pub fn build(&self) -> Result<AmbientMetric> {
        match self {
            MetricConfig::Identity => Ok(AmbientMetric::Identity),
            MetricConfig::Diagonal { entries } => AmbientMetric::diagonal(entries.clone()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Save a checkpoint every this many epochs when a directory is given
    /// (0: only at the end).
    pub checkpoint_every: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        let h = AdamHyper::default();
        OptimConfig {
            lr: h.lr,
            beta1: h.beta1,
            beta2: h.beta2,
            eps: h.eps,
            batch_size: 64,
            epochs: 2000,
            checkpoint_every: 0,
        }
    }
}

impl OptimConfig {
    pub fn hyper(&self) -> AdamHyper {
        AdamHyper {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }
}

/// Everything that determines a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub seed: u64,
    pub objective: Objective,
    pub alpha: f64,
    pub model: ModelConfig,
    pub nrae: NraeConfig,
    pub estimator: EstimatorConfig,
    pub metric: MetricConfig,
    pub optim: OptimConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            objective: Objective::Vanilla,
            alpha: 0.0,
            model: ModelConfig::default(),
            nrae: NraeConfig::default(),
            estimator: EstimatorConfig::default(),
            metric: MetricConfig::default(),
            optim: OptimConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::from(e).context(format!("reading {}", path.display())))?;
        Self::from_toml(&text).map_err(|e| e.context(format!("config {}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks everything that does not need the dataset.
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!(
                "alpha must be finite and nonnegative, got {}",
                self.alpha
            )));
        }
        if self.model.latent_dim == 0 {
            return Err(Error::Config("model.latent_dim must be at least 1".into()));
        }
        if self
            .model
            .encoder_hidden
            .iter()
            .chain(&self.model.decoder_hidden)
            .any(|&w| w == 0)
        {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        let o = &self.optim;
        if !(o.lr > 0.0
            && o.eps > 0.0
            && (0.0..1.0).contains(&o.beta1)
            && (0.0..1.0).contains(&o.beta2))
        {
            return Err(Error::Config(
                "optim needs lr > 0, eps > 0 and betas in [0, 1)".into(),
            ));
        }
        if o.batch_size == 0 {
            return Err(Error::Config("optim.batch_size must be at least 1".into()));
        }
        self.nrae.validate()?;
        self.estimator.validate()?;
        self.metric.build()?;
        Ok(())
    }

    /// Checks against the dataset shape.
    pub fn validate_for(&self, dim: usize, samples: usize) -> Result<()> {
        self.validate()?;
        if self.model.latent_dim >= dim {
            return Err(Error::Config(format!(
                "latent_dim {} must be smaller than the data dimension {dim}",
                self.model.latent_dim
            )));
        }
        if self.optim.batch_size > samples {
            return Err(Error::Config(format!(
                "batch_size {} exceeds the {samples} training samples",
                self.optim.batch_size
            )));
        }
        if self.objective == Objective::Nrae && self.nrae.k > samples {
            return Err(Error::Config(format!(
                "nrae.k {} exceeds the {samples} samples",
                self.nrae.k
            )));
        }
        Ok(())
    }

    /// SHA-256 of the canonical TOML rendering, hex encoded. The run length
    /// (`epochs`, `checkpoint_every`) is left out so a checkpoint can be
    /// trained further.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.optim.epochs = 0;
        c.optim.checkpoint_every = 0;
        Sha256::digest(c.to_toml().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn encoder_widths(&self, dim: usize) -> Vec<usize> {
        let mut w = vec![dim];
        w.extend(&self.model.encoder_hidden);
        w.push(self.model.latent_dim);
        w
    }

    pub fn decoder_widths(&self, dim: usize) -> Vec<usize> {
        let mut w = vec![self.model.latent_dim];
        w.extend(&self.model.decoder_hidden);
        w.push(dim);
        w
    }
}
