//! Run configuration: defaults, then a TOML file, then command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use soc_core::data::{FilterPolicy, SynthConfig};
use soc_core::gradcheck::ModelCheckConfig;
use soc_core::metrics::EvalOptions;
use soc_core::soc::SocInit;
use soc_core::training::TrainConfig;
use soc_core::{Error, Result};

/// Input and output file locations. Relative paths resolve against the
/// working directory; unset paths default to files under `out`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataPaths {
    /// Interaction CSV; default `<out>/interactions.csv`.
    pub interactions: Option<PathBuf>,
    /// Item feature CSV used to initialise item embeddings; none by default.
    pub item_features: Option<PathBuf>,
    /// Model checkpoint; default `<out>/model.bin`.
    pub model: Option<PathBuf>,
}

/// Ablation-only settings. The arms otherwise use `[train]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblateConfig {
    /// Consecutive seeds starting at the run seed.
    pub seeds: usize,
    /// Keep item embeddings at the synthetic (or loaded) item features.
    pub freeze_items: bool,
    pub soc_init: SocInit,
}

impl Default for AblateConfig {
    fn default() -> Self {
        AblateConfig {
            seeds: 1,
            freeze_items: true,
            soc_init: SocInit::NearIdentity { noise: 0.1 },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradcheckConfig {
    /// Instances checked, with seeds `train.seed..train.seed + seeds`.
    pub seeds: usize,
    pub model: ModelCheckConfig,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            seeds: 20,
            model: ModelCheckConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Every output lands in this directory.
    pub out: PathBuf,
    /// Seed for data generation and training; overrides `synth.seed` and
    /// `train.seed` when set.
    pub seed: Option<u64>,
    pub filter_policy: FilterPolicy,
    /// Share of each user's records, earliest first, used for training.
    pub split_ratio: f64,
    /// Worker threads; 0 lets the runtime decide.
    pub threads: usize,
    pub data: DataPaths,
    pub synth: SynthConfig,
    pub train: TrainConfig,
    pub eval: EvalOptions,
    pub ablate: AblateConfig,
    pub gradcheck: GradcheckConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            out: PathBuf::from("out"),
            seed: None,
            filter_policy: FilterPolicy::And,
            split_ratio: 0.8,
            threads: 0,
            data: DataPaths::default(),
            synth: SynthConfig::default(),
            train: TrainConfig::default(),
            eval: EvalOptions::default(),
            ablate: AblateConfig::default(),
            gradcheck: GradcheckConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Pushes `seed` into the sections that use it.
    pub fn resolve_seed(&mut self) {
        if let Some(seed) = self.seed {
            self.synth.seed = seed;
            self.train.seed = seed;
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::Config(format!(
                "split_ratio {} outside (0, 1)",
                self.split_ratio
            )));
        }
        if self.eval.k == 0 {
            return Err(Error::Config("eval.k must be at least 1".into()));
        }
        if self.ablate.seeds == 0 || self.gradcheck.seeds == 0 {
            return Err(Error::Config(
                "ablate.seeds and gradcheck.seeds must be at least 1".into(),
            ));
        }
        self.synth.validate()?;
        self.train.validate()?;
        self.gradcheck.model.validate()
    }

    pub fn interactions_path(&self) -> PathBuf {
        self.data
            .interactions
            .clone()
            .unwrap_or_else(|| self.out.join("interactions.csv"))
    }

    pub fn model_path(&self) -> PathBuf {
        self.data
            .model
            .clone()
            .unwrap_or_else(|| self.out.join("model.bin"))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
