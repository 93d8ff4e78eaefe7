//! TOML run configuration. Every table and key is optional; missing values
//! take the defaults below.

use std::f64::consts::TAU;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::kinematics::{MorphologyConfig, MorphologyParams};
use crate::mlp::{FeatureSet, TrainConfig};
use crate::observer::DEFAULT_GAIN;
use crate::testbed::{AeroConfig, ConditionGrid, DatasetSpec, GaitConfig, GridConfig, NoiseConfig};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    /// Flap cycles recorded per condition.
    pub cycles: usize,
    /// Hz.
    pub sample_rate: f64,
    /// Load-cell noise, N per axis.
    pub force_noise: f64,
    /// Load-cell noise, N·m per axis.
    pub torque_noise: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        let noise = NoiseConfig::default();
        DatasetConfig { cycles: 10, sample_rate: 7000.0, force_noise: noise.force, torque_noise: noise.torque }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObserverConfig {
    /// Gain on every channel (1/s). Ignored when `bandwidth_ratio` is set.
    pub gain: f64,
    /// When set, the gain is this multiple of the flap rate 2πf.
    pub bandwidth_ratio: Option<f64>,
    /// Relative error of the wing masses and inertias in the observer's
    /// model, e.g. 0.05 for +5 %.
    pub wing_mass_error: f64,
    /// Leading flap cycles left out of the scored series.
    pub warmup_cycles: usize,
}

impl Default for ObserverConfig {
    fn default() -> Self {
        ObserverConfig { gain: DEFAULT_GAIN, bandwidth_ratio: None, wing_mass_error: 0.0, warmup_cycles: 1 }
    }
}

impl ObserverConfig {
    pub fn gain_for(&self, frequency: f64) -> f64 {
        match self.bandwidth_ratio {
            Some(ratio) => ratio * TAU * frequency,
            None => self.gain,
        }
    }
}

/// `[mlp]`: a preset plus optional overrides.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpConfig {
    /// `compact` (2×64) or `wide` (3×128).
    pub preset: String,
    pub features: FeatureSet,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub train_fraction: Option<f64>,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            preset: "compact".into(),
            features: FeatureSet::Shaft,
            epochs: None,
            batch_size: None,
            learning_rate: None,
            train_fraction: None,
        }
    }
}

impl MlpConfig {
    pub fn train_config(&self) -> Result<TrainConfig> {
        let mut c = TrainConfig::preset(&self.preset)?;
        c.features = self.features;
        if let Some(v) = self.epochs {
            c.epochs = v;
        }
        if let Some(v) = self.batch_size {
            c.batch_size = v;
        }
        if let Some(v) = self.learning_rate {
            c.learning_rate = v;
        }
        if let Some(v) = self.train_fraction {
            c.train_fraction = v;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Every `stride`-th sample is written and scored.
    pub stride: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { stride: 14 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub morphology: MorphologyConfig,
    pub gait: GaitConfig,
    pub grid: GridConfig,
    pub dataset: DatasetConfig,
    pub aero: AeroConfig,
    pub observer: ObserverConfig,
    pub mlp: MlpConfig,
    pub output: OutputConfig,
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.morphology.to_params().validate()?;
        self.grid.grid()?;
        self.gait.params(1.0)?;
        self.aero.params().validate()?;
        self.mlp.train_config()?;
        if self.dataset.cycles < 10 {
            return Err(Error::Config("dataset.cycles must be at least 10".into()));
        }
        if !(self.dataset.sample_rate > 0.0) {
            return Err(Error::Config("dataset.sample_rate must be positive".into()));
        }
        if !(self.dataset.force_noise >= 0.0 && self.dataset.torque_noise >= 0.0) {
            return Err(Error::Config("noise levels must be non-negative".into()));
        }
        let obs = &self.observer;
        if !(obs.gain > 0.0) || obs.bandwidth_ratio.is_some_and(|r| !(r > 0.0)) {
            return Err(Error::Config("observer gain must be positive".into()));
        }
        if !(obs.wing_mass_error > -1.0) {
            return Err(Error::Config("observer.wing_mass_error must exceed −1".into()));
        }
        if obs.warmup_cycles >= self.dataset.cycles {
            return Err(Error::Config("observer.warmup_cycles must be below dataset.cycles".into()));
        }
        if self.output.stride == 0 {
            return Err(Error::Config("output.stride must be positive".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<ConditionGrid> {
        self.grid.grid()
    }

    /// The true plant.
    pub fn morphology(&self) -> MorphologyParams {
        self.morphology.to_params()
    }

    /// The plant as the observer believes it to be.
    pub fn observer_morphology(&self) -> MorphologyParams {
        self.morphology().with_wing_mass_scale(1.0 + self.observer.wing_mass_error)
    }

    pub fn dataset_spec(&self) -> DatasetSpec {
        DatasetSpec {
            gait: self.gait.clone(),
            aero: self.aero.params(),
            morphology: self.morphology(),
            noise: NoiseConfig { force: self.dataset.force_noise, torque: self.dataset.torque_noise },
            cycles: self.dataset.cycles,
            dt: 1.0 / self.dataset.sample_rate,
            seed: self.seed,
        }
    }

    /// First twelve hex digits of the SHA-256 of the canonical TOML form,
    /// which includes the seed.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml_string().as_bytes());
        hex::encode(digest)[..12].to_string()
    }

    pub fn run_dir(&self, root: &Path) -> std::path::PathBuf {
        root.join(format!("run-{}", self.hash()))
    }
}
