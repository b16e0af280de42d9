//! Experiment configuration: strict JSON with unknown keys rejected.

use aanet_core::network::{ArchSpec, PlacementConfig};
use aanet_core::{Error, PaddingMode, Result};

/// Root configuration for every subcommand that needs one.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub arch: ArchSpec,
    pub placement: PlacementConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub eval: EvalConfig,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
}

/// Where training data comes from.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataConfig {
    Synthetic(SyntheticConfig),
    Idx(IdxConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    /// Oriented high-frequency gratings; the class is the orientation.
    Stripes,
    /// Translated filled polygons; the class is the shape.
    Shapes,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub generator: GeneratorKind,
    pub size: usize,
    pub classes: usize,
    pub height: usize,
    pub width: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdxConfig {
    pub images: String,
    pub labels: String,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// Held-out examples used by eval, corrupt-eval, spectrum, consistency,
    /// and episode-eval.
    #[serde(default = "default_holdout")]
    pub holdout: usize,
    /// Corruption ids to evaluate; empty means all implemented ones.
    #[serde(default)]
    pub corruptions: Vec<String>,
    #[serde(default = "default_shift_max")]
    pub shift_max: usize,
    #[serde(default = "default_shift_padding")]
    pub shift_padding: PaddingMode,
    pub episode: EpisodeConfig,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeConfig {
    pub way: usize,
    pub shots: usize,
    pub query: usize,
    pub count: usize,
}

fn default_holdout() -> usize {
    128
}

fn default_shift_max() -> usize {
    3
}

fn default_shift_padding() -> PaddingMode {
    PaddingMode::Circular
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.train.lr < 0.0 {
            return Err(Error::Config("train.lr must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.train.momentum) {
            return Err(Error::Config("train.momentum must lie in [0, 1)".into()));
        }
        if self.train.batch == 0 {
            return Err(Error::Config("train.batch must be positive".into()));
        }
        if let DataConfig::Synthetic(s) = &self.data {
            if s.size == 0 || s.classes == 0 {
                return Err(Error::Config(
                    "synthetic size and classes must be positive".into(),
                ));
            }
            if s.size % s.classes != 0 {
                return Err(Error::Config(format!(
                    "synthetic size {} is not a multiple of {} classes",
                    s.size, s.classes
                )));
            }
            if s.classes != self.arch.classes {
                return Err(Error::Config(format!(
                    "synthetic classes {} disagree with arch classes {}",
                    s.classes, self.arch.classes
                )));
            }
            if (s.height, s.width) != (self.arch.input.1, self.arch.input.2) {
                return Err(Error::Config(
                    "synthetic image size disagrees with arch input".into(),
                ));
            }
        }
        for c in &self.eval.corruptions {
            aanet_core::robustness::Corruption::from_id(c)?;
        }
        if self.eval.shift_max == 0 {
            return Err(Error::Config("eval.shift_max must be >= 1".into()));
        }
        Ok(())
    }
}
