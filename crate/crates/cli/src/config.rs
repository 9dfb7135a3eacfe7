//! Run configuration: one TOML file with a fixed key set.
//!
//! ```toml
//! seed = 42                  # scene, trajectories, initialization, shuffling
//! scene_file = "scene.toml"  # optional; replaces the [scene] table
//! mbs_source = false         # also train a predictor on the MBS's CSI
//!
//! [scene]    # beamseq_core::scene::SceneConfig
//! [dataset]  # beamseq_core::dataset::DatasetConfig (source is an RSU)
//! [model]    # hidden, input_width, embed_dim, dropout
//! [ffn]      # enabled, width
//! [train]    # batch_size, max_epochs, patience, clip_norm, adam
//! [eval]     # delays, summary_delay, tx_snr_db, positioning_errors, error_distribution, batch_size
//! ```
//!
//! Unknown keys are rejected. The seed in `[train]` is always replaced by
//! the top-level seed.

use std::path::{Path, PathBuf};

use beamseq_core::dataset::DatasetConfig;
use beamseq_core::scene::{BsId, SceneConfig};
use beamseq_eval::ErrorDistribution;
use beamseq_nn::TrainConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub hidden: usize,
    pub input_width: usize,
    pub embed_dim: usize,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { hidden: 256, input_width: 256, embed_dim: 100, dropout: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FfnOptions {
    pub enabled: bool,
    pub width: usize,
}

impl Default for FfnOptions {
    fn default() -> Self {
        Self { enabled: true, width: 256 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Delays in slots for the sweep; each must be below the output length.
    pub delays: Vec<usize>,
    /// Delay at which the loss CDFs and the summary are reported.
    pub summary_delay: usize,
    pub tx_snr_db: f64,
    /// Positioning error magnitudes (meters) of the location baselines.
    pub positioning_errors: Vec<f64>,
    pub error_distribution: ErrorDistribution,
    pub batch_size: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            delays: (0..50).step_by(5).chain([49]).collect(),
            summary_delay: 0,
            tx_snr_db: 90.0,
            positioning_errors: vec![0.0, 1.0],
            error_distribution: ErrorDistribution::Fixed,
            batch_size: 64,
        }
    }
}

impl EvalConfig {
    pub fn tx_snr(&self) -> f64 {
        10f64.powf(self.tx_snr_db / 10.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scene_file: Option<PathBuf>,
    pub mbs_source: bool,
    pub scene: SceneConfig,
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub ffn: FfnOptions,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            scene_file: None,
            mbs_source: false,
            scene: SceneConfig::default(),
            dataset: DatasetConfig { num_trajectories: 20_000, split: [0.9, 0.05, 0.05], ..DatasetConfig::default() },
            model: ModelConfig::default(),
            ffn: FfnOptions::default(),
            train: TrainConfig { max_epochs: 14, patience: 8, ..TrainConfig::default() },
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    /// A few short trajectories and a small model: a quick end-to-end run
    /// that can memorize its training windows.
    pub fn toy() -> Self {
        let mut c = Self::default();
        c.dataset.input_len = 10;
        c.dataset.output_len = 10;
        c.dataset.stride = 10;
        c.dataset.slots_per_trajectory = 20;
        c.dataset.num_trajectories = 10;
        c.dataset.split = [0.8, 0.1, 0.1];
        c.model = ModelConfig { hidden: 32, input_width: 32, embed_dim: 16, dropout: 0.0 };
        c.ffn.width = 32;
        c.train.batch_size = 8;
        c.train.max_epochs = 500;
        c.train.patience = 500;
        c.train.adam.learning_rate = 1e-2;
        c.eval.delays = vec![0, 5, 9];
        c
    }

    pub fn from_toml(text: &str, base: &Path) -> Result<Self, CliError> {
        let mut config: Self = toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        if let Some(file) = config.scene_file.take() {
            let path = base.join(file);
            let text = std::fs::read_to_string(&path)
                .map_err(|e| CliError::Usage(format!("scene file {}: {e}", path.display())))?;
            config.scene = SceneConfig::from_toml(&text).map_err(|e| CliError::Usage(e.to_string()))?;
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Apply the seed override and check cross-section constraints.
    pub fn finalize(mut self, seed: Option<u64>) -> Result<Self, CliError> {
        if let Some(seed) = seed {
            self.seed = seed;
        }
        self.train.seed = self.seed;
        self.scene_file = None;
        let usage = |m: String| Err(CliError::Usage(m));
        self.dataset.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        self.train.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        if self.dataset.source == BsId::Mbs {
            return usage("dataset.source must be an RSU; set mbs_source = true for the MBS predictor".into());
        }
        let k = self.dataset.output_len;
        if self.eval.delays.is_empty() {
            return usage("eval.delays must not be empty".into());
        }
        if let Some(d) = self.eval.delays.iter().chain([&self.eval.summary_delay]).find(|&&d| d >= k) {
            return usage(format!("delay {d} must be below dataset.output_len = {k}"));
        }
        if !self.eval.tx_snr_db.is_finite() {
            return usage("eval.tx_snr_db must be finite".into());
        }
        if self.eval.positioning_errors.iter().any(|&e| !(e >= 0.0) || !e.is_finite()) {
            return usage("eval.positioning_errors must be finite and >= 0".into());
        }
        if self.eval.batch_size == 0 {
            return usage("eval.batch_size must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.model.dropout) {
            return usage("model.dropout must lie in [0, 1)".into());
        }
        Ok(self)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// SHA-256 of the resolved configuration text.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    /// Dataset config for a given source base station.
    pub fn dataset_for(&self, source: BsId) -> DatasetConfig {
        DatasetConfig { source, ..self.dataset.clone() }
    }

    /// Source base stations with a trained sequence predictor.
    pub fn sources(&self) -> Vec<BsId> {
        let mut s = vec![self.dataset.source];
        if self.mbs_source {
            s.push(BsId::Mbs);
        }
        s
    }
}
