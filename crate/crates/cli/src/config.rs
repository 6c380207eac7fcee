//! One JSON configuration file drives every command.
//!
//! Commands are pure functions of (config, input files, seed): the same
//! config against the same dataset produces byte-identical artifacts.
//! Every field has a default, so a config file only needs the overrides
//! and `{}` is a valid file. Individual commands expose a handful of
//! flags that override single fields after loading.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use startdet_core::eval::thresholds_with_step;
use startdet_core::mchog::MchogParams;
use startdet_core::resnet::train::{RmsPropHyper, TrainRegime};
use startdet_core::resnet::ResNetConfig;
use startdet_core::silhouette::RoiSpec;
use startdet_core::svm::SvmParams;
use startdet_core::synth::ScriptDistribution;

/// How `synth` samples and splits scenes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub n_scenes: usize,
    pub train_ratio: f64,
    pub val_ratio: f64,
    pub test_ratio: f64,
    /// Master seed; per-scene seeds derive from it.
    pub seed: u64,
    pub distribution: ScriptDistribution,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            n_scenes: 100,
            train_ratio: 0.6,
            val_ratio: 0.2,
            test_ratio: 0.2,
            seed: 42,
            distribution: ScriptDistribution::default(),
        }
    }
}

/// Network optimizer and schedule settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// RMSProp accumulator decay rate.
    pub decay: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub validation_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let hyper = RmsPropHyper::default();
        let regime = TrainRegime::default();
        Self {
            learning_rate: hyper.learning_rate,
            decay: hyper.decay,
            epsilon: hyper.epsilon,
            batch_size: regime.batch_size,
            iterations: regime.iterations,
            validation_every: regime.validation_every,
            seed: regime.seed,
        }
    }
}

impl TrainConfig {
    /// Expand into the training regime, sweeping the given thresholds
    /// during validation.
    pub fn regime(&self, thresholds: Vec<f64>) -> TrainRegime {
        TrainRegime {
            hyper: RmsPropHyper {
                learning_rate: self.learning_rate,
                decay: self.decay,
                epsilon: self.epsilon,
            },
            batch_size: self.batch_size,
            iterations: self.iterations,
            validation_every: self.validation_every,
            seed: self.seed,
            thresholds,
        }
    }
}

/// Grid searched by `sweep-mchog`: the cross product of cell sizes and
/// bin counts, each trained at every C.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepGrid {
    pub cell_w: Vec<u32>,
    pub cell_h: Vec<u32>,
    pub n_bins: Vec<u32>,
    pub c: Vec<f64>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            cell_w: vec![8, 16, 32],
            cell_h: vec![8, 16, 32],
            n_bins: vec![6, 12, 16],
            c: (-8..=4).map(|k| (k as f64).exp2()).collect(),
        }
    }
}

impl SweepGrid {
    pub fn n_rows(&self) -> usize {
        self.cell_w.len() * self.cell_h.len() * self.n_bins.len() * self.c.len()
    }
}

/// Everything the pipeline commands need, in one place.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct PipelineConfig {
    pub roi: RoiSpec,
    pub mhi: MhiConfig,
    pub mchog: MchogParams,
    pub svm: SvmParams,
    pub sweep: SweepGrid,
    pub resnet: ResNetConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub dataset: DatasetConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MhiConfig {
    /// History depth N: frames per motion history image.
    pub depth: u32,
}

impl Default for MhiConfig {
    fn default() -> Self {
        Self { depth: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Spacing of the detection-threshold sweep over [0, 1].
    pub threshold_step: f64,
    /// Keep every k-th frame of each training scene when extracting
    /// descriptor samples.
    pub frame_stride: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            threshold_step: 0.02,
            frame_stride: 1,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        let config: Self = serde_json::from_slice(&bytes)
            .with_context(|| format!("parsing {}", path.display()))?;
        Ok(config)
    }

    /// Reject configurations whose parts cannot work together before any
    /// command starts producing output.
    pub fn validate(&self) -> Result<()> {
        self.roi.validate().context("roi")?;
        self.mchog.validate().context("mchog")?;
        self.resnet.validate().context("resnet")?;
        if self.mhi.depth == 0 {
            bail!("mhi.depth must be at least 1");
        }
        if !(self.eval.threshold_step > 0.0 && self.eval.threshold_step <= 1.0) {
            bail!(
                "eval.threshold_step must be in (0, 1], got {}",
                self.eval.threshold_step
            );
        }
        if self.eval.frame_stride == 0 {
            bail!("eval.frame_stride must be at least 1");
        }
        if self.dataset.n_scenes == 0 {
            bail!("dataset.n_scenes must be at least 1");
        }
        let ratios =
            self.dataset.train_ratio + self.dataset.val_ratio + self.dataset.test_ratio;
        if (ratios - 1.0).abs() > 1e-9 {
            bail!("dataset split ratios sum to {ratios}, not 1");
        }
        if self.train.batch_size == 0 || self.train.iterations == 0 {
            bail!("train.batch_size and train.iterations must be at least 1");
        }
        if self.sweep.n_rows() == 0 {
            bail!("sweep grid is empty: every axis needs at least one value");
        }
        Ok(())
    }

    /// The detection thresholds swept by validation and evaluation.
    pub fn thresholds(&self) -> Vec<f64> {
        thresholds_with_step(self.eval.threshold_step)
    }
}
