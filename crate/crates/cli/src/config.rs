//! Run configuration: one JSON document with a section per module, a global
//! seed, and the output directory. Unknown keys are rejected everywhere, and
//! every command writes the resolved document next to its outputs.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use hemiscan_core::explain::CounterfactualOptions;
use hemiscan_core::model::{ModelConfig, TrainPlan};
use hemiscan_core::phantom::PhantomConfig;
use hemiscan_core::pipeline::PipelineConfig;
use hemiscan_core::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Global seed; also drives training, splitting, and bootstrap streams.
    pub seed: u64,
    /// Output directory; all artifacts land beneath it.
    pub out: PathBuf,
    pub phantom: PhantomConfig,
    pub pipeline: PipelineSection,
    pub model: ModelSection,
    pub explain: ExplainSection,
    pub metrics: MetricsSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out: PathBuf::from("run"),
            phantom: PhantomConfig::default(),
            pipeline: PipelineSection::default(),
            model: ModelSection::default(),
            explain: ExplainSection::default(),
            metrics: MetricsSection::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineSection {
    pub target_slices: usize,
    pub window: [f32; 2],
    /// Patient-level train/val/test scan ratios.
    pub ratios: [f64; 3],
}

impl Default for PipelineSection {
    fn default() -> Self {
        let core = PipelineConfig::default();
        PipelineSection {
            target_slices: core.target_slices,
            window: core.window,
            ratios: [0.7, 0.15, 0.15],
        }
    }
}

impl PipelineSection {
    pub fn core(&self) -> PipelineConfig {
        PipelineConfig {
            target_slices: self.target_slices,
            window: self.window,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub arch: ModelConfig,
    pub train: TrainPlan,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExplainSection {
    pub options: CounterfactualOptions,
    pub ae_epochs: usize,
    pub ae_batch_slices: usize,
    pub ae_lr: f32,
}

impl Default for ExplainSection {
    fn default() -> Self {
        ExplainSection {
            options: CounterfactualOptions::default(),
            ae_epochs: 6,
            ae_batch_slices: 32,
            ae_lr: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsSection {
    /// Bootstrap resamples for agreement confidence intervals.
    pub n_boot: usize,
}

impl Default for MetricsSection {
    fn default() -> Self {
        MetricsSection { n_boot: 1000 }
    }
}

impl RunConfig {
    /// Load from JSON, then apply command-line overrides. The training plan's
    /// seed always follows the global seed.
    pub fn load(
        config: Option<&Path>,
        seed: Option<u64>,
        out: Option<&Path>,
    ) -> Result<RunConfig> {
        let mut cfg = match config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|_| {
                    Error::Dependency(path.display().to_string())
                })?;
                serde_json::from_str::<RunConfig>(&text)
                    .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?
            }
            None => RunConfig::default(),
        };
        if let Some(s) = seed {
            cfg.seed = s;
        }
        if let Some(o) = out {
            cfg.out = o.to_path_buf();
        }
        cfg.model.train.seed = cfg.seed;
        cfg.model.train.validate()?;
        Ok(cfg)
    }

    /// Persist the resolved configuration next to a command's outputs.
    pub fn write_resolved(&self, command: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.out)?;
        let path = self.out.join(format!("{command}.config.json"));
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Format(format!("serializing resolved config: {e}")))?;
        fs::write(&path, text + "\n")?;
        Ok(path)
    }
}
