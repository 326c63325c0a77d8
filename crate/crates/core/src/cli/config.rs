use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::data::Cohort;
use crate::error::{Error, Result};
use crate::experiment::{default_p_grid, StudyConfig, TrainConfig};
use crate::model::{ArchitectureConfig, ArchitectureKind, GpsrOutput};

/// Layer sizes and regularization; input and task widths come from the cohort.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden: usize,
    pub embed: usize,
    /// Branch widths of the two-branch kind; default to `embed`.
    pub target_branch: Option<usize>,
    pub gpsr_branch: Option<usize>,
    pub emb_dropout: f64,
    pub branch_dropout: f64,
    pub gpsr_output: GpsrOutput,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: 32,
            embed: 16,
            target_branch: None,
            gpsr_branch: None,
            emb_dropout: 0.0,
            branch_dropout: 0.0,
            gpsr_output: GpsrOutput::Sigmoid,
        }
    }
}

impl ModelConfig {
    pub fn architecture(&self, kind: ArchitectureKind, cohort: &Cohort) -> Result<ArchitectureConfig> {
        let obs = &cohort.meta.observations;
        let mut arch = ArchitectureConfig::new(kind, obs.input_width(), self.hidden, self.embed, obs.task_layout());
        arch.target_branch = self.target_branch.unwrap_or(self.embed);
        arch.gpsr_branch = self.gpsr_branch.unwrap_or(self.embed);
        arch.emb_dropout = self.emb_dropout;
        arch.branch_dropout = self.branch_dropout;
        arch.gpsr_output = self.gpsr_output;
        arch.validate()?;
        Ok(arch)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub grid: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { grid: default_p_grid() }
    }
}

/// Configuration shared by `train`, `sweep-p` and the ablation commands.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Cohort archive directory, relative to the config file.
    pub cohort: PathBuf,
    #[serde(default = "default_kind")]
    pub kind: ArchitectureKind,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub study: StudyConfig,
}

fn default_kind() -> ArchitectureKind {
    ArchitectureKind::EvtGpsr
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.study.validate()?;
        if self.sweep.grid.is_empty() {
            return Err(Error::invalid("sweep.grid", "at least one loss weight is required"));
        }
        Ok(())
    }
}

/// Parses a TOML config, reporting the file, line and field of any error.
pub fn load_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Data(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| {
        let line = e.span().map_or(0, |s| text[..s.start].matches('\n').count() as u64 + 1);
        Error::Malformed {
            path: path.to_path_buf(),
            line,
            message: e.message().to_string(),
        }
    })
}

/// Resolves a path from a config file against the file's directory.
pub fn resolve(config_path: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        config_path.parent().unwrap_or(Path::new(".")).join(p)
    }
}
