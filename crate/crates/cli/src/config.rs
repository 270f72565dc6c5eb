//! Settings file. Every command-line option has a field here; flags given on
//! the command line win over the file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use emgtype_core::augment::AcmConfig;
use emgtype_core::pipeline::PipelineConfig;
use emgtype_core::simulate::{RiggedParams, SimulationSpec};

use crate::CliError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub checkpoint: Option<PathBuf>,
    pub lm: Option<PathBuf>,
    /// Samples per push in `stream`.
    pub chunk: Option<usize>,
    /// Duration for `flops`.
    pub seconds: Option<f64>,
    /// Monte-Carlo draws for `augment-stats`.
    pub draws: Option<usize>,
    pub pipeline: PipelineConfig,
    pub simulation: SimulationSpec,
    pub acm: AcmConfig,
    pub rigged: RiggedParams,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))
    }
}
