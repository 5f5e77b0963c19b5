use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::config::SimConfig;
use super::engine::SimInput;
use super::SimError;
use crate::catalog::{load_catalog, Catalog};
use crate::perfmodel::{load_benchmarks, BenchmarkRecord};
use crate::workload::{load_workload, EnsembleSpec};

/// Scenario document. Paths are relative to the scenario file.
#[derive(Debug, Clone, Deserialize)]
pub struct ScenarioFile {
    pub catalog: PathBuf,
    pub workload: PathBuf,
    pub benchmarks: Vec<PathBuf>,
    #[serde(default)]
    pub description: String,
    #[serde(flatten)]
    pub config: SimConfig,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub path: PathBuf,
    pub description: String,
    pub catalog: Catalog,
    pub workload: EnsembleSpec,
    pub records: Vec<BenchmarkRecord>,
    pub config: SimConfig,
}

impl Scenario {
    pub fn into_input(self) -> Result<SimInput, SimError> {
        SimInput::from_ensemble(self.catalog, &self.workload, self.records, self.config)
    }
}

pub fn parse_scenario(text: &str) -> Result<ScenarioFile, SimError> {
    serde_json::from_str(text).map_err(|e| SimError::Config(format!("scenario: {e}")))
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, SimError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| SimError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let file = parse_scenario(&text)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let catalog = load_catalog(base.join(&file.catalog))?;
    let workload = load_workload(base.join(&file.workload))?;
    let mut records = Vec::new();
    for b in &file.benchmarks {
        records.extend(load_benchmarks(base.join(b))?);
    }
    Ok(Scenario {
        path: path.to_path_buf(),
        description: file.description,
        catalog,
        workload,
        records,
        config: file.config,
    })
}
