//! The JSON run record and the pass/fail checks it carries.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::{Experiment, ExperimentConfig};

/// One acceptance property evaluated on a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    /// `None` when a variant the check needs was filtered out or failed.
    pub passed: Option<bool>,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            passed: Some(passed),
            detail: detail.into(),
        }
    }

    pub fn skipped(name: impl Into<String>, why: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            passed: None,
            detail: why.into(),
        }
    }
}

/// Everything needed to reproduce and judge a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub tool: String,
    pub version: String,
    pub experiment: Experiment,
    pub config: ExperimentConfig,
    /// Relative l2 errors keyed by target (variant, size, time...).
    pub errors: BTreeMap<String, f64>,
    /// Learned log hyperparameters in the flat layout.
    pub hyperparameters: BTreeMap<String, Vec<f64>>,
    pub nlml: BTreeMap<String, f64>,
    /// Variants whose training or solve failed, with the error message.
    pub failures: BTreeMap<String, String>,
    pub checks: Vec<Check>,
    /// Wall-clock seconds per trained variant.
    #[serde(default)]
    pub seconds: BTreeMap<String, f64>,
    pub elapsed_seconds: f64,
}

impl RunRecord {
    pub fn new(experiment: Experiment, config: &ExperimentConfig) -> Self {
        let mut config = config.clone();
        config.experiment = Some(experiment);
        RunRecord {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            experiment,
            config,
            errors: BTreeMap::new(),
            hyperparameters: BTreeMap::new(),
            nlml: BTreeMap::new(),
            failures: BTreeMap::new(),
            checks: Vec::new(),
            seconds: BTreeMap::new(),
            elapsed_seconds: 0.0,
        }
    }

    /// True when no evaluated check failed.
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed != Some(false))
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}
