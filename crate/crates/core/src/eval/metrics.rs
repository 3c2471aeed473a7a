use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Result of one evaluation, serialized as one JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub task: String,
    pub dataset: String,
    pub values: BTreeMap<String, f64>,
    /// Per-run values behind the means, keyed like `values`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_run: BTreeMap<String, Vec<f64>>,
    pub runs: usize,
    pub seed: u64,
    pub config_hash: String,
}

impl Metrics {
    pub fn new(task: &str, runs: usize, seed: u64) -> Self {
        Metrics {
            task: task.to_owned(),
            dataset: String::new(),
            values: BTreeMap::new(),
            per_run: BTreeMap::new(),
            runs,
            seed,
            config_hash: String::new(),
        }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.values.insert(key.to_owned(), value);
        self
    }

    pub fn with_runs(mut self, key: &str, values: Vec<f64>) -> Self {
        self.per_run.insert(key.to_owned(), values);
        self
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }
}

/// Mean and population standard deviation; `(NaN, NaN)` for no values.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
