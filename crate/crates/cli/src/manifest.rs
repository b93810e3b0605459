use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};

use crate::report::write_atomic;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellStatus {
    Done,
    Failed,
    /// Reused from an earlier run with the same config.
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub status: CellStatus,
    pub seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub tool_version: String,
    pub cells: BTreeMap<String, CellRecord>,
}

impl RunManifest {
    pub fn new(config_hash: String) -> Self {
        RunManifest {
            config_hash,
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            cells: BTreeMap::new(),
        }
    }

    /// Loads a manifest, or `None` when absent or unreadable.
    pub fn load(path: &Path) -> Option<Self> {
        let text = std::fs::read_to_string(path).ok()?;
        serde_json::from_str(&text).ok()
    }

    pub fn save(&self, path: &Path) -> anyhow::Result<()> {
        let mut json = serde_json::to_vec_pretty(self).context("serializing manifest")?;
        json.push(b'\n');
        write_atomic(path, &json)
    }

    pub fn is_complete(&self, cell: &str) -> bool {
        self.cells
            .get(cell)
            .is_some_and(|r| matches!(r.status, CellStatus::Done | CellStatus::Skipped))
    }

    pub fn failures(&self) -> usize {
        self.cells.values().filter(|r| r.status == CellStatus::Failed).count()
    }

    pub fn count(&self, status: CellStatus) -> usize {
        self.cells.values().filter(|r| r.status == status).count()
    }
}
